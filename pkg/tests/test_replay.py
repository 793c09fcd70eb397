import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from ccnrtrl import checkpoint
from ccnrtrl.config import ExperimentConfig
from ccnrtrl.envs import TraceConfig, TracePatterning
from ccnrtrl.replay import (BadMagic, StepRecord, StreamHeader, StreamReader, TruncatedStream,
                            WidthMismatch, import_csv, read_stream, write_arrays, write_stream)
from ccnrtrl.runner import Session


def test_empty_stream(tmp_path):
    p = tmp_path / "empty.bin"
    write_stream(p, StreamHeader(width=4), [])
    assert list(read_stream(p)) == []


def test_size_arithmetic(tmp_path):
    p = tmp_path / "three.bin"
    recs = [StepRecord(np.arange(5.0) + i, 0.0, i == 2) for i in range(3)]
    h = write_stream(p, StreamHeader(width=5, has_terminal=True, meta="three"), recs)
    assert p.stat().st_size == h.size + 3 * (8 * 5 + 1)
    first = p.read_bytes()
    write_stream(p, StreamHeader(width=5, has_terminal=True, meta="three"), recs)
    assert p.read_bytes() == first
    back = list(read_stream(p))
    assert [r.terminal for r in back] == [False, False, True]
    assert back[1].cumulant == 5.0


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(0, 20), st.integers(1, 6)),
              elements=st.floats(allow_nan=False, allow_infinity=False)))
def test_lossless_round_trip(tmp_path_factory, data):
    p = tmp_path_factory.mktemp("rt") / "s.bin"
    write_arrays(p, data, cumulant_index=0)
    r = StreamReader(p)
    obs, cum, _ = r.block()
    assert obs.tobytes() == data.tobytes()
    assert np.array_equal(cum, data[:, 0])
    q = p.with_suffix(".again")
    write_arrays(q, obs, cumulant_index=0)
    assert q.read_bytes() == p.read_bytes()


def test_random_access(tmp_path):
    data = np.arange(40.0).reshape(10, 4)
    p = tmp_path / "s.bin"
    write_arrays(p, data)
    r = StreamReader(p)
    assert r[7].observation.tolist() == data[7].tolist() and r[-1].cumulant == 39.0
    with pytest.raises(IndexError):
        r[10]


def test_distinct_errors(tmp_path):
    p = tmp_path / "s.bin"
    write_arrays(p, np.ones((4, 3)))
    with pytest.raises(WidthMismatch):
        StreamReader(p, width=4)
    cut = tmp_path / "cut.bin"
    cut.write_bytes(p.read_bytes()[:-5])
    with pytest.raises(TruncatedStream):
        StreamReader(cut)
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"NOTASTRM" + p.read_bytes()[8:])
    with pytest.raises(BadMagic):
        StreamReader(bad)


def test_clipping_and_csv(tmp_path):
    src = tmp_path / "in.csv"
    src.write_text("a,b,reward,done\n0.5,1,3.0,0\n0.1,2,-7.5,1\n0.2,3,0.25,0\n")
    h = import_csv(src, tmp_path / "out.bin", cumulant_index=2, terminal_column=3, clip=True)
    assert h.clipped and h.width == 3
    obs, cum, term = StreamReader(tmp_path / "out.bin").block()
    assert cum.tolist() == [1.0, -1.0, 0.25]
    assert term.tolist() == [False, True, False]
    assert obs[:, 1].tolist() == [1.0, 2.0, 3.0]
    bad = tmp_path / "ragged.csv"
    bad.write_text("1,2\n3\n")
    with pytest.raises(WidthMismatch):
        import_csv(bad, tmp_path / "x.bin")


def test_replayed_stream_matches_live_generation(tmp_path):
    obs, _, _ = TracePatterning(TraceConfig(seed=4)).generate(30_000)
    path = tmp_path / "trace.bin"
    write_arrays(path, obs)
    base = dict(total_steps=20_000, features=8, features_per_stage=4, steps_per_stage=5_000,
                window=1000, step_size=1e-3)
    live = Session(ExperimentConfig(**base), seed=4)
    replay = Session(ExperimentConfig(env="replay", stream_path=str(path), **base), seed=4)
    for s in (live, replay):
        s.advance(20_000)
    assert live.net.stage == 1
    assert np.max(np.abs(live.net.theta - replay.net.theta)) <= 1e-12


def test_checkpoint_round_trip(tmp_path):
    sections = {"a/x": np.arange(6.0).reshape(2, 3), "b": np.array([1, -2], dtype=np.int64),
                "c": np.frombuffer(b"hello", dtype=np.uint8), "d": np.float64(3.5)}
    blob = checkpoint.dumps(sections)
    back = checkpoint.loads(blob)
    assert checkpoint.dumps(back) == blob
    assert back["a/x"].shape == (2, 3) and back["b"].dtype == np.int64
    p = tmp_path / "c.ckpt"
    checkpoint.save(p, sections)
    assert p.read_bytes() == blob
    assert checkpoint.unprefixed("a", back).keys() == {"x"}
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.loads(blob[:-1])
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.loads(b"XXXXXXXX" + blob[8:])
