"""
Recording a stream and learning from the file
=============================================

Writes 50k trace-patterning steps to a stream file, then trains two identical
learners: one on the live generator, one on the file. Their parameters agree.
"""

import tempfile
from pathlib import Path

import numpy as np

from ccnrtrl.config import ExperimentConfig
from ccnrtrl.envs import TraceConfig, TracePatterning
from ccnrtrl.replay import StreamReader, write_arrays
from ccnrtrl.runner import Session

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "trace.bin"
    obs, _, _ = TracePatterning(TraceConfig(seed=1)).generate(50_000)
    header = write_arrays(path, obs, meta="trace patterning, seed 1")
    print(f"{path.name}: {header.count} records x {header.width} values, "
          f"{path.stat().st_size} bytes, cumulant column {header.cumulant_column}")

    reader = StreamReader(path)
    print("record 0:", reader[0].observation)

    common = dict(total_steps=40_000, features=8, features_per_stage=4, steps_per_stage=20_000)
    live = Session(ExperimentConfig(**common), seed=1)
    replay = Session(ExperimentConfig(env="replay", stream_path=str(path), **common), seed=1)
    for s in (live, replay):
        s.advance(40_000)
    print("max |theta live - theta replay|:", np.abs(live.net.theta - replay.net.theta).max())
    print("windowed error live / replay:", live.stats.error, replay.stats.error)
