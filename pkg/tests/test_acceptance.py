"""Acceptance criteria, one test each.

Every test prints a single ``[criterion N] PASS|FAIL ...`` line (collected and
repeated in the pytest terminal summary) and asserts the same condition at the
stated tolerance. Run directly with ``python tests/test_acceptance.py`` to get
just the report.
"""

import sys
import time

import numpy as np
import pytest

from ccnrtrl.compute import estimate_ops, measure_ops
from ccnrtrl.config import load_config
from ccnrtrl.feature_norm import RunningMoments, observe_and_normalize
from ccnrtrl.network import Network, StageSpec, column_independence_check
from ccnrtrl.runner import Session, run_experiment
from ccnrtrl.tbptt import DenseLSTM
from ccnrtrl.td import LearnerConfig, TDLearner
from ccnrtrl.verify import verify_gradients

REPORT = []


def record(n, ok, detail, started):
    line = f"[criterion {n}] {'PASS' if ok else 'FAIL'} {detail} ({time.time() - started:.1f}s)"
    REPORT.append(line)
    print(line)
    return ok


def test_1_gradient_exactness():
    t0 = time.time()
    rows = [verify_gradients(top, instances=50, steps=200, fd_checks=50)
            for top in ("columnar", "ccn", "constructive")]
    ok = all(r["max_abs"] <= 1e-10 and r["max_fd_rel"] <= 1e-5 for r in rows)
    detail = "; ".join(f"{r['topology']} |fwd-bptt|={r['max_abs']:.1e} fd rel={r['max_fd_rel']:.1e}"
                       for r in rows)
    assert record(1, ok, "50 instances x 200 steps: " + detail, t0)


def test_2_width_one_equivalence():
    t0 = time.time()
    worst = 0.0
    for seed in range(3):
        rng = np.random.default_rng(seed)
        col = Network(5, StageSpec.columnar(1), seed=seed, normalize=False)
        dense = DenseLSTM(5, 1, None, seed=seed)
        obs = rng.uniform(-1, 1, (1000, 5))
        cum = rng.normal(size=1000)
        cfg = LearnerConfig(step_size=1e-2, gamma=0.9, lam=0.9, optimizer="sgd")
        TDLearner(col, cfg).run(obs, cum)
        TDLearner(dense, cfg).run(obs, cum)
        a = np.concatenate([col.theta[col.column_slice(0)], [col.theta[col.w_off[0]]]])
        b = np.concatenate([dense.W[:, 0, :].ravel(), dense.U[:, 0, 0], dense.b[:, 0], dense.w])
        worst = max(worst, float(np.max(np.abs(a - b))))
    assert record(2, worst <= 1e-9, f"max |theta diff| after 1000 sgd steps = {worst:.1e} "
                  "(<= 1e-9)", t0)


def test_3_truncation_bias_monotone():
    t0 = time.time()
    curves = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        net = DenseLSTM(5, 3, None, seed=seed)
        net.theta[:] = rng.uniform(-1, 1, net.n_params)
        for x in rng.uniform(-1, 1, (60, 5)):
            net.step(x)
        full = net.truncated_gradient()
        curves.append([np.linalg.norm(net.truncated_gradient(k) - full) for k in range(1, 21)])
    mean = np.mean(curves, axis=0)
    ok = bool(np.all(np.diff(mean) <= 0.0))
    assert record(3, ok, f"mean ||g_k - g_inf|| k=1..20 non-increasing: {mean[0]:.3g} -> "
                  f"{mean[-1]:.3g}", t0)


def test_4_compute_budget():
    t0 = time.time()
    exact = (estimate_ops("columnar", 12, d=10), estimate_ops("ccn", 12, d=16, u=4),
             estimate_ops("tbptt", 12, d=4, k=15))
    ok = exact == (3920, 3360, 4352)
    parts = []
    for top, kw in (("columnar", dict(d=10)), ("ccn", dict(d=16, u=4)),
                    ("constructive", dict(d=5)), ("tbptt", dict(d=4, k=15))):
        est = estimate_ops(top, 12, **kw)
        got = measure_ops(top, 12, steps=200, **kw)
        rel = got / est - 1
        ok &= abs(rel) <= 0.35
        parts.append(f"{top} {got:.0f}/{est} ({rel:+.0%})")
    assert record(4, ok, f"estimates {exact}; measured/estimate: " + ", ".join(parts), t0)


def test_5_normalization():
    t0 = time.time()
    rng = np.random.default_rng(0)
    m = RunningMoments()
    warm = int(10 / (1 - m.beta))
    for h in rng.exponential(2.0, warm):
        observe_and_normalize(m, float(h))
    out = np.array([observe_and_normalize(m, float(h)) for h in rng.exponential(2.0, 100_000)])
    mean, var = float(out.mean()), float(out.var())
    bound_ok = True
    for stream in (np.full(20_000, 4.0), rng.normal(0, 1e-4, 20_000), np.tile([5.0, -5.0], 5000),
                   rng.normal(3, 10, 20_000)):
        s = RunningMoments()
        for h in stream:
            hh = observe_and_normalize(s, float(h))
            bound_ok &= abs(hh) <= abs(h - s.mu) / s.eps
    ok = -0.05 <= mean <= 0.05 and 0.8 <= var <= 1.2 and bound_ok
    assert record(5, ok, f"stationary mean {mean:+.4f}, var {var:.4f}; floor bound held: "
                  f"{bound_ok}", t0)


def test_6_trace_patterning_learning():
    t0 = time.time()
    cfg = load_config("desk_ccn")
    assert (cfg.features_per_stage, cfg.steps_per_stage, cfg.total_steps) == (4, 250_000, 1_000_000)
    ratios, finals, zeros = [], [], []
    for seed in range(10):
        s = Session(cfg, seed)
        s.advance(cfg.window)
        first = s.stats.error
        targets = None
        while s.t < cfg.total_steps:
            _, targets = s.advance(cfg.window)
        finals.append(s.stats.error)
        zeros.append(float(np.nanmean(targets ** 2)))
        ratios.append(s.stats.error / first)
    halved = sum(r <= 0.5 for r in ratios)
    below_zero = float(np.mean(finals)) < float(np.mean(zeros))
    ok = halved >= 9 and below_zero
    assert record(6, ok, f"final/first window error per seed {np.round(ratios, 3).tolist()} "
                  f"({halved}/10 <= 0.5); mean final {np.mean(finals):.5f} vs zero predictor "
                  f"{np.mean(zeros):.5f}", t0)


def test_7_staging():
    t0 = time.time()
    cfg = load_config("desk_ccn", ["steps_per_stage=20000", "total_steps=80000",
                                    "step_size=1e-3"])
    s = Session(cfg, 0)
    net = s.net
    u = cfg.features_per_stage
    snaps = []
    ok = True
    while s.t < cfg.total_steps:
        s.advance(5000)
        for stage, params, mu, var, heads in snaps:
            lo, hi = stage * u, (stage + 1) * u
            cols = np.concatenate([net.theta[net.column_slice(k)] for k in range(lo, hi)])
            ok &= cols.tobytes() == params and net.mu[lo:hi].tobytes() == mu
            ok &= net.var[lo:hi].tobytes() == var
        if net.stage > len(snaps):
            stage = len(snaps)
            lo, hi = stage * u, (stage + 1) * u
            cols = np.concatenate([net.theta[net.column_slice(k)] for k in range(lo, hi)])
            snaps.append((stage, cols.tobytes(), net.mu[lo:hi].tobytes(), net.var[lo:hi].tobytes(),
                          net.head_weights()[lo:hi].copy()))
    moved = all(not np.array_equal(net.head_weights()[st * u:(st + 1) * u], heads)
                for st, _, _, _, heads in snaps)
    ok = ok and moved and len(snaps) == 3
    assert record(7, ok, f"{len(snaps)} freezes: frozen columns and statistics bit-identical, "
                  f"frozen head weights kept learning: {moved}", t0)


def test_8_column_independence():
    t0 = time.time()
    worst = 0.0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        net = Network(12, StageSpec.columnar(5), seed=seed)
        net.theta[:] = rng.uniform(-1, 1, net.n_params)
        for k in range(5):
            worst = max(worst, column_independence_check(net, k, seed=seed))
    assert record(8, worst == 0.0, f"max cross-column response over 10 nets = {worst!r}", t0)


def test_9_determinism_and_resume(tmp_path):
    t0 = time.time()
    cfg = load_config("desk_ccn", ["total_steps=30000", "steps_per_stage=8000", "seeds=0,1",
                                    "step_size=1e-3"])
    dirs = [run_experiment(cfg, tmp_path / name) for name in ("a", "b")]
    blobs = [{p.relative_to(d).as_posix(): p.read_bytes() for p in d.rglob("*") if p.is_file()}
             for d in dirs]
    same = blobs[0] == blobs[1]
    whole = Session(cfg, 1)
    whole.advance(10_000)
    whole.save(tmp_path / "mid.ckpt")
    ref, _ = whole.advance(10_000)
    resumed = Session.restore(cfg, tmp_path / "mid.ckpt")
    got, _ = resumed.advance(10_000)
    resumes = got.tobytes() == ref.tobytes() and whole.net.theta.tobytes() == resumed.net.theta.tobytes()
    assert record(9, same and resumes, f"reruns byte-identical: {same}; resumed 10k steps "
                  f"identical: {resumes}", t0)


if __name__ == "__main__":
    import tempfile
    from pathlib import Path

    failed = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_") and callable(fn):
            try:
                if "tmp_path" in fn.__code__.co_varnames[:fn.__code__.co_argcount]:
                    with tempfile.TemporaryDirectory() as d:
                        fn(Path(d))
                else:
                    fn()
            except AssertionError:
                failed += 1
    sys.exit(1 if failed else 0)
