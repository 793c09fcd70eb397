"""Multi-seed experiment runner: learning curves, summaries and checkpoints."""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import checkpoint
from .compute import estimate_ops
from .config import ExperimentConfig
from .envs.trace_pattern import TraceConfig, TracePatterning, ground_truth_returns, return_horizon
from .errors import NumericFault, UsageError
from .metrics import RunStats
from .network import Network, StageSpec
from .replay import StreamReader
from .tbptt import DenseLSTM
from .td import LearnerConfig, TDLearner

WORKERS_ENV = "CCNRTRL_WORKERS"


# ---------------------------------------------------------------------------
# Data sources with random access to upcoming records
# ---------------------------------------------------------------------------


class TraceSource:
    """Trace-patterning records addressed by absolute step, generated on demand."""

    def __init__(self, cfg: ExperimentConfig, seed: int):
        self.env = TracePatterning(TraceConfig(
            isi_min=cfg.isi_min, isi_max=cfg.isi_max, iti_min=cfg.iti_min,
            iti_max=cfg.iti_max, n_positive=cfg.n_positive, noise=cfg.noise,
            gamma=cfg.gamma, seed=seed))
        self.width = self.env.cfg.width
        self.length = None
        self._base = 0
        self._obs = np.zeros((0, self.width))

    def block(self, start, stop):
        if start < self._base:
            raise UsageError("trace source cannot go back in time")
        have = self._base + len(self._obs)
        if start >= have:
            # nothing buffered is needed any more (e.g. after a restore)
            self.env.skip(start - have)
            self._obs = self._obs[:0]
            have = start
        else:
            self._obs = self._obs[start - self._base:]
        self._base = start
        if stop > have:
            new, _, _ = self.env.generate(stop - have)
            self._obs = np.concatenate([self._obs, new])
        obs = self._obs[:stop - start]
        return obs, obs[:, -1].copy(), np.zeros(len(obs), dtype=bool)


class ReplaySource:
    def __init__(self, cfg: ExperimentConfig, seed: int):
        self.reader = StreamReader(cfg.stream_path)
        self.width = self.reader.header.width
        self.length = len(self.reader)

    def block(self, start, stop):
        return self.reader.block(start, min(stop, self.length))


def make_source(cfg, seed):
    return ReplaySource(cfg, seed) if cfg.env == "replay" else TraceSource(cfg, seed)


# ---------------------------------------------------------------------------
# One seed
# ---------------------------------------------------------------------------


def build_network(cfg: ExperimentConfig, n_obs: int, seed: int):
    scale = cfg.init_scale or None
    if cfg.topology == "tbptt":
        return DenseLSTM(n_obs, cfg.features, cfg.truncation, seed=seed,
                         normalize=cfg.use_normalization, norm_beta=cfg.norm_beta,
                         norm_eps=cfg.norm_eps, init_scale=scale)
    if cfg.topology == "columnar":
        spec = StageSpec(cfg.features, cfg.steps_per_stage, 1)
    elif cfg.topology == "constructive":
        spec = StageSpec(1, cfg.steps_per_stage, cfg.features)
    else:
        spec = StageSpec(cfg.features_per_stage, cfg.steps_per_stage,
                         cfg.features // cfg.features_per_stage)
    return Network(n_obs, spec, seed=seed, normalize=cfg.use_normalization,
                   norm_beta=cfg.norm_beta, norm_eps=cfg.norm_eps, init_scale=scale,
                   forget_bias=cfg.forget_bias)


def learner_config(cfg: ExperimentConfig):
    return LearnerConfig(step_size=cfg.step_size, gamma=cfg.gamma, lam=cfg.lam,
                         optimizer=cfg.optimizer, beta2=cfg.beta2, eps_opt=cfg.eps_opt,
                         bias_correction=cfg.bias_correction)


def current_ops(cfg: ExperimentConfig, net, m):
    """Closed-form per-step operations of the network as currently grown."""
    if cfg.topology == "tbptt":
        return estimate_ops("tbptt", m, d=cfg.features, k=cfg.truncation)
    if cfg.topology == "columnar":
        return estimate_ops("columnar", m, d=cfg.features)
    u = 1 if cfg.topology == "constructive" else cfg.features_per_stage
    return estimate_ops("ccn", m, d=net.n_live, u=u)


class Session:
    """Network, learner, data source and metrics of a single seed."""

    def __init__(self, cfg: ExperimentConfig, seed: int):
        self.cfg = cfg
        self.seed = seed
        self.source = make_source(cfg, seed)
        self.net = build_network(cfg, self.source.width, seed)
        self.learner = TDLearner(self.net, learner_config(cfg))
        self.stats = RunStats(cfg.window)
        self.t = 0
        self.horizon = return_horizon(cfg.gamma)

    @property
    def n_obs(self):
        return self.source.width

    def advance(self, n):
        """Learn from the next ``n`` records; returns (predictions, targets)."""
        if self.source.length is not None:
            n = min(n, self.source.length - self.t)
        if n <= 0:
            return np.zeros(0), np.zeros(0)
        obs, cum, term = self.source.block(self.t, self.t + n + self.horizon)
        ops = current_ops(self.cfg, self.net, self.n_obs)
        preds, _ = self.learner.run(obs[:n], cum[:n], term[:n])
        targets = ground_truth_returns(cum, self.cfg.gamma, term)[:n]
        self.stats.add(preds, targets, ops)
        self.t += n
        return preds, targets

    def stage(self):
        return getattr(self.net, "stage", 0)

    # -- persistence -------------------------------------------------------

    def state_sections(self):
        out = {"session/counters": np.array([self.seed, self.t], dtype=np.int64)}
        out.update(checkpoint.prefixed("net", self.net.state_arrays()))
        out.update(checkpoint.prefixed("learner", self.learner.state_arrays()))
        out.update(checkpoint.prefixed("stats", self.stats.state_arrays()))
        return out

    def save(self, path):
        checkpoint.save(path, self.state_sections())

    @classmethod
    def restore(cls, cfg, path):
        sections = checkpoint.load(path)
        seed, t = (int(v) for v in sections["session/counters"])
        s = cls(cfg, seed)
        s.net.load_state_arrays(checkpoint.unprefixed("net", sections))
        s.learner.load_state_arrays(checkpoint.unprefixed("learner", sections))
        s.stats.load_state_arrays(checkpoint.unprefixed("stats", sections))
        s.t = t
        return s


def _fmt(x):
    return repr(float(x)) if math.isfinite(x) else "nan"


def run_seed(cfg: ExperimentConfig, seed: int, out_dir):
    """Run one seed; writes its curve, final checkpoint, or a fault record."""
    out_dir = Path(out_dir)
    curve = out_dir / "curves" / f"seed_{seed}.csv"
    curve.parent.mkdir(parents=True, exist_ok=True)
    session = Session(cfg, seed)
    total = cfg.total_steps
    if session.source.length is not None:
        total = min(total, session.source.length)
    with open(curve, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "error", "ops", "stage"])
        while session.t < total:
            n = min(cfg.log_every - session.t % cfg.log_every, total - session.t)
            try:
                session.advance(n)
            except NumericFault as exc:
                fault = out_dir / "faults" / f"seed_{seed}.json"
                fault.parent.mkdir(parents=True, exist_ok=True)
                fault.write_text(json.dumps({"seed": seed, "message": str(exc),
                                             **_jsonable(exc.diagnostics)}, indent=2))
                return {"seed": seed, "status": "fault", "step": session.net.t}
            ops = current_ops(cfg, session.net, session.n_obs)
            w.writerow([session.t, _fmt(session.stats.error), ops, session.stage()])
    ckpt = out_dir / "checkpoints" / f"seed_{seed}.ckpt"
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    session.save(ckpt)
    return {"seed": seed, "status": "ok", "step": session.t, "error": session.stats.error}


def _jsonable(d):
    out = {}
    for k, v in d.items():
        if isinstance(v, np.ndarray):
            v = v.tolist()
        elif isinstance(v, np.generic):
            v = v.item()
        out[k] = v
    return out


def _run_seed_args(args):
    return run_seed(*args)


def worker_count(cfg):
    env = os.environ.get(WORKERS_ENV)
    n = int(env) if env else cfg.workers
    return max(1, min(n, len(cfg.seeds)))


def run_experiment(cfg: ExperimentConfig, out_dir=None):
    """Run every seed (in parallel worker processes when allowed) and summarize."""
    out_dir = Path(out_dir) if out_dir is not None else Path(cfg.output_dir) / cfg.name
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.cfg").write_text(cfg.to_text())
    jobs = [(cfg, seed, out_dir) for seed in cfg.seeds]
    workers = worker_count(cfg)
    if workers == 1:
        results = [run_seed(*job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_seed_args, jobs))
    summarize(out_dir)
    (out_dir / "results.json").write_text(json.dumps(results, indent=2, default=float))
    return out_dir


def summarize(out_dir):
    """Mean and standard error across seeds at every logged step -> summary.csv."""
    out_dir = Path(out_dir)
    rows = {}
    for path in sorted((out_dir / "curves").glob("seed_*.csv")):
        with open(path, newline="") as fh:
            for r in csv.DictReader(fh):
                e = float(r["error"])
                if math.isfinite(e):
                    rows.setdefault(int(r["step"]), []).append(e)
    summary = out_dir / "summary.csv"
    with open(summary, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "mean", "stderr", "n"])
        for step in sorted(rows):
            v = np.asarray(rows[step])
            se = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
            w.writerow([step, _fmt(v.mean()), _fmt(se), len(v)])
    return summary
