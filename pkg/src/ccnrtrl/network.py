"""Staged columnar LSTM networks: Columnar, Constructive and CCN topologies.

All stages are laid out up front in one flat parameter vector. The block of
stage ``s`` holds the head weights of its ``u`` features followed by the
``u`` columns (``4 m_s + 8`` entries each, ``m_s = n_obs + s u``). Parameters
that exist at any moment therefore form a prefix of that vector, which lets the
learner treat the network as a single growing parameter array.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import NumericFault, UsageError
from .feature_norm import DEFAULT_BETA, DEFAULT_EPS
from .lstm_column import ColumnParams, n_column_params

_FLOAT_STATE = ("theta", "h", "c", "cache", "TH", "TC", "mu", "var", "inp", "hhat", "grad")


@dataclass(frozen=True)
class StageSpec:
    features_per_stage: int
    steps_per_stage: int
    total_stages: int = 1

    def __post_init__(self):
        for name in ("features_per_stage", "steps_per_stage", "total_stages"):
            if int(getattr(self, name)) < 1:
                raise UsageError(f"{name} must be a positive integer")

    @property
    def topology(self):
        if self.total_stages == 1:
            return "columnar"
        return "constructive" if self.features_per_stage == 1 else "ccn"

    @property
    def total_features(self):
        return self.features_per_stage * self.total_stages

    @classmethod
    def columnar(cls, d):
        return cls(features_per_stage=d, steps_per_stage=1, total_stages=1)


class Network:
    """Columns grouped into stages, a linear head and optional feature normalization.

    Args:
        n_obs: observation width.
        spec: stage layout.
        seed: seed of the generator used to initialize each new stage.
        normalize: normalize every feature before it is used.
        norm_beta, norm_eps: running-moment decay and scale floor.
        init_scale: half-width of the uniform weight initialization; defaults to
            ``1/sqrt(m)`` for a column with input width ``m``.
        forget_bias: initial forget-gate bias of every new column (other biases
            start at zero).
    """

    def __init__(self, n_obs: int, spec: StageSpec, *, seed=0, normalize=True,
                 norm_beta=DEFAULT_BETA, norm_eps=DEFAULT_EPS, init_scale=None,
                 forget_bias=0.0):
        if n_obs < 1:
            raise UsageError("observation width must be >= 1")
        self.n_obs = int(n_obs)
        self.spec = spec
        self.normalize = bool(normalize)
        self.norm_beta = float(norm_beta)
        self.norm_eps = float(norm_eps)
        self.init_scale = init_scale
        self.forget_bias = float(forget_bias)
        self.rng = np.random.default_rng(seed)

        u = spec.features_per_stage
        K = spec.total_features
        self.w_off = np.zeros(K, dtype=np.int64)
        self.col_off = np.zeros(K, dtype=np.int64)
        self.col_m = np.zeros(K, dtype=np.int64)
        self.stage_end = np.zeros(spec.total_stages, dtype=np.int64)
        pos = 0
        for s in range(spec.total_stages):
            m_s = self.n_obs + s * u
            for j in range(u):
                self.w_off[s * u + j] = pos + j
            pos += u
            for j in range(u):
                k = s * u + j
                self.col_off[k] = pos
                self.col_m[k] = m_s
                pos += n_column_params(m_s)
            self.stage_end[s] = pos
        self.max_params = pos

        self.theta = np.zeros(pos)
        self.TH = np.zeros(pos)
        self.TC = np.zeros(pos)
        self.grad = np.zeros(pos)
        self.h = np.zeros(K)
        self.c = np.zeros(K)
        self.cache = np.zeros((K, _kernels.N_CACHE))
        self.mu = np.zeros(K)
        self.var = np.ones(K)
        self.inp = np.zeros(self.n_obs + K)
        self.hhat = np.zeros(K)

        self.stage = 0
        self.t = 0
        self.counting = False
        self._init_stage(0)

    # -- layout -----------------------------------------------------------

    @property
    def n_live(self):
        return (self.stage + 1) * self.spec.features_per_stage

    @property
    def n_frozen(self):
        return self.stage * self.spec.features_per_stage

    @property
    def n_params(self):
        """Number of parameters that currently exist (a prefix of ``theta``)."""
        return int(self.stage_end[self.stage])

    def column_slice(self, k):
        o = int(self.col_off[k])
        return slice(o, o + n_column_params(int(self.col_m[k])))

    def column_params(self, k) -> ColumnParams:
        return ColumnParams.from_vector(np.asarray(self.theta[self.column_slice(k)], dtype=float),
                                        int(self.col_m[k]))

    def head_weights(self):
        return np.asarray(self.theta[self.w_off[:self.n_live]], dtype=float)

    def frozen_ranges(self):
        """Index ranges of column parameters that are frozen."""
        return [(int(self.col_off[k]), self.column_slice(k).stop) for k in range(self.n_frozen)]

    def frozen_mask(self):
        mask = np.zeros(self.n_params, dtype=bool)
        for a, b in self.frozen_ranges():
            mask[a:b] = True
        return mask

    # -- stages -----------------------------------------------------------

    def _init_stage(self, s):
        u = self.spec.features_per_stage
        for j in range(u):
            k = s * u + j
            m = int(self.col_m[k])
            scale = 1.0 / np.sqrt(m) if self.init_scale is None else self.init_scale
            sl = self.column_slice(k)
            vec = np.zeros(n_column_params(m))
            vec[:4 * m + 4] = self.rng.uniform(-scale, scale, 4 * m + 4)
            vec[4 * m + 5] = self.forget_bias
            self.theta[sl] = vec
            self.theta[self.w_off[k]] = 0.0
            self.h[k] = 0.0
            self.c[k] = 0.0
            self.mu[k] = 0.0
            self.var[k] = 1.0

    def steps_until_boundary(self):
        """Steps left before the next stage change, or None after the last stage."""
        if self.stage + 1 >= self.spec.total_stages:
            return None
        return max(0, (self.stage + 1) * self.spec.steps_per_stage - self.t)

    def maybe_advance_stage(self) -> bool:
        left = self.steps_until_boundary()
        if left is None or left > 0:
            return False
        self.advance_stage()
        return True

    def advance_stage(self):
        """Freeze the current stage and bring up the next one."""
        if self.stage + 1 >= self.spec.total_stages:
            return
        self.stage += 1
        # frozen columns keep parameters and statistics; their traces are dropped
        self.TH[:] = 0.0
        self.TC[:] = 0.0
        self._init_stage(self.stage)
        if self.counting:
            self._wrap_counted()

    # -- stepping ---------------------------------------------------------

    def _check_obs(self, x):
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        if x.shape[0] != self.n_obs:
            raise UsageError(f"observation has width {x.shape[0]}, network expects {self.n_obs}")
        if not np.all(np.isfinite(x)):
            raise NumericFault("non-finite observation", step=self.t, observation=x.copy())
        return x

    def step(self, x):
        """Advance one time step; returns (y, dy/dtheta over the existing parameters)."""
        x = self._check_obs(x)
        if self.counting:
            from .compute import counted_array
            x = counted_array(x)
        y = self._k.network_step(x, self.theta, self.w_off, self.col_off, self.col_m,
                                 self.n_live, self.n_frozen, self.h, self.c, self.cache,
                                 self.TH, self.TC, self.mu, self.var, self.normalize,
                                 self.norm_beta, self.norm_eps, self.inp, self.hhat, self.grad)
        self.t += 1
        return y, self.grad[:self.n_params].copy()

    def reset_state(self):
        """Zero hidden and cell states and active traces (episode boundary)."""
        self._k.reset_columns(self.col_off, self.col_m, self.n_live, self.n_frozen,
                              self.h, self.c, self.TH, self.TC)

    def features(self):
        return np.array(self.hhat[:self.n_live], dtype=float)

    def _run_td(self, obs, cum, term, L, preds, deltas):
        """Run the compiled TD loop over a block; ``L`` is the learner."""
        return _kernels.run_columns(
            obs, cum, term, L.gamma, L.lam, L.alpha, L.adaptive, L.beta2, L.eps_opt,
            self.theta, self.w_off, self.col_off, self.col_m, self.n_live, self.n_frozen,
            self.h, self.c, self.cache, self.TH, self.TC, self.mu, self.var,
            self.normalize, self.norm_beta, self.norm_eps, self.inp, self.hhat,
            self.n_params, L.z, L.v, L.bc, L.gprev, L.gnew, L.status, preds, deltas)

    # -- instrumentation and persistence -----------------------------------

    def enable_counting(self):
        """Switch to the plain-Python kernels over counting scalars (slow)."""
        from .compute import plain_kernels
        self.counting = True
        self._wrap_counted()

    def _wrap_counted(self):
        from .compute import counted_array
        for name in _FLOAT_STATE:
            setattr(self, name, counted_array(np.asarray(getattr(self, name), dtype=float)))

    @property
    def _k(self):
        if self.counting:
            from .compute import plain_kernels
            return plain_kernels()
        return _kernels

    def clone(self):
        return copy.deepcopy(self)

    def state_arrays(self):
        """Every array needed to resume, keyed by name."""
        out = {name: np.asarray(getattr(self, name), dtype=np.float64).copy()
               for name in ("theta", "h", "c", "TH", "TC", "mu", "var", "cache")}
        out["counters"] = np.array([self.stage, self.t], dtype=np.int64)
        out["rng"] = _rng_bytes(self.rng)
        return out

    def load_state_arrays(self, arrays):
        for name in ("theta", "h", "c", "TH", "TC", "mu", "var", "cache"):
            src = np.asarray(arrays[name], dtype=np.float64)
            if src.shape != getattr(self, name).shape:
                raise UsageError(f"checkpoint array {name!r} has shape {src.shape}")
            getattr(self, name)[...] = src
        self.stage, self.t = (int(v) for v in arrays["counters"])
        if "rng" in arrays:
            self.rng.bit_generator.state = json.loads(bytes(arrays["rng"]).decode())


def _rng_bytes(rng):
    return np.frombuffer(json.dumps(rng.bit_generator.state).encode(), dtype=np.uint8).copy()


def column_independence_check(net: Network, k: int, steps=20, delta=1e-4, seed=0):
    """Largest change of any other column's hidden state when column ``k`` is perturbed.

    Each parameter of column ``k`` (and its head weight) is nudged by ``delta``
    in turn and the network is run ``steps`` steps on a fixed random binary
    stream. Only meaningful for single-stage networks.
    """
    if net.spec.total_stages != 1:
        raise UsageError("independence check needs a single-stage network")
    xs = (np.random.default_rng(seed).random((steps, net.n_obs)) < 0.5).astype(float)

    def hidden(theta):
        probe = net.clone()
        probe.theta[:] = theta
        out = np.empty((steps, probe.n_live))
        for t in range(steps):
            probe.step(xs[t])
            out[t] = probe.h[:probe.n_live]
        return out

    base = hidden(net.theta)
    others = [j for j in range(net.n_live) if j != k]
    worst = 0.0
    sl = net.column_slice(k)
    for p in list(range(sl.start, sl.stop)) + [int(net.w_off[k])]:
        theta = net.theta.copy()
        theta[p] += delta
        diff = np.abs(hidden(theta)[:, others] - base[:, others])
        worst = max(worst, float(diff.max(initial=0.0)))
    return worst
