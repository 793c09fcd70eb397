"""Online TD(lambda) with accumulating eligibility traces.

Per step, with ``y`` the previous prediction and ``g`` its gradient::

    delta = c + gamma * y' - y
    z     = lambda * gamma * z + g
    theta = theta + alpha * delta * z                        (sgd)
    v     = beta2 * v + (1 - beta2) * g**2                   (adaptive)
    theta = theta + alpha * delta * z / (sqrt(v) + eps_opt)  (adaptive)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericFault, UsageError

OPTIMIZERS = ("sgd", "adaptive")


@dataclass(frozen=True)
class LearnerConfig:
    step_size: float = 1e-4
    gamma: float = 0.9
    lam: float = 0.99
    optimizer: str = "adaptive"
    beta2: float = 0.9999
    eps_opt: float = 1e-8
    bias_correction: bool = False

    def __post_init__(self):
        if not self.step_size > 0:
            raise UsageError("step_size must be positive")
        if not 0.0 <= self.gamma < 1.0:
            raise UsageError("gamma must lie in [0, 1)")
        if not 0.0 <= self.lam <= 1.0:
            raise UsageError("lam must lie in [0, 1]")
        if self.optimizer not in OPTIMIZERS:
            raise UsageError(f"optimizer must be one of {OPTIMIZERS}")
        if not 0.0 <= self.beta2 < 1.0:
            raise UsageError("beta2 must lie in [0, 1)")
        if not self.eps_opt > 0:
            raise UsageError("eps_opt must be positive")


class TDLearner:
    """Drives a :class:`~ccnrtrl.network.Network` or :class:`~ccnrtrl.tbptt.DenseLSTM`.

    Eligibility, second-moment and cached-gradient arrays are sized for the
    network's final parameter count; only the first ``net.n_params`` entries
    are used.
    """

    def __init__(self, net, cfg: LearnerConfig = LearnerConfig()):
        self.net = net
        self.cfg = cfg
        self.gamma = float(cfg.gamma)
        self.lam = float(cfg.lam)
        self.alpha = float(cfg.step_size)
        self.adaptive = cfg.optimizer == "adaptive"
        self.beta2 = float(cfg.beta2)
        self.eps_opt = float(cfg.eps_opt)
        n = net.max_params
        self.z = np.zeros(n)
        self.v = np.zeros(n)
        self.bc = np.zeros(n if cfg.bias_correction else 0)
        self.gprev = np.zeros(n)
        self.gnew = np.zeros(n)
        self.status = np.zeros(2)  # previous prediction, started flag
        self.n_params = net.n_params

    @property
    def started(self):
        return self.status[1] != 0.0

    @property
    def y(self):
        return float(self.status[0])

    def run(self, obs, cum, term=None):
        """Process a block of records in order; returns (predictions, td_errors).

        The first record after construction or after a terminal record only
        produces a prediction. Stage changes happen at their boundaries inside
        the block.
        """
        obs = np.ascontiguousarray(obs, dtype=np.float64)
        if obs.ndim != 2 or obs.shape[1] != self.net.n_obs:
            raise UsageError(f"observations must have shape (T, {self.net.n_obs})")
        T = obs.shape[0]
        cum = np.ascontiguousarray(cum, dtype=np.float64).reshape(T)
        term = (np.zeros(T, dtype=np.bool_) if term is None
                else np.ascontiguousarray(term, dtype=np.bool_).reshape(T))
        if not np.all(np.isfinite(obs)):
            bad = int(np.argwhere(~np.isfinite(obs))[0, 0])
            raise NumericFault("non-finite observation", step=self.net.t + bad)
        preds = np.zeros(T)
        deltas = np.zeros(T)
        pos = 0
        while pos < T:
            if self.net.maybe_advance_stage():
                self.on_stage_advance(self.net.n_params)
            left = self.net.steps_until_boundary()
            n = T - pos if left is None else min(T - pos, left)
            t0 = self.net.t
            fault = self.net._run_td(obs[pos:pos + n], cum[pos:pos + n], term[pos:pos + n],
                                     self, preds[pos:pos + n], deltas[pos:pos + n])
            if fault >= 0:
                self.net.t = t0 + fault + 1
                raise NumericFault("non-finite TD error", step=t0 + fault,
                                   delta=float(deltas[pos + fault]),
                                   prediction=float(preds[pos + fault]),
                                   features=self.net.features().tolist())
            self.net.t = t0 + n
            pos += n
            if self.net.maybe_advance_stage():
                self.on_stage_advance(self.net.n_params)
        return preds, deltas

    def begin(self, x):
        """Make the first prediction without learning; returns it."""
        self.status[1] = 0.0
        preds, _ = self.run(np.asarray(x, dtype=float)[None, :], [0.0])
        return float(preds[0])

    def td_step(self, x_next, c, terminal=False) -> float:
        """One learning step on the next observation and its cumulant; returns delta.

        Without a previous prediction (start, or right after a terminal record)
        this only predicts and returns 0.
        """
        _, deltas = self.run(np.asarray(x_next, dtype=float)[None, :], [c], [terminal])
        return float(deltas[0])

    def on_stage_advance(self, new_param_count):
        """Align learner state with a grown parameter set.

        New entries are already zero. Entries of frozen columns are zeroed so
        no stale gradient can move a frozen parameter.
        """
        for a, b in getattr(self.net, "frozen_ranges", lambda: [])():
            self.z[a:b] = 0.0
            self.v[a:b] = 0.0
            self.bc[a:b] = 0.0
            self.gprev[a:b] = 0.0
            self.gnew[a:b] = 0.0
        self.z[new_param_count:] = 0.0
        self.n_params = int(new_param_count)

    def state_arrays(self):
        return {"z": self.z.copy(), "v": self.v.copy(), "bc": self.bc.copy(),
                "gprev": self.gprev.copy(), "status": self.status.copy()}

    def load_state_arrays(self, arrays):
        for name in ("z", "v", "bc", "gprev", "status"):
            getattr(self, name)[...] = np.asarray(arrays[name], dtype=np.float64)
        self.n_params = self.net.n_params
