"""Fully connected LSTM trained with truncated backpropagation through time.

The gradient of the current prediction is recomputed every step by a backward
pass over the ``k`` most recent records held in a ring buffer. Each record
keeps the input, the previous hidden vector, six per-unit coefficients from the
forward pass and the recurrent matrix used at that step.
"""

from __future__ import annotations

import copy
import math

import numpy as np

from . import _kernels
from .compute import tbptt_ops
from .errors import NumericFault, UsageError
from .feature_norm import DEFAULT_BETA, DEFAULT_EPS

TABLE_TRUNCATIONS = (2, 3, 5, 8, 10, 15, 20, 30)
_FLOAT_STATE = ("theta", "h", "c", "zbuf", "mu", "var", "hhat", "dh", "dc", "dhp", "da", "grad")


def n_dense_params(d, m):
    return 4 * d * m + 4 * d * d + 4 * d + d


class TruncationWindow:
    """Ring buffer of the most recent forward records.

    ``capacity`` is ``k`` for a bounded window. An unbounded window (``k is
    None``) starts small and doubles whenever it would overwrite a record.
    """

    def __init__(self, d, m, k=None, capacity=64):
        if k is not None and k < 1:
            raise UsageError("truncation length must be >= 1")
        self.d, self.m, self.k = d, m, k
        self._alloc(k if k is not None else capacity)
        self.ring = np.array([-1, 0], dtype=np.int64)  # newest slot, record count

    def _alloc(self, cap):
        d, m = self.d, self.m
        self.cap = int(cap)
        self.x = np.zeros((cap, m))
        self.h = np.zeros((cap, d))
        self.coef = np.zeros((cap, _kernels.N_COEF, d))
        self.u = np.zeros((cap, 4 * d * d))

    @property
    def count(self):
        return int(self.ring[1])

    def __len__(self):
        return self.count

    def ensure_room(self, extra):
        """Grow an unbounded window so ``extra`` more records fit without loss."""
        if self.k is not None or self.count + extra <= self.cap:
            return
        cap = self.cap
        while cap < self.count + extra:
            cap *= 2
        order = [(int(self.ring[0]) - n) % self.cap for n in range(self.count)][::-1]
        old = (self.x, self.h, self.coef, self.u)
        self._alloc(cap)
        for new_arr, old_arr in zip((self.x, self.h, self.coef, self.u), old):
            new_arr[:len(order)] = old_arr[order]
        self.ring[0] = len(order) - 1 if order else -1

    def clear(self):
        self.ring[1] = 0


class DenseLSTM:
    """Hidden width ``d`` LSTM over inputs of width ``m`` with a linear head.

    Parameters live in one flat vector ``theta`` laid out as
    ``W[4, d, m], U[4, d, d], b[4, d], w[d]`` with gates ordered i, f, o, g.
    Input and recurrent weights start uniform in ``[-1/sqrt(m), 1/sqrt(m)]``;
    biases and head weights start at zero. ``k=None`` disables truncation.
    """

    def __init__(self, n_obs: int, d: int, k=None, *, seed=0, normalize=False,
                 norm_beta=DEFAULT_BETA, norm_eps=DEFAULT_EPS, init_scale=None):
        if n_obs < 1 or d < 1:
            raise UsageError("need n_obs >= 1 and d >= 1")
        if k is not None and k < 1:
            raise UsageError("truncation length must be >= 1")
        self.n_obs = self.m = int(n_obs)
        self.d = int(d)
        self.k = k
        self.normalize = bool(normalize)
        self.norm_beta = float(norm_beta)
        self.norm_eps = float(norm_eps)
        m, d = self.m, self.d
        self.max_params = self.n_params = n_dense_params(d, m)
        rng = np.random.default_rng(seed)
        scale = 1.0 / math.sqrt(m) if init_scale is None else init_scale
        self.theta = np.zeros(self.n_params)
        nw = 4 * d * m + 4 * d * d
        self.theta[:nw] = rng.uniform(-scale, scale, nw)
        self.h = np.zeros(d)
        self.c = np.zeros(d)
        self.zbuf = np.zeros(4 * d)
        self.mu = np.zeros(d)
        self.var = np.ones(d)
        self.hhat = np.zeros(d)
        self.dh = np.zeros(d)
        self.dc = np.zeros(d)
        self.dhp = np.zeros(d)
        self.da = np.zeros(4 * d)
        self.grad = np.zeros(self.n_params)
        self.window = TruncationWindow(d, m, k)
        self.t = 0
        self.counting = False

    # -- views ------------------------------------------------------------

    @property
    def W(self):
        return self.theta[:4 * self.d * self.m].reshape(4, self.d, self.m)

    @property
    def U(self):
        a = 4 * self.d * self.m
        return self.theta[a:a + 4 * self.d * self.d].reshape(4, self.d, self.d)

    @property
    def b(self):
        a = 4 * self.d * self.m + 4 * self.d * self.d
        return self.theta[a:a + 4 * self.d].reshape(4, self.d)

    @property
    def w(self):
        return self.theta[self.n_params - self.d:]

    def steps_until_boundary(self):
        return None

    def maybe_advance_stage(self):
        return False

    def features(self):
        return np.array(self.hhat, dtype=float)

    # -- stepping ---------------------------------------------------------

    def step(self, x):
        """Forward step plus truncated gradient; returns (y, dy/dtheta)."""
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        if x.shape[0] != self.m:
            raise UsageError(f"observation has width {x.shape[0]}, network expects {self.m}")
        if not np.all(np.isfinite(x)):
            raise NumericFault("non-finite observation", step=self.t)
        win = self.window
        if self.counting:
            from .compute import counted_array
            x = counted_array(x)
        else:
            win.ensure_room(1)
        y = self._k.dense_step(x, self.theta, self.d, self.m, self.h, self.c, self.zbuf,
                               win.x, win.h, win.coef, win.u, win.ring, win.cap,
                               0 if self.k is None else self.k, self.normalize, self.mu,
                               self.var, self.norm_beta, self.norm_eps, self.hhat, self.dh,
                               self.dc, self.dhp, self.da, self.grad)
        self.t += 1
        return y, np.asarray(self.grad, dtype=float).copy()

    def truncated_gradient(self, k=None):
        """Gradient of the latest prediction using at most ``k`` stored records.

        ``k=None`` uses everything the window holds. Recomputed from the window;
        network state is not changed.
        """
        if k is not None and k < 1:
            raise UsageError("truncation length must be >= 1")
        win = self.window
        if win.count == 0:
            raise UsageError("window is empty")
        count = win.count if k is None else min(k, win.count)
        if self.normalize:
            sd = np.maximum(self.norm_eps, np.sqrt(self.var))
        else:
            sd = np.ones(self.d)
        dh = self.w / sd
        grad = np.zeros(self.n_params)
        grad[self.n_params - self.d:] = self.hhat
        _kernels.dense_backward(self.theta, self.d, self.m, win.x, win.h, win.coef, win.u,
                                int(win.ring[0]), count, win.cap, dh, np.zeros(self.d),
                                np.zeros(self.d), np.zeros(4 * self.d), grad)
        return grad

    def reset_state(self):
        self.h[:] = 0.0
        self.c[:] = 0.0
        self.window.clear()

    def _run_td(self, obs, cum, term, L, preds, deltas):
        win = self.window
        win.ensure_room(obs.shape[0])
        return _kernels.run_dense(
            obs, cum, term, L.gamma, L.lam, L.alpha, L.adaptive, L.beta2, L.eps_opt,
            self.theta, self.d, self.m, self.h, self.c, self.zbuf, win.x, win.h, win.coef,
            win.u, win.ring, win.cap, 0 if self.k is None else self.k, self.normalize,
            self.mu, self.var, self.norm_beta, self.norm_eps, self.hhat, self.dh, self.dc,
            self.dhp, self.da, self.n_params, L.z, L.v, L.bc, L.gprev, L.gnew, L.status,
            preds, deltas)

    # -- instrumentation and persistence -----------------------------------

    def enable_counting(self):
        """Switch to plain-Python kernels over counting scalars (bounded windows only)."""
        from .compute import counted_array, plain_kernels
        if self.k is None:
            raise UsageError("counting needs a bounded window")
        self.counting = True
        for name in _FLOAT_STATE:
            setattr(self, name, counted_array(getattr(self, name)))
        win = self.window
        for name in ("x", "h", "coef", "u"):
            setattr(win, name, counted_array(getattr(win, name)))

    @property
    def _k(self):
        if self.counting:
            from .compute import plain_kernels
            return plain_kernels()
        return _kernels

    def clone(self):
        return copy.deepcopy(self)

    def state_arrays(self):
        win = self.window
        return {"theta": self.theta.copy(), "h": self.h.copy(), "c": self.c.copy(),
                "mu": self.mu.copy(), "var": self.var.copy(), "hhat": self.hhat.copy(),
                "win_x": win.x.copy(), "win_h": win.h.copy(), "win_coef": win.coef.copy(),
                "win_u": win.u.copy(), "win_ring": win.ring.copy(),
                "counters": np.array([0, self.t], dtype=np.int64)}

    def load_state_arrays(self, arrays):
        for name in ("theta", "h", "c", "mu", "var", "hhat"):
            getattr(self, name)[...] = arrays[name]
        win = self.window
        win._alloc(arrays["win_x"].shape[0])
        win.x[...] = arrays["win_x"]
        win.h[...] = arrays["win_h"]
        win.coef[...] = arrays["win_coef"]
        win.u[...] = arrays["win_u"]
        win.ring[...] = arrays["win_ring"]
        self.t = int(arrays["counters"][1])


def budget_pairs(budget_ops, m, tolerance=0.1, truncations=TABLE_TRUNCATIONS):
    """For each truncation length, the widest network whose estimated cost fits.

    Returns ``(k, d)`` pairs with ``(k+1)(4d^2 + 4dm + 4d) <= budget (1 + tolerance)``;
    truncation lengths for which even ``d = 1`` does not fit are skipped.
    """
    if budget_ops <= 0:
        raise UsageError("budget must be positive")
    if m < 1:
        raise UsageError("input width must be >= 1")
    limit = budget_ops * (1.0 + tolerance)
    pairs = []
    for k in truncations:
        if k < 1:
            raise UsageError("truncation length must be >= 1")
        d = 0
        while tbptt_ops(k, d + 1, m) <= limit:
            d += 1
        if d:
            pairs.append((k, d))
    return pairs
