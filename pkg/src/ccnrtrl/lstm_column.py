"""A single LSTM column with a scalar hidden state and its exact forward-mode traces.

A column keeps, for every one of its ``4m + 8`` parameters ``p``, the two
sensitivities ``TH_p = dh(t)/dp`` and ``TC_p = dc(t)/dp``. Both are carried
forward one step at a time, so the gradient of the current hidden state is
available without storing any history.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import math

import numpy as np

from . import _kernels as K
from .errors import NumericFault, UsageError

GATES = ("i", "f", "o", "g")


def n_column_params(m):
    return 4 * m + 8


def param_names(m):
    """Canonical parameter order shared by traces, gradients and optimizer state."""
    names = [f"W_{q}[{j}]" for q in GATES for j in range(m)]
    names += [f"u_{q}" for q in GATES]
    names += [f"b_{q}" for q in GATES]
    return names


@dataclass
class ColumnParams:
    W_i: np.ndarray
    W_f: np.ndarray
    W_o: np.ndarray
    W_g: np.ndarray
    u_i: float = 0.0
    u_f: float = 0.0
    u_o: float = 0.0
    u_g: float = 0.0
    b_i: float = 0.0
    b_f: float = 0.0
    b_o: float = 0.0
    b_g: float = 0.0

    def __post_init__(self):
        for q in GATES:
            setattr(self, f"W_{q}", np.asarray(getattr(self, f"W_{q}"), dtype=np.float64).reshape(-1))
        m = self.W_i.shape[0]
        if m < 1 or any(getattr(self, f"W_{q}").shape[0] != m for q in GATES):
            raise UsageError("all four input-weight arrays need the same length m >= 1")
        if not np.all(np.isfinite(self.to_vector())):
            raise NumericFault("column parameters must be finite")

    @property
    def m(self):
        return self.W_i.shape[0]

    def to_vector(self):
        return np.concatenate([
            self.W_i, self.W_f, self.W_o, self.W_g,
            [self.u_i, self.u_f, self.u_o, self.u_g],
            [self.b_i, self.b_f, self.b_o, self.b_g],
        ]).astype(np.float64)

    @classmethod
    def from_vector(cls, vec, m=None):
        vec = np.asarray(vec, dtype=np.float64)
        if m is None:
            m, rem = divmod(vec.shape[0] - 8, 4)
            if rem or m < 1:
                raise UsageError(f"vector of length {vec.shape[0]} is not 4m+8")
        elif vec.shape[0] != 4 * m + 8:
            raise UsageError(f"expected {4 * m + 8} values, got {vec.shape[0]}")
        u = vec[4 * m:4 * m + 4]
        b = vec[4 * m + 4:]
        return cls(vec[:m], vec[m:2 * m], vec[2 * m:3 * m], vec[3 * m:4 * m],
                   *map(float, u), *map(float, b))

    @classmethod
    def zeros(cls, m):
        return cls.from_vector(np.zeros(4 * m + 8), m)

    @classmethod
    def uniform(cls, m, rng, scale=None):
        """Weights (input and recurrent) from U[-scale, scale], biases zero.

        ``scale`` defaults to ``1/sqrt(m)``.
        """
        scale = 1.0 / np.sqrt(m) if scale is None else scale
        vec = np.zeros(4 * m + 8)
        vec[:4 * m + 4] = rng.uniform(-scale, scale, 4 * m + 4)
        return cls.from_vector(vec, m)


@dataclass
class CellState:
    h: float = 0.0
    c: float = 0.0
    i: float = 0.5
    f: float = 0.5
    o: float = 0.5
    g: float = 0.0

    def _cache(self):
        return np.array([self.i, self.f, self.o, self.g, math.tanh(self.c)])


@dataclass
class TraceState:
    TH: np.ndarray
    TC: np.ndarray

    @classmethod
    def zeros(cls, m):
        n = 4 * m + 8
        return cls(np.zeros(n), np.zeros(n))

    @property
    def m(self):
        return (self.TH.shape[0] - 8) // 4


def _check_input(params, x):
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != params.m:
        raise UsageError(f"input has width {x.shape[0]}, column expects {params.m}")
    if not np.all(np.isfinite(x)):
        raise NumericFault("non-finite column input", input=x.copy())
    return x


def forward(params: ColumnParams, prev: CellState, x) -> CellState:
    """Gates from affine pre-activations; c = f c_prev + i g; h = o tanh(c)."""
    x = _check_input(params, x)
    if not (np.isfinite(prev.h) and np.isfinite(prev.c)):
        raise NumericFault("non-finite previous state", h=prev.h, c=prev.c)
    cache = np.zeros(K.N_CACHE)
    h, c = K.column_forward(params.to_vector(), 0, params.m, x, float(prev.h), float(prev.c), cache)
    return CellState(h=h, c=c, i=cache[K.GATE_I], f=cache[K.GATE_F],
                     o=cache[K.GATE_O], g=cache[K.GATE_G])


def update_traces(params: ColumnParams, prev: CellState, prev_traces: TraceState,
                  new: CellState, x, prev_h=None) -> TraceState:
    """Traces at t from traces at t-1, the gates of step t and c(t-1), h(t-1).

    ``new`` must be the result of :func:`forward` on the same inputs.
    """
    x = _check_input(params, x)
    n = n_column_params(params.m)
    if prev_traces.TH.shape[0] != n or prev_traces.TC.shape[0] != n:
        raise UsageError(f"traces must have length {n}")
    hp = prev.h if prev_h is None else prev_h
    TH = prev_traces.TH.astype(np.float64, copy=True)
    TC = prev_traces.TC.astype(np.float64, copy=True)
    K.column_traces(params.to_vector(), 0, params.m, x, float(hp), float(prev.c),
                    new._cache(), TH, TC)
    return TraceState(TH, TC)


@dataclass
class Column:
    """Parameters, state and traces of one column, advanced together."""

    params: ColumnParams
    state: CellState = field(default_factory=CellState)
    traces: TraceState = None

    def __post_init__(self):
        if self.traces is None:
            self.traces = TraceState.zeros(self.params.m)

    def step(self, x):
        new = forward(self.params, self.state, x)
        self.traces = update_traces(self.params, self.state, self.traces, new, x)
        self.state = new
        return new.h


def reset(column: Column) -> None:
    """Zero the hidden state, cell state and every trace."""
    column.state = CellState()
    column.traces = TraceState.zeros(column.params.m)
