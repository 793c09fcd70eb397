"""Per-step compute accounting: closed-form estimates and instrumented counts.

The instrumented counter runs the exact kernel source as plain Python over
arrays of :class:`Counted` scalars. A multiplication immediately consumed by an
addition or subtraction is counted once (a multiply-accumulate); every other
``+``, ``-``, ``*`` and ``/`` counts one. The closed-form estimates are written
in the same unit: a dot product of length ``n`` is ``n`` operations.
Special functions (exp, tanh, sqrt) and negation are not counted.
"""

from __future__ import annotations

import importlib.util
import math
from pathlib import Path

import numpy as np

__all__ = [
    "OpCounter",
    "Counted",
    "plain_kernels",
    "estimate_ops",
    "measure_ops",
    "tbptt_ops",
    "columnar_ops",
    "ccn_ops",
]


class OpCounter:
    """Tallies arithmetic performed on :class:`Counted` values.

    ``ops`` fuses a multiplication into the addition that consumes it next;
    ``raw`` counts every operator application.
    """

    def __init__(self):
        self.ops = 0
        self.raw = 0
        self.pending = []  # products not yet consumed by an accumulation

    def reset(self):
        self.ops = 0
        self.raw = 0
        self.pending = []


_ACTIVE = OpCounter()


class Counted(float):
    """A float whose arithmetic is tallied on the active :class:`OpCounter`."""

    def _mul(self, other):
        _ACTIVE.ops += 1
        _ACTIVE.raw += 1
        out = Counted(float(self) * float(other))
        pending = _ACTIVE.pending
        pending.append(out)
        if len(pending) > 2:
            del pending[0]
        return out

    def _acc(self, other, result):
        _ACTIVE.raw += 1
        pending = _ACTIVE.pending
        if not any(q is self or q is other for q in pending):
            _ACTIVE.ops += 1
        pending.clear()
        return Counted(result)

    def __add__(self, other):
        return self._acc(other, float(self) + float(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self._acc(other, float(self) - float(other))

    def __rsub__(self, other):
        return self._acc(other, float(other) - float(self))

    def __mul__(self, other):
        return self._mul(other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        _ACTIVE.ops += 1
        _ACTIVE.raw += 1
        _ACTIVE.pending.clear()
        return Counted(float(self) / float(other))

    def __rtruediv__(self, other):
        _ACTIVE.ops += 1
        _ACTIVE.raw += 1
        _ACTIVE.pending.clear()
        return Counted(float(other) / float(self))

    def __neg__(self):
        return Counted(-float(self))


def _counted_fn(fn):
    def wrapped(x):
        return Counted(fn(float(x)))

    return wrapped


_PLAIN = None


def plain_kernels():
    """The kernel module executed as plain Python with counting special functions."""
    global _PLAIN
    if _PLAIN is None:
        path = Path(__file__).with_name("_kernels.py")
        spec = importlib.util.spec_from_file_location("ccnrtrl._kernels_plain", path)
        module = importlib.util.module_from_spec(spec)
        module._PLAIN_PYTHON = True
        spec.loader.exec_module(module)
        module.exp = _counted_fn(math.exp)
        module.tanh = _counted_fn(math.tanh)
        module.sqrt = _counted_fn(math.sqrt)
        _PLAIN = module
    return _PLAIN


def counted_array(a):
    """Object-dtype copy of a float array holding :class:`Counted` scalars."""
    a = np.asarray(a, dtype=np.float64)
    out = np.empty(a.shape, dtype=object)
    flat = out.reshape(-1)
    for i, v in enumerate(a.reshape(-1)):
        flat[i] = Counted(v)
    return out


# ---------------------------------------------------------------------------
# Closed-form estimates
# ---------------------------------------------------------------------------


def tbptt_ops(k, d, m):
    """(k+1)(4d^2 + 4dm + 4d): one forward pass plus k backward steps."""
    return (k + 1) * (4 * d * d + 4 * d * m + 4 * d)


def columnar_ops(d, m):
    """d(4m+8) forward plus six times that for the trace recursion."""
    return 7 * d * (4 * m + 8)


def ccn_ops(d, u, m):
    """Forward over d features (each reading d/2 features on average) plus u learning columns."""
    per = 2 * d + 4 * m + 4
    return d * per + 6 * u * per


def estimate_ops(topology, m, *, d=None, u=None, k=None):
    """Closed-form per-step operation estimate for a topology.

    Args:
        topology: one of ``columnar``, ``constructive``, ``ccn``, ``tbptt``.
        m: observation width.
        d: number of hidden features (final count for staged networks).
        u: features per stage (``ccn`` only).
        k: truncation length (``tbptt`` only).
    """
    if topology == "columnar":
        return columnar_ops(d, m)
    if topology == "ccn":
        return ccn_ops(d, u, m)
    if topology == "constructive":
        return ccn_ops(d, 1, m)
    if topology == "tbptt":
        if k is None or k < 1 or d is None or d < 1:
            raise ValueError("tbptt needs k >= 1 and d >= 1")
        return tbptt_ops(k, d, m)
    raise ValueError(f"unknown topology {topology!r}")


# ---------------------------------------------------------------------------
# Instrumented measurement
# ---------------------------------------------------------------------------


def _observations(m, steps, seed):
    rng = np.random.default_rng(seed)
    return (rng.random((steps, m)) < 0.5).astype(np.float64)


def measure_ops(topology, m, *, d=None, u=None, k=None, steps=1000, seed=0,
                normalize=None, per_step=False):
    """Mean instrumented operations per call of the network's ``step``.

    Staged topologies are advanced through all of their stages within
    ``steps`` (stage length ``steps // stages``) so the mean covers every stage.
    The learner is not part of the measured region.
    """
    from .network import Network, StageSpec
    from .tbptt import DenseLSTM

    if topology == "columnar":
        spec = StageSpec(features_per_stage=d, steps_per_stage=steps, total_stages=1)
    elif topology in ("ccn", "constructive"):
        uu = 1 if topology == "constructive" else u
        if d % uu:
            raise ValueError("d must be a multiple of features-per-stage")
        stages = d // uu
        spec = StageSpec(features_per_stage=uu, steps_per_stage=max(1, steps // stages),
                         total_stages=stages)
    elif topology == "tbptt":
        spec = None
    else:
        raise ValueError(f"unknown topology {topology!r}")

    xs = _observations(m, steps, seed)
    counter = _ACTIVE
    counts = []
    if spec is not None:
        net = Network(m, spec, seed=seed, normalize=True if normalize is None else normalize)
        net.enable_counting()
        for t in range(steps):
            before = counter.ops
            net.step(xs[t])
            counts.append(counter.ops - before)
            net.maybe_advance_stage()
    else:
        net = DenseLSTM(m, d, k, seed=seed, normalize=False if normalize is None else normalize)
        net.enable_counting()
        for t in range(steps):
            before = counter.ops
            net.step(xs[t])
            counts.append(counter.ops - before)
    counts = np.asarray(counts, dtype=np.float64)
    return counts if per_step else float(counts.mean())
