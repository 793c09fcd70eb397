"""Windowed return error and cross-method error ratios."""

from __future__ import annotations

import numpy as np

from .errors import UsageError


class RunStats:
    """Mean squared prediction error over the last ``window`` scored steps.

    Steps whose target is NaN (return not yet known) are skipped.
    """

    def __init__(self, window: int):
        if window < 1:
            raise UsageError("window must be >= 1")
        self.window = int(window)
        self._buf = np.full(self.window, np.nan)
        self._pos = 0
        self.step = 0
        self.ops = 0

    def add(self, preds, targets, ops_per_step=0):
        err = (np.asarray(preds, dtype=float) - np.asarray(targets, dtype=float)) ** 2
        n = err.shape[0]
        self.step += n
        self.ops += int(ops_per_step) * n
        if n >= self.window:
            self._buf[:] = err[-self.window:]
            self._pos = 0
            return
        end = self._pos + n
        if end <= self.window:
            self._buf[self._pos:end] = err
        else:
            cut = self.window - self._pos
            self._buf[self._pos:] = err[:cut]
            self._buf[:n - cut] = err[cut:]
        self._pos = end % self.window

    @property
    def error(self):
        valid = ~np.isnan(self._buf)
        if not valid.any():
            return float("nan")
        return float(self._buf[valid].mean())

    def state_arrays(self):
        return {"buf": self._buf.copy(),
                "counters": np.array([self._pos, self.step, self.ops], dtype=np.int64)}

    def load_state_arrays(self, arrays):
        self._buf[:] = arrays["buf"]
        self._pos, self.step, self.ops = (int(v) for v in arrays["counters"])


def window_error(preds, targets, start, stop):
    """Mean squared error over ``[start, stop)`` ignoring unknown targets."""
    err = (np.asarray(preds[start:stop], float) - np.asarray(targets[start:stop], float)) ** 2
    err = err[~np.isnan(err)]
    return float(err.mean()) if err.size else float("nan")


def normalized_error(errors, baseline):
    """Errors divided by a baseline error, elementwise.

    ``errors`` and ``baseline`` may be scalars, arrays, or dicts keyed by task;
    for dicts the ratio is taken per task.
    """
    if isinstance(errors, dict):
        if not isinstance(baseline, dict):
            raise UsageError("baseline must be a dict when errors is a dict")
        return {k: normalized_error(v, baseline[k]) for k, v in errors.items()}
    b = np.asarray(baseline, dtype=float)
    if np.any(b <= 0) or not np.all(np.isfinite(b)):
        raise UsageError("baseline error must be positive and finite")
    out = np.asarray(errors, dtype=float) / b
    return float(out) if out.ndim == 0 else out


def mean_normalized_error(errors, baseline):
    """Arithmetic mean over tasks of per-task normalized errors."""
    ratios = normalized_error(errors, baseline)
    vals = list(ratios.values()) if isinstance(ratios, dict) else np.ravel(ratios)
    return float(np.mean(vals))
