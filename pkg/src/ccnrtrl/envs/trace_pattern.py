"""Trace patterning: predict a delayed stimulus from a 3-of-6 cue pattern.

Each trial shows one cue pattern (3 of 6 bits on) for a single step. Ten of
the twenty patterns are followed, ``isi`` steps later, by the target stimulus.
The next trial's cue comes ``iti`` steps after that stimulus step. Five
Bernoulli(0.5) distractor bits are redrawn every step. Observation layout:
``[cue bits (6), distractor bits (5), stimulus (1)]``; the stimulus is also the
cumulant.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .. import _kernels
from ..errors import UsageError
from ..replay import StepRecord

_NOISE_BLOCK = 4096


@dataclass(frozen=True)
class TraceConfig:
    n_cs: int = 6
    active_bits: int = 3
    n_positive: int = 10
    n_noise: int = 5
    isi_min: int = 24
    isi_max: int = 36
    iti_min: int = 80
    iti_max: int = 120
    gamma: float = 0.9
    seed: int = 0
    noise: bool = True

    def __post_init__(self):
        if not 1 <= self.active_bits <= self.n_cs:
            raise UsageError("active_bits must lie in [1, n_cs]")
        if not 0 <= self.n_positive <= self.n_patterns:
            raise UsageError("n_positive must lie in [0, n_patterns]")
        if not 1 <= self.isi_min <= self.isi_max:
            raise UsageError("need 1 <= isi_min <= isi_max")
        if not 1 <= self.iti_min <= self.iti_max:
            raise UsageError("need 1 <= iti_min <= iti_max")

    @property
    def n_patterns(self):
        return math.comb(self.n_cs, self.active_bits)

    @property
    def width(self):
        return self.n_cs + self.n_noise + 1

    @property
    def cumulant_index(self):
        return self.width - 1


class TracePatterning:
    """Seeded generator; output does not depend on how the stream is chunked."""

    def __init__(self, cfg: TraceConfig = TraceConfig()):
        self.cfg = cfg
        self.patterns = np.zeros((cfg.n_patterns, cfg.n_cs))
        for p, bits in enumerate(itertools.combinations(range(cfg.n_cs), cfg.active_bits)):
            self.patterns[p, list(bits)] = 1.0
        ss = np.random.SeedSequence(cfg.seed)
        trial_seed, noise_seed = ss.spawn(2)
        self._trial_rng = np.random.default_rng(trial_seed)
        self._noise_rng = np.random.default_rng(noise_seed)
        self.positive = np.sort(self._trial_rng.choice(cfg.n_patterns, cfg.n_positive,
                                                       replace=False))
        self._is_positive = np.zeros(cfg.n_patterns, dtype=bool)
        self._is_positive[self.positive] = True
        self.t = 0
        self._trial = None
        self._pos = 0
        self._noise = np.zeros((0, cfg.n_noise))
        self._noise_pos = 0
        self.trials = []  # (start step, pattern, isi, iti) of every trial begun so far

    def _new_trial(self):
        c = self.cfg
        pattern = int(self._trial_rng.integers(c.n_patterns))
        isi = int(self._trial_rng.integers(c.isi_min, c.isi_max + 1))
        iti = int(self._trial_rng.integers(c.iti_min, c.iti_max + 1))
        self._trial = (pattern, isi, iti)
        self._pos = 0
        self.trials.append((self.t, pattern, isi, iti))

    def _noise_rows(self, n):
        c = self.cfg
        out = np.empty((n, c.n_noise))
        filled = 0
        while filled < n:
            if self._noise_pos == len(self._noise):
                self._noise = (self._noise_rng.random((_NOISE_BLOCK, c.n_noise)) < 0.5).astype(float)
                self._noise_pos = 0
            take = min(n - filled, len(self._noise) - self._noise_pos)
            out[filled:filled + take] = self._noise[self._noise_pos:self._noise_pos + take]
            self._noise_pos += take
            filled += take
        return out if c.noise else np.zeros((n, c.n_noise))

    def generate(self, n):
        """Next ``n`` steps as (observations (n, 12), cumulants (n,), terminals (n,))."""
        c = self.cfg
        obs = np.zeros((n, c.width))
        obs[:, c.n_cs:c.n_cs + c.n_noise] = self._noise_rows(n)
        i = 0
        while i < n:
            if self._trial is None or self._pos == self._trial[1] + self._trial[2]:
                self._new_trial()
            pattern, isi, iti = self._trial
            if self._pos == 0:
                obs[i, :c.n_cs] = self.patterns[pattern]
            elif self._pos == isi and self._is_positive[pattern]:
                obs[i, -1] = 1.0
            # skip ahead over empty steps of the trial
            nxt = isi if self._pos < isi else isi + iti
            step = max(1, min(nxt - self._pos, n - i))
            self._pos += step
            i += step
            self.t += step
        return obs, obs[:, -1].copy(), np.zeros(n, dtype=bool)

    def next(self) -> StepRecord:
        obs, cum, _ = self.generate(1)
        return StepRecord(obs[0], float(cum[0]), False)

    def skip(self, n):
        """Advance ``n`` steps without keeping the output."""
        while n > 0:
            take = min(n, 1 << 16)
            self.generate(take)
            n -= take


def return_horizon(gamma, tol=1e-8):
    """Steps after which the discounted tail falls below ``tol``."""
    if gamma <= 0.0:
        return 1
    return int(math.ceil(math.log(tol) / math.log(gamma)))


def ground_truth_returns(cum, gamma, terminal=None, mark_tail=True):
    """G_t = c_{t+1} + gamma G_{t+1}, computed backwards over the stream.

    Returns within the horizon of the end are NaN when ``mark_tail`` (their
    future is not in the stream). A terminal record ends its episode: its
    return is zero and nothing after it flows back.
    """
    cum = np.asarray(cum, dtype=np.float64)
    T = cum.shape[0]
    term = np.zeros(T, dtype=bool) if terminal is None else np.asarray(terminal, dtype=bool)
    G = np.zeros(T)
    _kernels.discounted_returns(cum, term, float(gamma), G)
    if mark_tail and T:
        H = return_horizon(gamma)
        tail_start = T - H
        if terminal is not None and term.any():
            # returns that reach a terminal before the end of the stream are complete
            last_term = int(np.flatnonzero(term)[-1])
            tail_start = max(tail_start, last_term + 1)
        G[max(0, tail_start):] = np.nan
    return G
