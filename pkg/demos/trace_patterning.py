"""
Learning to predict a delayed stimulus
======================================

Runs one seed of the trace-patterning task with a staged network and prints
the windowed error next to the error of always predicting zero.

    python demos/trace_patterning.py [steps] [key=value ...]

Extra arguments override the ``desk_ccn`` preset, e.g. ``isi_min=12
isi_max=18`` for a shorter delay or ``forget_bias=3`` for longer initial memory.
"""

import sys

import numpy as np

from ccnrtrl.config import load_config
from ccnrtrl.runner import Session

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 300_000
cfg = load_config("desk_ccn", [f"total_steps={steps}", *sys.argv[2:]])
session = Session(cfg, seed=0)

print(f"{'step':>9} {'stage':>5} {'error':>10} {'zero pred.':>10}")
while session.t < steps:
    _, targets = session.advance(cfg.window)
    if session.t % (10 * cfg.window) == 0 or session.t == steps:
        zero = np.nanmean(targets ** 2)
        print(f"{session.t:9d} {session.stage():5d} {session.stats.error:10.5f} {zero:10.5f}")
