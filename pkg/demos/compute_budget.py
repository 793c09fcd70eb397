"""
What one step costs
===================

Closed-form operation counts next to counts taken by running the real step
code on scalars that tally their own arithmetic.
"""

from ccnrtrl.compute import estimate_ops, measure_ops
from ccnrtrl.tbptt import budget_pairs

m = 12  # trace-patterning observation width
setups = {
    "columnar, 10 features": ("columnar", dict(d=10)),
    "ccn, 16 features (4/stage)": ("ccn", dict(d=16, u=4)),
    "constructive, 5 features": ("constructive", dict(d=5)),
    "dense lstm, k=15, 4 features": ("tbptt", dict(d=4, k=15)),
}
for label, (topology, kw) in setups.items():
    est = estimate_ops(topology, m, **kw)
    got = measure_ops(topology, m, steps=200, **kw)
    print(f"{label:30s} estimate {est:5d}   measured {got:7.0f}   ({got / est - 1:+.0%})")

# Which truncation lengths fit a budget of about 4000 operations, and how wide can each be?
print("truncation:width pairs within 4000 ops (+10%):",
      ", ".join(f"{k}:{d}" for k, d in budget_pairs(4000, m, tolerance=0.1)))

# Staged networks pay for learning only in the newest stage.
per_step = measure_ops("ccn", m, d=8, u=4, steps=40, per_step=True)
print(f"ccn 2x4: stage 1 step {per_step[:20].mean():.0f} ops, stage 2 step {per_step[20:].mean():.0f} ops")
