import numpy as np
import pytest

from ccnrtrl.compute import OpCounter, estimate_ops, measure_ops
from ccnrtrl.verify import random_instance
from ccnrtrl import oracle


def test_closed_forms():
    assert estimate_ops("columnar", 12, d=10) == 3920
    assert estimate_ops("ccn", 12, d=16, u=4) == 3360
    assert estimate_ops("constructive", 12, d=5) == estimate_ops("ccn", 12, d=5, u=1)
    assert estimate_ops("tbptt", 12, d=4, k=15) == 4352
    with pytest.raises(ValueError):
        estimate_ops("dense", 12, d=4)
    with pytest.raises(ValueError):
        estimate_ops("tbptt", 12, d=4, k=0)


@pytest.mark.parametrize("topology,kw", [("columnar", dict(d=10)), ("ccn", dict(d=16, u=4)),
                                         ("constructive", dict(d=5)),
                                         ("tbptt", dict(d=4, k=15))])
def test_measured_counts_near_estimates(topology, kw):
    got = measure_ops(topology, 12, steps=200, **kw)
    assert abs(got / estimate_ops(topology, 12, **kw) - 1) <= 0.35


def test_frozen_stage_is_cheaper_than_learning():
    per = measure_ops("ccn", 12, d=8, u=4, steps=40, per_step=True)
    stage1, stage2 = per[5:20].mean(), per[25:].mean()
    assert stage2 > stage1
    learning = measure_ops("columnar", 16, d=4, steps=20)
    assert stage2 - learning < stage1 / 3


def test_counting_does_not_change_results():
    a = random_instance("ccn", 3)
    b = a.clone()
    b.enable_counting()
    xs = np.random.default_rng(0).uniform(-1, 1, (15, 5))
    for x in xs:
        ya, ga = a.step(x)
        yb, gb = b.step(x)
        assert float(ya) == pytest.approx(float(yb), abs=1e-14)
        assert np.allclose(ga.astype(float), gb.astype(float), atol=1e-14)


def test_oracle_is_not_counted():
    from ccnrtrl.compute import _ACTIVE
    net = random_instance("columnar", 1)
    before = _ACTIVE.ops
    oracle.bptt_jacobian(net, np.zeros((10, 5)))
    assert _ACTIVE.ops == before
    c = OpCounter()
    c.ops = 5
    c.reset()
    assert c.ops == 0
