import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ccnrtrl import oracle
from ccnrtrl.errors import NumericFault, UsageError
from ccnrtrl.lstm_column import (CellState, Column, ColumnParams, TraceState, forward,
                                 n_column_params, param_names, reset, update_traces)
from ccnrtrl.network import Network, StageSpec


def sig(z):
    return 1.0 / (1.0 + math.exp(-z))


def reference_step(vec, m, x, h, c):
    """Straight-line LSTM cell, written independently of the package kernels."""
    Wi, Wf, Wo, Wg = (vec[q * m:(q + 1) * m] for q in range(4))
    ui, uf, uo, ug = vec[4 * m:4 * m + 4]
    bi, bf, bo, bg = vec[4 * m + 4:4 * m + 8]
    i = sig(sum(Wi[j] * x[j] for j in range(m)) + ui * h + bi)
    f = sig(sum(Wf[j] * x[j] for j in range(m)) + uf * h + bf)
    o = sig(sum(Wo[j] * x[j] for j in range(m)) + uo * h + bo)
    g = math.tanh(sum(Wg[j] * x[j] for j in range(m)) + ug * h + bg)
    c_new = f * c + i * g
    return o * math.tanh(c_new), c_new


def test_parameter_layout():
    assert n_column_params(3) == 20
    names = param_names(2)
    assert names[:2] == ["W_i[0]", "W_i[1]"]
    assert names[8:12] == ["u_i", "u_f", "u_o", "u_g"]
    assert names[-1] == "b_g"


def test_zero_params_give_half_gates_and_zero_state():
    p = ColumnParams.zeros(4)
    s = forward(p, CellState(), np.arange(4.0))
    assert (s.i, s.f, s.o, s.g, s.c, s.h) == (0.5, 0.5, 0.5, 0.0, 0.0, 0.0)


def test_saturated_candidate():
    vec = np.zeros(n_column_params(2))
    vec[-1] = 20.0
    s = forward(ColumnParams.from_vector(vec), CellState(), [0.3, -0.7])
    assert s.g == pytest.approx(1.0, abs=1e-15)
    assert s.c == pytest.approx(0.5, abs=1e-15)
    assert s.h == pytest.approx(0.5 * math.tanh(0.5), abs=1e-15)


def test_forward_matches_reference_transcription():
    rng = np.random.default_rng(11)
    p = ColumnParams.uniform(3, rng, scale=1.0)
    vec = p.to_vector()
    state, h, c = CellState(), 0.0, 0.0
    for _ in range(30):
        x = rng.normal(size=3)
        state = forward(p, state, x)
        h, c = reference_step(vec, 3, x, h, c)
        assert state.h == pytest.approx(h, abs=1e-14)
        assert state.c == pytest.approx(c, abs=1e-14)
        assert 0 < state.i < 1 and 0 < state.f < 1 and 0 < state.o < 1 and -1 < state.g < 1


def test_first_step_bias_traces_by_hand():
    p = ColumnParams.zeros(2)
    x = [1.0, -2.0]
    new = forward(p, CellState(), x)
    tr = update_traces(p, CellState(), TraceState.zeros(2), new, x)
    idx = {n: k for k, n in enumerate(param_names(2))}
    assert tr.TH[idx["b_g"]] == 0.25 and tr.TC[idx["b_g"]] == 0.5
    assert tr.TH[idx["b_i"]] == 0.0 and tr.TC[idx["b_i"]] == 0.0
    # candidate input weights scale with x_j
    assert tr.TC[idx["W_g[1]"]] == pytest.approx(-1.0)


def test_traces_match_bptt_over_fifty_steps():
    rng = np.random.default_rng(5)
    net = Network(5, StageSpec(1, 10, 1), seed=5, normalize=False)
    net.theta[:] = rng.uniform(-1, 1, net.n_params)
    net.theta[net.w_off[0]] = 1.0
    xs = rng.normal(size=(50, 5))
    snap = net.clone()
    col = Column(net.column_params(0))
    ths = []
    for x in xs:
        col.step(x)
        ths.append(col.traces.TH.copy())
    _, J = oracle.bptt_jacobian(snap, xs)
    sl = net.column_slice(0)
    assert np.max(np.abs(np.array(ths) - J[:, sl])) <= 1e-10


def test_reset_is_idempotent():
    rng = np.random.default_rng(0)
    col = Column(ColumnParams.uniform(3, rng))
    for _ in range(5):
        col.step(rng.normal(size=3))
    reset(col)
    once = (col.state, col.traces.TH.copy(), col.traces.TC.copy())
    reset(col)
    assert col.state == once[0] and col.state.h == 0.0 and col.state.c == 0.0
    assert not col.traces.TH.any() and not col.traces.TC.any()
    col.params = ColumnParams.zeros(3)
    assert col.step([1.0, 2.0, 3.0]) == 0.0


def test_input_errors():
    p = ColumnParams.zeros(3)
    with pytest.raises(UsageError):
        forward(p, CellState(), [1.0, 2.0])
    with pytest.raises(NumericFault):
        forward(p, CellState(), [1.0, np.nan, 0.0])
    with pytest.raises(UsageError):
        update_traces(p, CellState(), TraceState.zeros(2), CellState(), [0.0, 0.0, 0.0])
    with pytest.raises(UsageError):
        ColumnParams.from_vector(np.zeros(13))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_vector_round_trip(m, seed):
    p = ColumnParams.uniform(m, np.random.default_rng(seed), scale=2.0)
    q = ColumnParams.from_vector(p.to_vector())
    assert np.array_equal(p.to_vector(), q.to_vector())


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_zero_dynamics_fixed_point(seed):
    # with zero candidate weights and bias, c and h stay at 0 whatever the input
    rng = np.random.default_rng(seed)
    vec = rng.uniform(-3, 3, n_column_params(3))
    vec[9:12] = 0.0
    vec[15] = 0.0
    vec[19] = 0.0
    p = ColumnParams.from_vector(vec)
    s = CellState()
    for _ in range(10):
        s = forward(p, s, rng.normal(size=3))
        assert s.h == 0.0 and s.c == 0.0
