import numpy as np
import pytest

from ccnrtrl.errors import NumericFault, UsageError
from ccnrtrl.lstm_column import n_column_params
from ccnrtrl.network import Network, StageSpec
from ccnrtrl.td import LearnerConfig, TDLearner


def linear_net(n_obs, columns):
    """Only the head weights of hand-set frozen features can learn.

    The second stage holds all-zero columns: their output is exactly 0, so
    their head weights and parameters never receive a non-zero gradient.
    """
    u = len(columns)
    net = Network(n_obs, StageSpec(u, 10**12, 2), seed=0, normalize=False)
    for k, vec in enumerate(columns):
        net.theta[net.column_slice(k)] = vec
    net.advance_stage()
    for k in range(u, 2 * u):
        net.theta[net.column_slice(k)] = 0.0
    return net


def indicator_column(m, j):
    """Memoryless column whose output is tanh(tanh(2)) when x_j = 1, else 0."""
    vec = np.zeros(n_column_params(m))
    vec[3 * m + j] = 2.0           # W_g
    vec[4 * m + 4] = 30.0          # b_i
    vec[4 * m + 5] = -30.0         # b_f
    vec[4 * m + 6] = 30.0          # b_o
    return vec


def feature_trace(net, obs):
    probe = net.clone()
    out = []
    for x in obs:
        probe.step(x)
        out.append(probe.features())
    return np.array(out)


def manual_td(net, obs, cum, term, cfg):
    """Step-by-step TD(lambda) built from Network.step gradients."""
    net = net.clone()
    n = net.n_params
    z = np.zeros(n)
    v = np.zeros(n)
    y, g = net.step(obs[0])
    for t in range(1, len(obs)):
        y2, g2 = net.step(obs[t])
        gamma = 0.0 if term[t] else cfg.gamma
        delta = cum[t] + gamma * y2 - y
        z = cfg.lam * cfg.gamma * z + g
        if cfg.optimizer == "sgd":
            net.theta[:n] += cfg.step_size * delta * z
        else:
            v = cfg.beta2 * v + (1 - cfg.beta2) * g * g
            net.theta[:n] += cfg.step_size * delta * z / (np.sqrt(v) + cfg.eps_opt)
        if term[t]:
            net.reset_state()
            z[:] = 0.0
            if t + 1 < len(obs):
                y, g = net.step(obs[t + 1])
        else:
            y, g = y2, g2
    return net.theta


@pytest.mark.parametrize("optimizer", ["sgd", "adaptive"])
def test_kernel_matches_manual_loop(optimizer):
    rng = np.random.default_rng(0)
    net = Network(4, StageSpec.columnar(3), seed=0)
    net.theta[:] = rng.uniform(-1, 1, net.n_params)
    obs = rng.normal(size=(300, 4))
    cum = obs[:, 0].copy()
    term = np.zeros(300, bool)
    cfg = LearnerConfig(step_size=1e-3, gamma=0.8, lam=0.7, optimizer=optimizer)
    want = manual_td(net, obs, cum, term, cfg)
    learner = TDLearner(net, cfg)
    learner.run(obs, cum, term)
    assert np.max(np.abs(net.theta - want)) <= 1e-12


def test_delta_rule_reaches_least_squares():
    rng = np.random.default_rng(1)
    col = np.zeros(n_column_params(2))
    col[:10] = rng.uniform(-1, 1, 10)
    net = linear_net(2, [col])
    obs = rng.normal(size=(200_000, 2))
    h = feature_trace(net, obs)[:, 0]
    cum = np.zeros(len(obs))
    cum[1:] = 0.7 * h[:-1] + 0.1 * rng.normal(size=len(obs) - 1)
    w_ls = np.dot(h[:-1], cum[1:]) / np.dot(h[:-1], h[:-1])
    learner = TDLearner(net, LearnerConfig(step_size=0.005, gamma=0.0, lam=0.5, optimizer="sgd"))
    learner.run(obs, cum)
    assert net.theta[net.w_off[0]] == pytest.approx(w_ls, abs=1e-2)
    assert not net.theta[net.w_off[1]]


def test_lambda_zero_trace_is_last_gradient():
    rng = np.random.default_rng(2)
    net = Network(3, StageSpec.columnar(2), seed=2)
    learner = TDLearner(net, LearnerConfig(lam=0.0, optimizer="sgd", step_size=1e-3))
    learner.begin(rng.normal(size=3))
    for _ in range(20):
        g = learner.gprev[:net.n_params].copy()
        learner.td_step(rng.normal(size=3), rng.normal())
        assert np.array_equal(learner.z[:net.n_params], g)


def test_trace_is_unrolled_discounted_sum():
    rng = np.random.default_rng(3)
    net = Network(3, StageSpec.columnar(2), seed=3)
    cfg = LearnerConfig(step_size=1e-3, gamma=0.9, lam=0.95)
    learner = TDLearner(net, cfg)
    learner.begin(rng.normal(size=3))
    grads = []
    for _ in range(100):
        grads.append(learner.gprev[:net.n_params].copy())
        learner.td_step(rng.normal(size=3), rng.normal())
    lg = cfg.lam * cfg.gamma
    want = sum(lg ** (len(grads) - 1 - s) * g for s, g in enumerate(grads))
    scale = max(1.0, float(np.max(np.abs(want))))
    assert np.max(np.abs(learner.z[:net.n_params] - want)) <= 1e-12 * scale


def test_two_state_chain_values():
    gamma = 0.9
    net = linear_net(2, [indicator_column(2, 0), indicator_column(2, 1)])
    obs = np.zeros((100_000, 2))
    obs[0::2, 0] = 1.0
    obs[1::2, 1] = 1.0
    cum = obs[:, 1].copy()     # reward 1 on entering the second state
    learner = TDLearner(net, LearnerConfig(step_size=0.01, gamma=gamma, lam=0.9, optimizer="sgd"))
    learner.run(obs, cum)
    a = np.tanh(np.tanh(2.0))
    v0 = net.theta[net.w_off[0]] * a
    v1 = net.theta[net.w_off[1]] * a
    assert v0 == pytest.approx(1 / (1 - gamma**2), abs=1e-3)
    assert v1 == pytest.approx(gamma / (1 - gamma**2), abs=1e-3)


def test_stage_advance_grows_and_freezes_traces():
    rng = np.random.default_rng(4)
    net = Network(12, StageSpec(4, 200, 3), seed=4)
    learner = TDLearner(net, LearnerConfig(step_size=1e-3))
    obs = (rng.random((600, 12)) < 0.3).astype(float)
    before = learner.n_params
    learner.run(obs[:199], obs[:199, -1])
    assert learner.n_params == before
    learner.run(obs[199:200], obs[199:200, -1])
    assert learner.n_params - before == 4 * n_column_params(16) + 4
    frozen = net.frozen_mask()
    theta_frozen = net.theta[:net.n_params][frozen].copy()
    for start in range(200, 600, 50):
        learner.run(obs[start:start + 50], obs[start:start + 50, -1])
        assert not learner.z[:len(frozen)][frozen].any()
    assert np.array_equal(net.theta[:len(frozen)][frozen], theta_frozen)


def test_terminal_resets_episode():
    rng = np.random.default_rng(5)
    net = Network(3, StageSpec.columnar(2), seed=5)
    net.theta[:] = rng.uniform(-1, 1, net.n_params)
    obs = rng.normal(size=(200, 3))
    cum = rng.normal(size=200)
    term = np.zeros(200, bool)
    term[[50, 120]] = True
    learner = TDLearner(net, LearnerConfig(step_size=1e-3, optimizer="sgd", gamma=0.9, lam=0.9))
    _, deltas = learner.run(obs, cum, term)
    # the first record of each episode only predicts
    assert deltas[0] == 0.0 and deltas[51] == 0.0 and deltas[121] == 0.0
    assert deltas[50] != 0.0


def test_divergence_raises_numeric_fault():
    rng = np.random.default_rng(6)
    net = Network(3, StageSpec.columnar(2), seed=6)
    learner = TDLearner(net, LearnerConfig(step_size=1e12, optimizer="sgd", gamma=0.9))
    obs = rng.normal(size=(500, 3)) * 100
    with pytest.raises(NumericFault) as info:
        learner.run(obs, obs[:, 0] * 1e6)
    assert {"step", "delta", "features"} <= set(info.value.diagnostics)


def test_config_validation():
    LearnerConfig()
    for bad in (dict(step_size=0), dict(gamma=1.0), dict(lam=1.5), dict(optimizer="adam"),
                dict(beta2=1.0), dict(eps_opt=0.0)):
        with pytest.raises(UsageError):
            LearnerConfig(**bad)
    with pytest.raises(UsageError):
        TDLearner(Network(3, StageSpec.columnar(1))).run(np.zeros((4, 2)), np.zeros(4))
