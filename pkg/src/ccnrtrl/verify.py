"""Randomized three-way gradient checks used by tests and the CLI."""

from __future__ import annotations

import numpy as np

from . import oracle
from .network import Network, StageSpec
from .tbptt import DenseLSTM

# Instance shapes per topology: (features_per_stage, total_stages) and observation width.
SHAPES = {
    "columnar": (5, 1),
    "ccn": (2, 2),
    "constructive": (1, 3),
}
N_OBS = 5
ABS_TOL = 1e-10
FD_REL_TOL = 1e-5
FD_MIN = 1e-8


def random_instance(topology, seed, normalize=None):
    """A network in its last stage with random parameters, states and statistics.

    Earlier stages are run for a few steps before they are frozen, so frozen
    features carry non-trivial states and normalizer statistics. Traces start
    at zero, matching the start of the oracle's history.
    """
    rng = np.random.default_rng(seed)
    if normalize is None:
        normalize = bool(seed % 2 == 0)
    if topology == "tbptt":
        net = DenseLSTM(N_OBS, int(rng.integers(1, 4)), None, seed=seed, normalize=normalize)
        net.theta[:] = rng.uniform(-1.0, 1.0, net.n_params)
        for _ in range(int(rng.integers(0, 10))):
            net.step(rng.uniform(-1, 1, N_OBS))
        net.window.clear()
        return net
    u, stages = SHAPES[topology]
    net = Network(N_OBS, StageSpec(u, 10, stages), seed=seed, normalize=normalize)
    while True:
        lo = net.frozen_ranges()[-1][1] if net.n_frozen else 0
        n = net.n_params
        net.theta[lo:n] = rng.uniform(-1.0, 1.0, n - lo)
        for _ in range(int(rng.integers(1, 10))):
            net.step(rng.uniform(-1, 1, N_OBS))
        if net.stage + 1 == stages:
            break
        net.advance_stage()
    net.TH[:] = 0.0
    net.TC[:] = 0.0
    return net


def check_instance(net, xs, fd_targets=()):
    """Returns (max |forward - bptt| over all steps, max relative fd error)."""
    snap = net.clone()
    grads = np.array([net.step(x)[1] for x in xs])
    _, J = oracle.bptt_jacobian(snap, xs)
    max_abs = float(np.max(np.abs(grads - J)))
    fd_rel = 0.0
    for t in fd_targets:
        fd = oracle.finite_diff(snap, xs, t)
        g = J[t]
        mask = np.abs(g) > FD_MIN
        if mask.any():
            fd_rel = max(fd_rel, float(np.max(np.abs(fd[mask] - g[mask]) / np.abs(g[mask]))))
    return max_abs, fd_rel


def verify_gradients(topology, instances=50, steps=200, seed=0, fd_checks=None):
    """Run ``instances`` random checks; finite differences on the first ``fd_checks``."""
    fd_checks = instances if fd_checks is None else fd_checks
    worst_abs = 0.0
    worst_fd = 0.0
    for i in range(instances):
        s = seed * 100_003 + i
        net = random_instance(topology, s)
        xs = np.random.default_rng(s + 7).uniform(-1, 1, (steps, N_OBS))
        targets = (steps - 1, steps // 2) if i < fd_checks else ()
        a, f = check_instance(net, xs, targets)
        worst_abs = max(worst_abs, a)
        worst_fd = max(worst_fd, f)
    return {"topology": topology, "instances": instances, "max_abs": worst_abs,
            "max_fd_rel": worst_fd,
            "ok": worst_abs <= ABS_TOL and worst_fd <= FD_REL_TOL}
