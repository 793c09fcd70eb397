"""Reference gradients by full-history reverse accumulation and by finite differences.

Everything here is plain numpy written independently of the compiled kernels.
It is slow on purpose and only meant for verification. Normalization statistics
are treated as constants: the forward replay records the running mean and scale
of every feature at every step and both oracles differentiate with those values
held fixed.

Each function takes a snapshot of a network (the object as it was before the
stream starts) and leaves it untouched.
"""

from __future__ import annotations

import numpy as np

from .errors import UsageError
from .network import Network
from .tbptt import DenseLSTM


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def _as_batch(net, thetas, dtype):
    base = np.asarray(net.theta, dtype=float)
    if thetas is None:
        return base[None, :].astype(dtype)
    thetas = np.asarray(thetas, dtype=dtype)
    return thetas[None, :] if thetas.ndim == 1 else thetas


def _running_stats(h, mu, var, beta, eps, dtype):
    mu_new = beta * mu + (1 - beta) * h
    v = beta * var + (1 - beta) * (mu_new - h) * (mu - h)
    v = np.maximum(v, dtype(0))
    return mu_new, v, np.maximum(dtype(eps), np.sqrt(v))


# ---------------------------------------------------------------------------
# Staged columnar networks
# ---------------------------------------------------------------------------


def _layout(net: Network):
    K = net.n_live
    cols = []
    for k in range(K):
        o = int(net.col_off[k])
        m = int(net.col_m[k])
        cols.append((o, m, int(net.w_off[k]), k < net.n_frozen))
    return cols


def replay_columns(net: Network, xs, thetas=None, stats=None, dtype=np.float64, record=False):
    """Forward replay of a staged network for a batch of parameter vectors.

    Returns ``(ys, stats, tape)``: predictions of shape (B, T); per-step feature
    statistics ``(mu, scale)`` each of shape (T, K); and, with ``record``, the
    per-step, per-column values needed for the reverse pass (batch size 1).
    ``stats`` given means the normalization uses those values instead of
    updating its own running moments.
    """
    xs = np.asarray(xs, dtype=dtype)
    th = _as_batch(net, thetas, dtype)
    B = th.shape[0]
    T = xs.shape[0]
    cols = _layout(net)
    K = len(cols)
    n_obs = net.n_obs
    one = dtype(1)
    h = np.tile(np.asarray(net.h[:K], dtype=dtype), (B, 1))
    c = np.tile(np.asarray(net.c[:K], dtype=dtype), (B, 1))
    mu = np.tile(np.asarray(net.mu[:K], dtype=dtype), (B, 1))
    var = np.tile(np.asarray(net.var[:K], dtype=dtype), (B, 1))
    beta = dtype(net.norm_beta)
    out_mu = np.zeros((T, K), dtype=dtype)
    out_sd = np.ones((T, K), dtype=dtype)
    ys = np.zeros((B, T), dtype=dtype)
    tape = []
    for t in range(T):
        inp = np.zeros((B, n_obs + K), dtype=dtype)
        inp[:, :n_obs] = xs[t]
        y = np.zeros(B, dtype=dtype)
        rows = []
        for k, (o, m, wo, frozen) in enumerate(cols):
            W = th[:, o:o + 4 * m].reshape(B, 4, m)
            u = th[:, o + 4 * m:o + 4 * m + 4]
            b = th[:, o + 4 * m + 4:o + 4 * m + 8]
            x_in = inp[:, :m]
            z = np.einsum("bqj,bj->bq", W, x_in) + u * h[:, k:k + 1] + b
            i, f, og, g = _sigmoid(z[:, 0]), _sigmoid(z[:, 1]), _sigmoid(z[:, 2]), np.tanh(z[:, 3])
            c_new = f * c[:, k] + i * g
            h_new = og * np.tanh(c_new)
            if record:
                rows.append(dict(x=x_in[0].copy(), hp=h[0, k], cp=c[0, k], i=i[0], f=f[0],
                                 o=og[0], g=g[0], c=c_new[0]))
            h[:, k] = h_new
            c[:, k] = c_new
            if net.normalize:
                if stats is not None:
                    m_k, sd = stats[0][t, k], stats[1][t, k]
                elif frozen:
                    m_k = mu[:, k]
                    sd = np.maximum(dtype(net.norm_eps), np.sqrt(var[:, k]))
                else:
                    mu[:, k], var[:, k], sd = _running_stats(h_new, mu[:, k], var[:, k], beta,
                                                             net.norm_eps, dtype)
                    m_k = mu[:, k]
                hh = (h_new - m_k) / sd
                out_mu[t, k] = np.ravel(m_k)[0]
                out_sd[t, k] = np.ravel(sd)[0]
            else:
                hh = h_new
            inp[:, n_obs + k] = hh
            y = y + th[:, wo] * hh
            if record:
                rows[-1]["hhat"] = hh[0]
        ys[:, t] = y
        if record:
            tape.append(rows)
    return ys, (out_mu, out_sd), tape


def _columns_jacobian(net: Network, xs, dtype=np.float64):
    xs = np.asarray(xs, dtype=dtype)
    T = xs.shape[0]
    ys, (mu, sd), tape = replay_columns(net, xs, dtype=dtype, record=True)
    th = np.asarray(net.theta, dtype=dtype)
    cols = _layout(net)
    K = len(cols)
    n_obs = net.n_obs
    n = net.n_params
    J = np.zeros((T, n), dtype=dtype)
    carry_h = np.zeros((K, T), dtype=dtype)
    carry_c = np.zeros((K, T), dtype=dtype)
    for s in range(T - 1, -1, -1):
        d_in = np.zeros((n_obs + K, T), dtype=dtype)
        for k in range(K - 1, -1, -1):
            o, m, wo, frozen = cols[k]
            r = tape[s][k]
            J[s, wo] = r["hhat"]
            # adjoint of h_{s,k} for every target t >= s
            dhh = d_in[n_obs + k].copy()
            dhh[s] += th[wo]
            dh = carry_h[k] + dhh / sd[s, k]
            tc = np.tanh(r["c"])
            dc = carry_c[k] + dh * r["o"] * (1 - tc * tc)
            dz = np.stack([
                dc * r["g"] * r["i"] * (1 - r["i"]),
                dc * r["cp"] * r["f"] * (1 - r["f"]),
                dh * tc * r["o"] * (1 - r["o"]),
                dc * r["i"] * (1 - r["g"] * r["g"]),
            ])  # (4, T)
            W = th[o:o + 4 * m].reshape(4, m)
            u = th[o + 4 * m:o + 4 * m + 4]
            for q in range(4):
                J[:, o + q * m:o + (q + 1) * m] += np.outer(dz[q], r["x"])
            J[:, o + 4 * m:o + 4 * m + 4] += dz.T * r["hp"]
            J[:, o + 4 * m + 4:o + 4 * m + 8] += dz.T
            d_in[:m] += W.T @ dz
            carry_h[k] = u @ dz
            carry_c[k] = dc * r["f"]
    for o, m, _, frozen in cols:
        if frozen:
            J[:, o:o + 4 * m + 8] = 0
    return ys[0], J


# ---------------------------------------------------------------------------
# Dense LSTM
# ---------------------------------------------------------------------------


def replay_dense(net: DenseLSTM, xs, thetas=None, stats=None, dtype=np.float64, record=False):
    """Forward replay of a dense LSTM; same return convention as :func:`replay_columns`."""
    xs = np.asarray(xs, dtype=dtype)
    th = _as_batch(net, thetas, dtype)
    B = th.shape[0]
    T = xs.shape[0]
    d, m = net.d, net.m
    a_u = 4 * d * m
    a_b = a_u + 4 * d * d
    a_w = a_b + 4 * d
    W = th[:, :a_u].reshape(B, 4, d, m)
    U = th[:, a_u:a_b].reshape(B, 4, d, d)
    bb = th[:, a_b:a_w].reshape(B, 4, d)
    w = th[:, a_w:a_w + d]
    h = np.tile(np.asarray(net.h, dtype=dtype), (B, 1))
    c = np.tile(np.asarray(net.c, dtype=dtype), (B, 1))
    mu = np.tile(np.asarray(net.mu, dtype=dtype), (B, 1))
    var = np.tile(np.asarray(net.var, dtype=dtype), (B, 1))
    beta = dtype(net.norm_beta)
    out_mu = np.zeros((T, d), dtype=dtype)
    out_sd = np.ones((T, d), dtype=dtype)
    ys = np.zeros((B, T), dtype=dtype)
    tape = []
    for t in range(T):
        z = np.einsum("bqrj,bj->bqr", W, np.broadcast_to(xs[t], (B, m)))
        z = z + np.einsum("bqrl,bl->bqr", U, h) + bb
        i, f, og, g = _sigmoid(z[:, 0]), _sigmoid(z[:, 1]), _sigmoid(z[:, 2]), np.tanh(z[:, 3])
        c_new = f * c + i * g
        h_new = og * np.tanh(c_new)
        if record:
            tape.append(dict(x=xs[t].copy(), hp=h[0].copy(), cp=c[0].copy(), i=i[0], f=f[0],
                             o=og[0], g=g[0], c=c_new[0]))
        h, c = h_new, c_new
        if net.normalize:
            if stats is not None:
                m_k, sd = stats[0][t], stats[1][t]
            else:
                mu, var, sd = _running_stats(h, mu, var, beta, net.norm_eps, dtype)
                m_k = mu
            hh = (h - m_k) / sd
            out_mu[t] = np.atleast_2d(m_k)[0]
            out_sd[t] = np.atleast_2d(sd)[0]
        else:
            hh = h
        if record:
            tape[-1]["hhat"] = hh[0].copy()
        ys[:, t] = np.sum(w * hh, axis=1)
    return ys, (out_mu, out_sd), tape


def _dense_jacobian(net: DenseLSTM, xs, dtype=np.float64):
    xs = np.asarray(xs, dtype=dtype)
    T = xs.shape[0]
    ys, (mu, sd), tape = replay_dense(net, xs, dtype=dtype, record=True)
    d, m = net.d, net.m
    th = np.asarray(net.theta, dtype=dtype)
    a_u = 4 * d * m
    a_b = a_u + 4 * d * d
    a_w = a_b + 4 * d
    U = th[a_u:a_b].reshape(4, d, d)
    w = th[a_w:]
    J = np.zeros((T, net.n_params), dtype=dtype)
    carry_h = np.zeros((d, T), dtype=dtype)
    carry_c = np.zeros((d, T), dtype=dtype)
    for s in range(T - 1, -1, -1):
        r = tape[s]
        J[s, a_w:] = r["hhat"]
        dh = carry_h.copy()
        dh[:, s] += w / sd[s]
        tc = np.tanh(r["c"])[:, None]
        dc = carry_c + dh * (r["o"][:, None] * (1 - tc * tc))
        dz = np.stack([
            dc * (r["g"] * r["i"] * (1 - r["i"]))[:, None],
            dc * (r["cp"] * r["f"] * (1 - r["f"]))[:, None],
            dh * (tc * (r["o"] * (1 - r["o"]))[:, None]),
            dc * (r["i"] * (1 - r["g"] * r["g"]))[:, None],
        ])  # (4, d, T)
        J[:, :a_u] += np.einsum("qrt,j->tqrj", dz, r["x"]).reshape(T, -1)
        J[:, a_u:a_b] += np.einsum("qrt,l->tqrl", dz, r["hp"]).reshape(T, -1)
        J[:, a_b:a_w] += dz.transpose(2, 0, 1).reshape(T, -1)
        carry_h = np.einsum("qrl,qrt->lt", U, dz)
        carry_c = dc * r["f"][:, None]
    return ys[0], J


# ---------------------------------------------------------------------------
# Public entry points
# ---------------------------------------------------------------------------


def bptt_jacobian(net, xs, dtype=np.float64):
    """Predictions and the full (T, n_params) matrix of dy_t/dtheta over a stream.

    One reverse sweep covers every target at once: each adjoint is a vector
    with one entry per target time. Frozen parameters get zero columns.
    """
    if isinstance(net, DenseLSTM):
        return _dense_jacobian(net, xs, dtype)
    if isinstance(net, Network):
        return _columns_jacobian(net, xs, dtype)
    raise UsageError(f"unsupported network type {type(net).__name__}")


def bptt_full(net, xs, t, dtype=np.float64):
    """dy_t/dtheta by reverse accumulation over the whole history up to ``t``."""
    xs = np.asarray(xs)
    if not 0 <= t < xs.shape[0]:
        raise UsageError(f"target index {t} outside stream of length {xs.shape[0]}")
    _, J = bptt_jacobian(net, xs[:t + 1], dtype)
    return J[t]


def _replay(net, xs, thetas, stats, dtype):
    fn = replay_dense if isinstance(net, DenseLSTM) else replay_columns
    ys, st, _ = fn(net, xs, thetas=thetas, stats=stats, dtype=dtype)
    return ys, st


def finite_diff(net, xs, t, delta=1e-6, dtype=np.longdouble, params=None):
    """Central differences of y_t for every existing parameter.

    Replays the stream with each parameter nudged by +-``delta``; normalization
    uses the statistics of the unperturbed run. Frozen parameters are reported
    as zero. Extended precision is used by default so that round-off stays well
    below the truncation error.
    """
    if delta <= 0:
        raise UsageError("delta must be positive")
    xs = np.asarray(xs, dtype=float)[:t + 1]
    n = net.n_params
    idx = np.arange(n) if params is None else np.asarray(params)
    if isinstance(net, Network):
        frozen = net.frozen_mask()
        idx = idx[~frozen[idx]]
    base = np.asarray(net.theta, dtype=dtype)
    _, stats = _replay(net, xs, None, None, dtype)
    grad = np.zeros(n)
    step = dtype(delta)
    for chunk in np.array_split(idx, max(1, len(idx) // 64)):
        if len(chunk) == 0:
            continue
        thetas = np.tile(base, (2 * len(chunk), 1))
        rows = np.arange(len(chunk))
        thetas[rows, chunk] += step
        thetas[rows + len(chunk), chunk] -= step
        ys, _ = _replay(net, xs, thetas, stats, dtype)
        yt = ys[:, t]
        grad[chunk] = np.asarray((yt[:len(chunk)] - yt[len(chunk):]) / (2 * step), dtype=float)
    return grad
