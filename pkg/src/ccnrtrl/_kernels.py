"""Scalar-loop kernels behind the columnar networks, the dense LSTM and TD(lambda).

Every function here is written as explicit loops over flat arrays so the same
source serves two purposes: compiled with numba it is the fast path used for
training, and executed as plain Python over arrays of counting scalars it is
the instrumented path used by :mod:`ccnrtrl.compute` to measure operations.
Kernels never allocate float arrays; callers pass every buffer in.

Column parameter layout (``4m + 8`` entries starting at a column offset):
``W_i[0:m], W_f[0:m], W_o[0:m], W_g[0:m], u_i, u_f, u_o, u_g, b_i, b_f, b_o, b_g``.

Dense LSTM layout (hidden width ``d``, input width ``m``):
``W[4, d, m], U[4, d, d], b[4, d], w[d]`` with gates ordered i, f, o, g.
"""

from math import exp, sqrt, tanh

if globals().get("_PLAIN_PYTHON"):

    def jit(fn):
        return fn

else:
    from numba import njit

    def jit(fn):
        return njit(cache=True)(fn)


# Indices into the per-column gate cache.
GATE_I, GATE_F, GATE_O, GATE_G, TANH_C = 0, 1, 2, 3, 4
N_CACHE = 5

# Per-unit backward coefficients cached by the dense forward pass.
COEF_A, COEF_O, COEF_I, COEF_F, COEF_G, COEF_FORGET = 0, 1, 2, 3, 4, 5
N_COEF = 6


@jit
def column_forward(theta, o, m, inp, hp, cp, cache):
    """Advance one column; writes gates and tanh(c) into ``cache``, returns (h, c)."""
    r = o + 4 * m
    zi = theta[r] * hp + theta[r + 4]
    zf = theta[r + 1] * hp + theta[r + 5]
    zo = theta[r + 2] * hp + theta[r + 6]
    zg = theta[r + 3] * hp + theta[r + 7]
    for j in range(m):
        xj = inp[j]
        zi += theta[o + j] * xj
        zf += theta[o + m + j] * xj
        zo += theta[o + 2 * m + j] * xj
        zg += theta[o + 3 * m + j] * xj
    i = 1.0 / (1.0 + exp(-zi))
    f = 1.0 / (1.0 + exp(-zf))
    og = 1.0 / (1.0 + exp(-zo))
    g = tanh(zg)
    c = f * cp + i * g
    tc = tanh(c)
    cache[GATE_I] = i
    cache[GATE_F] = f
    cache[GATE_O] = og
    cache[GATE_G] = g
    cache[TANH_C] = tc
    return og * tc, c


@jit
def column_traces(theta, o, m, inp, hp, cp, cache, TH, TC):
    """Forward-mode update of dh/dp and dc/dp for every parameter of one column.

    Gate partials share the form act'(z) * (direct + u_gate * TH_p(t-1)); the
    per-column factors below are everything that does not depend on p.
    """
    i = cache[GATE_I]
    f = cache[GATE_F]
    og = cache[GATE_O]
    g = cache[GATE_G]
    tc = cache[TANH_C]
    r = o + 4 * m
    dsi = i * (1.0 - i)
    dsf = f * (1.0 - f)
    dso = og * (1.0 - og)
    dgg = 1.0 - g * g
    ki = dsi * theta[r]
    kf = dsf * theta[r + 1]
    ko = dso * theta[r + 2]
    kg = dgg * theta[r + 3]
    # TC_p(t) = f TC_p + alpha TH_p + (direct into the cell path)
    alpha = cp * kf + i * kg + g * ki
    # TH_p(t) = A TC_p(t) + beta TH_p + (direct into the output gate)
    a_c = og * (1.0 - tc * tc)
    beta = tc * ko
    ei = g * dsi
    ef = cp * dsf
    eg = i * dgg
    eo = tc * dso

    for j in range(m):
        xj = inp[j]
        p = o + j
        th = TH[p]
        tcn = f * TC[p] + alpha * th + ei * xj
        TC[p] = tcn
        TH[p] = a_c * tcn + beta * th

        p = o + m + j
        th = TH[p]
        tcn = f * TC[p] + alpha * th + ef * xj
        TC[p] = tcn
        TH[p] = a_c * tcn + beta * th

        p = o + 2 * m + j
        th = TH[p]
        tcn = f * TC[p] + alpha * th
        TC[p] = tcn
        TH[p] = a_c * tcn + beta * th + eo * xj

        p = o + 3 * m + j
        th = TH[p]
        tcn = f * TC[p] + alpha * th + eg * xj
        TC[p] = tcn
        TH[p] = a_c * tcn + beta * th

    # recurrent weights (direct term h(t-1)) then biases (direct term 1)
    for base, hx in ((r, hp), (r + 4, 1.0)):
        p = base
        th = TH[p]
        tcn = f * TC[p] + alpha * th + ei * hx
        TC[p] = tcn
        TH[p] = a_c * tcn + beta * th

        p = base + 1
        th = TH[p]
        tcn = f * TC[p] + alpha * th + ef * hx
        TC[p] = tcn
        TH[p] = a_c * tcn + beta * th

        p = base + 2
        th = TH[p]
        tcn = f * TC[p] + alpha * th
        TC[p] = tcn
        TH[p] = a_c * tcn + beta * th + eo * hx

        p = base + 3
        th = TH[p]
        tcn = f * TC[p] + alpha * th + eg * hx
        TC[p] = tcn
        TH[p] = a_c * tcn + beta * th


@jit
def normalize_feature(h, k, mu, var, update, beta, eps):
    """Running-moment normalization of feature ``k``; returns (h_hat, max(eps, sigma))."""
    if update:
        mu_old = mu[k]
        mu_new = beta * mu_old + (1.0 - beta) * h
        v = beta * var[k] + (1.0 - beta) * (mu_new - h) * (mu_old - h)
        if v < 0.0:
            v = 0.0
        mu[k] = mu_new
        var[k] = v
    sd = sqrt(var[k])
    if sd < eps:
        sd = eps
    return (h - mu[k]) / sd, sd


@jit
def network_step(x, theta, w_off, col_off, col_m, n_live, n_frozen, h, c, cache,
                 TH, TC, mu, var, normalize, nbeta, neps, inp, hhat, grad):
    """One time step of a staged columnar network; fills ``grad`` and returns y."""
    n_obs = x.shape[0]
    for j in range(n_obs):
        inp[j] = x[j]
    y = 0.0
    for k in range(n_live):
        o = col_off[k]
        m = col_m[k]
        hp = h[k]
        cp = c[k]
        hn, cn = column_forward(theta, o, m, inp, hp, cp, cache[k])
        active = k >= n_frozen
        if active:
            column_traces(theta, o, m, inp, hp, cp, cache[k], TH, TC)
        h[k] = hn
        c[k] = cn
        if normalize:
            hh, sd = normalize_feature(hn, k, mu, var, active, nbeta, neps)
        else:
            hh = hn
            sd = 1.0
        hhat[k] = hh
        inp[n_obs + k] = hh
        wk = theta[w_off[k]]
        y += wk * hh
        grad[w_off[k]] = hh
        end = o + 4 * m + 8
        if active:
            s = wk / sd
            for p in range(o, end):
                grad[p] = s * TH[p]
        else:
            for p in range(o, end):
                grad[p] = 0.0
    return y


@jit
def reset_columns(col_off, col_m, n_live, n_frozen, h, c, TH, TC):
    for k in range(n_live):
        h[k] = 0.0
        c[k] = 0.0
        if k >= n_frozen:
            for p in range(col_off[k], col_off[k] + 4 * col_m[k] + 8):
                TH[p] = 0.0
                TC[p] = 0.0


@jit
def td_update(theta, n, z, v, bc, gprev, delta, lam_gamma, alpha, adaptive, beta2, eps_opt):
    """z <- lambda*gamma*z + grad(prev); theta <- theta + alpha*delta*z (optionally RMS-scaled).

    ``bc`` is the per-parameter bias-correction accumulator; pass an empty array
    to scale by the raw second moment.
    """
    ad = alpha * delta
    if adaptive:
        correct = bc.shape[0] > 0
        for p in range(n):
            g = gprev[p]
            zp = lam_gamma * z[p] + g
            z[p] = zp
            vp = beta2 * v[p] + (1.0 - beta2) * (g * g)
            v[p] = vp
            if correct:
                b = beta2 * bc[p] + (1.0 - beta2)
                bc[p] = b
                vp = vp / b
            theta[p] += ad * zp / (sqrt(vp) + eps_opt)
    else:
        for p in range(n):
            zp = lam_gamma * z[p] + gprev[p]
            z[p] = zp
            theta[p] += ad * zp


@jit
def _learn_from(y, t, cum, term, gamma, lam, alpha, adaptive, beta2, eps_opt,
                theta, n, z, v, bc, gprev, gnew, status, deltas):
    """Shared TD bookkeeping after the prediction for record ``t`` is known.

    ``status`` holds [y_prev, started]. Returns False on a non-finite TD error.
    """
    if status[1] != 0.0:
        gt = 0.0 if term[t] else gamma
        delta = cum[t] + gt * y - status[0]
        deltas[t] = delta
        if not (delta - delta == 0.0):
            return False
        td_update(theta, n, z, v, bc, gprev, delta, lam * gamma, alpha, adaptive, beta2, eps_opt)
    else:
        deltas[t] = 0.0
    for p in range(n):
        gprev[p] = gnew[p]
    status[0] = y
    status[1] = 1.0
    return True


@jit
def run_columns(obs, cum, term, gamma, lam, alpha, adaptive, beta2, eps_opt,
                theta, w_off, col_off, col_m, n_live, n_frozen, h, c, cache, TH, TC,
                mu, var, normalize, nbeta, neps, inp, hhat,
                n, z, v, bc, gprev, gnew, status, preds, deltas):
    """Online TD(lambda) over a block of records; returns -1 or the faulting index."""
    for t in range(obs.shape[0]):
        y = network_step(obs[t], theta, w_off, col_off, col_m, n_live, n_frozen, h, c,
                         cache, TH, TC, mu, var, normalize, nbeta, neps, inp, hhat, gnew)
        preds[t] = y
        if not _learn_from(y, t, cum, term, gamma, lam, alpha, adaptive, beta2, eps_opt,
                           theta, n, z, v, bc, gprev, gnew, status, deltas):
            return t
        if term[t]:
            reset_columns(col_off, col_m, n_live, n_frozen, h, c, TH, TC)
            for p in range(n):
                z[p] = 0.0
            status[1] = 0.0
    return -1


# ---------------------------------------------------------------------------
# Dense LSTM with a truncated backward pass
# ---------------------------------------------------------------------------


@jit
def dense_forward(theta, d, m, x, h, c, zbuf, hprev, coef):
    """One dense LSTM step. Stores h(t-1) in ``hprev`` and backward coefficients in ``coef``."""
    uo = 4 * d * m
    bo = uo + 4 * d * d
    for q in range(4):
        for r in range(d):
            row = q * d + r
            acc = theta[bo + row]
            for j in range(m):
                acc += theta[row * m + j] * x[j]
            for l in range(d):
                acc += theta[uo + row * d + l] * h[l]
            zbuf[row] = acc
    for l in range(d):
        hprev[l] = h[l]
    for r in range(d):
        i = 1.0 / (1.0 + exp(-zbuf[r]))
        f = 1.0 / (1.0 + exp(-zbuf[d + r]))
        og = 1.0 / (1.0 + exp(-zbuf[2 * d + r]))
        g = tanh(zbuf[3 * d + r])
        cp = c[r]
        cn = f * cp + i * g
        tc = tanh(cn)
        coef[COEF_A, r] = og * (1.0 - tc * tc)
        coef[COEF_O, r] = tc * (og * (1.0 - og))
        coef[COEF_I, r] = g * (i * (1.0 - i))
        coef[COEF_F, r] = cp * (f * (1.0 - f))
        coef[COEF_G, r] = i * (1.0 - g * g)
        coef[COEF_FORGET, r] = f
        c[r] = cn
        h[r] = og * tc


@jit
def dense_backward(theta, d, m, win_x, win_h, win_coef, win_u, newest, count, cap,
                   dh, dc, dhp, da, grad):
    """Accumulate dy/dtheta over the ``count`` newest window records into ``grad``.

    ``dh`` must hold dy/dh(t) on entry. Head-weight entries of ``grad`` are left
    untouched; all other entries are overwritten.
    """
    uo = 4 * d * m
    bo = uo + 4 * d * d
    for p in range(bo + 4 * d):
        grad[p] = 0.0
    for r in range(d):
        dc[r] = 0.0
    for n in range(count):
        s = (newest - n) % cap
        for r in range(d):
            dcr = dh[r] * win_coef[s, COEF_A, r] + dc[r]
            da[2 * d + r] = dh[r] * win_coef[s, COEF_O, r]
            da[r] = dcr * win_coef[s, COEF_I, r]
            da[3 * d + r] = dcr * win_coef[s, COEF_G, r]
            da[d + r] = dcr * win_coef[s, COEF_F, r]
            dc[r] = dcr * win_coef[s, COEF_FORGET, r]
        last = n == count - 1
        for l in range(d):
            dhp[l] = 0.0
        for q in range(4):
            for r in range(d):
                row = q * d + r
                a = da[row]
                grad[bo + row] += a
                for j in range(m):
                    grad[row * m + j] += a * win_x[s, j]
                for l in range(d):
                    grad[uo + row * d + l] += a * win_h[s, l]
                if not last:
                    for l in range(d):
                        dhp[l] += win_u[s, row * d + l] * a
        for l in range(d):
            dh[l] = dhp[l]


@jit
def dense_step(x, theta, d, m, h, c, zbuf, win_x, win_h, win_coef, win_u, ring,
               cap, k, normalize, mu, var, nbeta, neps, hhat, dh, dc, dhp, da, grad):
    """Forward + truncated gradient. ``ring`` holds [newest, count]; returns y."""
    newest = (ring[0] + 1) % cap
    ring[0] = newest
    if ring[1] < cap:
        ring[1] += 1
    dense_forward(theta, d, m, x, h, c, zbuf, win_h[newest], win_coef[newest])
    for j in range(m):
        win_x[newest, j] = x[j]
    uo = 4 * d * m
    for p in range(4 * d * d):
        win_u[newest, p] = theta[uo + p]
    wo = uo + 4 * d * d + 4 * d
    y = 0.0
    for r in range(d):
        if normalize:
            hh, sd = normalize_feature(h[r], r, mu, var, True, nbeta, neps)
        else:
            hh = h[r]
            sd = 1.0
        hhat[r] = hh
        y += theta[wo + r] * hh
        grad[wo + r] = hh
        dh[r] = theta[wo + r] / sd
    count = ring[1]
    if k > 0 and count > k:
        count = k
    dense_backward(theta, d, m, win_x, win_h, win_coef, win_u, newest, count, cap,
                   dh, dc, dhp, da, grad)
    return y


@jit
def run_dense(obs, cum, term, gamma, lam, alpha, adaptive, beta2, eps_opt,
              theta, d, m, h, c, zbuf, win_x, win_h, win_coef, win_u, ring, cap, k,
              normalize, mu, var, nbeta, neps, hhat, dh, dc, dhp, da,
              n, z, v, bc, gprev, gnew, status, preds, deltas):
    for t in range(obs.shape[0]):
        y = dense_step(obs[t], theta, d, m, h, c, zbuf, win_x, win_h, win_coef, win_u,
                       ring, cap, k, normalize, mu, var, nbeta, neps, hhat, dh, dc, dhp,
                       da, gnew)
        preds[t] = y
        if not _learn_from(y, t, cum, term, gamma, lam, alpha, adaptive, beta2, eps_opt,
                           theta, n, z, v, bc, gprev, gnew, status, deltas):
            return t
        if term[t]:
            for r in range(d):
                h[r] = 0.0
                c[r] = 0.0
            ring[1] = 0
            for p in range(n):
                z[p] = 0.0
            status[1] = 0.0
    return -1


@jit
def discounted_returns(cum, term, gamma, out):
    """out[t] = cum[t+1] + gamma * out[t+1], zero on terminal records and at the end."""
    T = cum.shape[0]
    if T == 0:
        return
    out[T - 1] = 0.0
    for t in range(T - 2, -1, -1):
        if term[t]:
            out[t] = 0.0
        else:
            out[t] = cum[t + 1] + gamma * out[t + 1]
