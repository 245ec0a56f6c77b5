"""Compiled inner loops. All abundance arrays here carry all S+1 species."""
from __future__ import annotations

import math

import numba as nb
import numpy as np

_JIT = dict(cache=True, nogil=True)


# ---------------------------------------------------------------- environment chain

@nb.njit(**_JIT)
def next_env(Q, e, v):
    """Pick the next environment from row e of Q using a uniform v."""
    K = Q.shape[0]
    rate = -Q[e, e]
    target = v * rate
    acc = 0.0
    last = e
    for j in range(K):
        if j == e or Q[e, j] <= 0.0:
            continue
        acc += Q[e, j]
        last = j
        if target < acc:
            return j
    return last


@nb.njit(**_JIT)
def chain_from_uniforms(Q, env0, T, E, V):
    """Jump times in (0, T) and post-jump states driven by Exp(1) draws E and uniforms V.

    Returns the number of jumps, or -1 when the draws ran out before T.
    """
    times = np.empty(E.size)
    states = np.empty(E.size, np.int64)
    t = 0.0
    e = env0
    for m in range(E.size):
        rate = -Q[e, e]
        if rate <= 0.0:
            return times, states, m
        t += E[m] / rate
        if t >= T:
            return times, states, m
        e = next_env(Q, e, V[m])
        times[m] = t
        states[m] = e
    return times, states, -1


# ---------------------------------------------------------------- log-ratio flow

@nb.njit(**_JIT)
def _expit(d):
    if d >= 0.0:
        return 1.0 / (1.0 + math.exp(-d))
    e = math.exp(d)
    return e / (1.0 + e)


@nb.njit(**_JIT)
def _pair_rate(y, sa, sb):
    xa = _expit(y)
    xb = _expit(-y)
    return (sa - sb) / (1.0 + sa * xa + sb * xb)


@nb.njit(**_JIT)
def flow_pair(y, sa, sb, dt, h_max):
    """RK4 for y = log(x_a / x_b) when exactly two species are present."""
    if dt <= 0.0:
        return y
    n = int(math.ceil(dt / h_max - 1e-9))
    if n < 1:
        n = 1
    h = dt / n
    for _ in range(n):
        k1 = _pair_rate(y, sa, sb)
        k2 = _pair_rate(y + 0.5 * h * k1, sa, sb)
        k3 = _pair_rate(y + 0.5 * h * k2, sa, sb)
        k4 = _pair_rate(y + h * k3, sa, sb)
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return y


@nb.njit(**_JIT)
def _multi_rate(y, sig, ref, out, w):
    n = y.size
    m = y[0]
    for k in range(1, n):
        if y[k] > m:
            m = y[k]
    z = 0.0
    for k in range(n):
        w[k] = math.exp(y[k] - m)
        z += w[k]
    A = 0.0
    for k in range(n):
        A += sig[k] * w[k]
    A /= z
    c = 1.0 / (1.0 + A)
    for k in range(n):
        out[k] = (sig[k] - sig[ref]) * c


@nb.njit(**_JIT)
def flow_multi(y, sig, ref, dt, h_max, work):
    """RK4 in log-ratio coordinates, in place. work has shape (6, n)."""
    if dt <= 0.0:
        return
    n_sub = int(math.ceil(dt / h_max - 1e-9))
    if n_sub < 1:
        n_sub = 1
    h = dt / n_sub
    n = y.size
    k1, k2, k3, k4, tmp, w = work[0], work[1], work[2], work[3], work[4], work[5]
    for _ in range(n_sub):
        _multi_rate(y, sig, ref, k1, w)
        for k in range(n):
            tmp[k] = y[k] + 0.5 * h * k1[k]
        _multi_rate(tmp, sig, ref, k2, w)
        for k in range(n):
            tmp[k] = y[k] + 0.5 * h * k2[k]
        _multi_rate(tmp, sig, ref, k3, w)
        for k in range(n):
            tmp[k] = y[k] + h * k3[k]
        _multi_rate(tmp, sig, ref, k4, w)
        for k in range(n):
            y[k] += h / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k])



@nb.njit(**_JIT)
def _active(xfull):
    n = 0
    for k in range(xfull.size):
        if xfull[k] > 0.0:
            n += 1
    act = np.empty(n, np.int64)
    j = 0
    for k in range(xfull.size):
        if xfull[k] > 0.0:
            act[j] = k
            j += 1
    return act


@nb.njit(**_JIT)
def _to_logratio(xfull, act):
    n = act.size
    ref = 0
    for j in range(n):
        if xfull[act[j]] > xfull[act[ref]]:
            ref = j
    y = np.empty(n)
    lr = math.log(xfull[act[ref]])
    for j in range(n):
        y[j] = math.log(xfull[act[j]]) - lr
    return y, ref


@nb.njit(**_JIT)
def _to_full(y, act, out):
    for k in range(out.size):
        out[k] = 0.0
    n = act.size
    if n == 1:
        out[act[0]] = 1.0
        return
    if n == 2:
        out[act[0]] = _expit(y[0] - y[1])
        out[act[1]] = _expit(y[1] - y[0])
        return
    m = y[0]
    for j in range(1, n):
        if y[j] > m:
            m = y[j]
    z = 0.0
    for j in range(n):
        z += math.exp(y[j] - m)
    for j in range(n):
        out[act[j]] = math.exp(y[j] - m) / z


@nb.njit(**_JIT)
def _advance(y, act, ref, sigfull, dt, h_max, work):
    n = act.size
    if n <= 1 or dt <= 0.0:
        return
    if n == 2:
        d = flow_pair(y[0] - y[1], sigfull[act[0]], sigfull[act[1]], dt, h_max)
        if ref == 0:
            y[1] = -d
        else:
            y[0] = d
        return
    sig = np.empty(n)
    for j in range(n):
        sig[j] = sigfull[act[j]]
    flow_multi(y, sig, ref, dt, h_max, work)


@nb.njit(**_JIT)
def flow_full(xfull, sigfull, dt, h_max):
    """Flow of the replicator field over time dt; absent species stay absent."""
    act = _active(xfull)
    out = xfull.copy()
    if act.size <= 1:
        return out
    y, ref = _to_logratio(xfull, act)
    work = np.empty((6, act.size))
    _advance(y, act, ref, sigfull, dt, h_max, work)
    _to_full(y, act, out)
    return out


@nb.njit(**_JIT)
def pdmp_path(x0full, fitfull, env0, jump_times, jump_states, T, dt_sample, h_max):
    """Integrate along a given environment path; sample every dt_sample and at every jump."""
    S1 = x0full.size
    n_grid = int(math.floor(T / dt_sample + 1e-9)) + 1
    last_on_grid = abs((n_grid - 1) * dt_sample - T) <= 1e-9 * max(1.0, T)
    n_samp = n_grid if last_on_grid else n_grid + 1
    ts = np.empty(n_samp)
    for i in range(n_grid):
        ts[i] = i * dt_sample
    ts[n_samp - 1] = T
    xs = np.empty((n_samp, S1))
    es = np.empty(n_samp, np.int64)
    m = jump_times.size
    bp = np.empty((m, S1))

    act = _active(x0full)
    y, ref = _to_logratio(x0full, act)
    work = np.empty((6, act.size))
    cur = np.empty(S1)
    e = env0
    t = 0.0
    k = 0
    for i in range(n_samp):
        target = ts[i]
        while k < m and jump_times[k] <= target:
            _advance(y, act, ref, fitfull[e], jump_times[k] - t, h_max, work)
            t = jump_times[k]
            _to_full(y, act, cur)
            for c in range(S1):
                bp[k, c] = cur[c]
            e = jump_states[k]
            k += 1
        _advance(y, act, ref, fitfull[e], target - t, h_max, work)
        t = target
        _to_full(y, act, cur)
        for c in range(S1):
            xs[i, c] = cur[c]
        es[i] = e
    return ts, xs, es, bp


# ---------------------------------------------------------------- Moran chain

@nb.njit(**_JIT)
def _pick(weights, total, u):
    target = u * total
    acc = 0.0
    for k in range(weights.size):
        acc += weights[k]
        if target < acc:
            return k
    for k in range(weights.size - 1, -1, -1):
        if weights[k] > 0.0:
            return k
    return weights.size - 1


@nb.njit(**_JIT)
def moran_event(counts, sigfull, J, u_death, u_parent):
    """Apply one birth-death event in place; returns (parent, dead) species indices."""
    S1 = counts.size
    dw = np.empty(S1)
    bw = np.empty(S1)
    btot = 0.0
    for k in range(S1):
        dw[k] = counts[k]
        bw[k] = counts[k] * (1.0 + sigfull[k])
        btot += bw[k]
    dead = _pick(dw, float(J), u_death)
    parent = _pick(bw, btot, u_parent)
    counts[dead] -= 1
    counts[parent] += 1
    return parent, dead


@nb.njit(**_JIT)
def moran_path(counts0, env0, fitfull, Q, alpha, J, n_events, record_every, seed, stop_at_absorption):
    np.random.seed(seed)
    S1 = counts0.size
    n_rec = n_events // record_every + 2
    rec_n = np.empty(n_rec, np.int64)
    rec_c = np.empty((n_rec, S1), np.int64)
    rec_e = np.empty(n_rec, np.int64)
    counts = counts0.copy()
    e = env0
    r = 0
    rec_n[0] = 0
    rec_c[0] = counts
    rec_e[0] = e
    r = 1
    n = 0
    while n < n_events:
        moran_event(counts, fitfull[e], J, np.random.random(), np.random.random())
        pj = alpha[e] * (-Q[e, e]) / J
        if pj > 0.0 and np.random.random() < pj:
            e = next_env(Q, e, np.random.random())
        n += 1
        absorbed = False
        if stop_at_absorption:
            for k in range(S1):
                if counts[k] == J:
                    absorbed = True
        if n % record_every == 0 or absorbed or n == n_events:
            rec_n[r] = n
            rec_c[r] = counts
            rec_e[r] = e
            r += 1
        if absorbed:
            break
    return rec_n[:r], rec_c[:r], rec_e[:r]


# ---------------------------------------------------------------- coupled convergence replicate

@nb.njit(**_JIT)
def _poly(x, coefs, expo):
    v = 0.0
    for m in range(coefs.size):
        term = coefs[m]
        for k in range(x.size):
            term *= x[k] ** expo[m, k]
        v += term
    return v


@nb.njit(**_JIT)
def _poly_grad(x, coefs, expo, out):
    for k in range(x.size):
        out[k] = 0.0
    for m in range(coefs.size):
        for k in range(x.size):
            if expo[m, k] == 0:
                continue
            term = coefs[m] * expo[m, k] * x[k] ** (expo[m, k] - 1)
            for l in range(x.size):
                if l != k:
                    term *= x[l] ** expo[m, l]
            out[k] += term


@nb.njit(**_JIT)
def _coupled_env_path(env0, Q, J, t_end, N):
    """Switch times on both clocks from shared uniforms.

    The PDMP holds for -log(U) / rate; the chain holds for ceil(log(U) / log(1 - rate/J))
    events, which is exactly geometric with success probability rate / J.
    """
    cap = 64
    ctimes = np.empty(cap)
    dsteps = np.empty(cap, np.int64)
    states = np.empty(cap + 1, np.int64)
    states[0] = env0
    e = env0
    ct = 0.0
    ds = 0
    m = 0
    while ct < t_end or ds < N:
        rate = -Q[e, e]
        if rate <= 0.0:
            break
        if m == cap:
            cap *= 2
            nct = np.empty(cap)
            nds = np.empty(cap, np.int64)
            nst = np.empty(cap + 1, np.int64)
            nct[:m] = ctimes[:m]
            nds[:m] = dsteps[:m]
            nst[: m + 1] = states[: m + 1]
            ctimes = nct
            dsteps = nds
            states = nst
        U = np.random.random()
        V = np.random.random()
        ct += -math.log(U) / rate
        p = rate / J
        if p >= 1.0:
            ds += 1
        else:
            ds += int(math.ceil(math.log(U) / math.log1p(-p)))
        e = next_env(Q, e, V)
        ctimes[m] = ct
        dsteps[m] = ds
        m += 1
        states[m] = e
    return ctimes[:m], dsteps[:m], states[: m + 1]


@nb.njit(**_JIT)
def _reference_grid(x0, env0, fitfull, J, N, ctimes, states, h_max):
    """PDMP states and environments on the grid n / J."""
    S1 = x0.size
    act = _active(x0)
    y, ref = _to_logratio(x0, act)
    work = np.empty((6, act.size))
    xr = np.empty((N + 1, S1))
    er = np.empty(N + 1, np.int64)
    cur = np.empty(S1)
    xr[0] = x0
    er[0] = env0
    t = 0.0
    k = 0
    m = ctimes.size
    ce = env0
    for n in range(N):
        tn = (n + 1) / J
        while k < m and ctimes[k] <= tn:
            _advance(y, act, ref, fitfull[ce], ctimes[k] - t, h_max, work)
            t = ctimes[k]
            ce = states[k + 1]
            k += 1
        _advance(y, act, ref, fitfull[ce], tn - t, h_max, work)
        t = tn
        _to_full(y, act, cur)
        xr[n + 1] = cur
        er[n + 1] = ce
    return xr, er


@nb.njit(**_JIT)
def _adjoint(xr, er, fitfull, J, coefs, expo):
    """a_N = grad f(x_N), a_n = a_{n+1} + DG(x_n)^T a_{n+1} / J on free coordinates."""
    N = xr.shape[0] - 1
    S = xr.shape[1] - 1
    a = np.empty((N + 1, S))
    g = np.empty(S)
    _poly_grad(xr[N, :S], coefs, expo, g)
    a[N] = g
    for n in range(N - 1, -1, -1):
        s = fitfull[er[n]]
        A = 0.0
        for i in range(S):
            A += s[i] * xr[n, i]
        inv = 1.0 / (1.0 + A)
        w = 0.0
        for i in range(S):
            w += xr[n, i] * (1.0 + s[i]) * a[n + 1, i]
        for k in range(S):
            acc = (s[k] - A) * inv * a[n + 1, k] - s[k] * inv * inv * w
            a[n, k] = a[n + 1, k] + acc / J
    return a


@nb.njit(**_JIT)
def _moran_with_cv(counts0, env0, fitfull, J, N, dsteps, states, a):
    S1 = counts0.size
    S = S1 - 1
    counts = counts0.copy()
    e = env0
    k = 0
    m = dsteps.size
    cv = 0.0
    xm = np.empty(S1)
    for n in range(N):
        while k < m and dsteps[k] <= n:
            e = states[k + 1]
            k += 1
        s = fitfull[e]
        A = 0.0
        for i in range(S1):
            xm[i] = counts[i] / J
            A += s[i] * xm[i]
        parent, dead = moran_event(counts, s, J, np.random.random(), np.random.random())
        inv = 1.0 / (1.0 + A)
        for i in range(S):
            d = 0.0
            if i == parent:
                d += 1.0
            if i == dead:
                d -= 1.0
            cv += a[n + 1, i] * (d - xm[i] * (s[i] - A) * inv) / J
    return counts, cv


@nb.njit(**_JIT)
def coupled_replicate(counts0, env0, fitfull, Q, J, t_end, h_max, coefs, expo, seed):
    """One coupled (Moran, PDMP) pair sharing the environment path.

    Returns f(Moran at t_end), the martingale control variate and f(PDMP at t_end).
    """
    np.random.seed(seed)
    S = counts0.size - 1
    N = int(round(t_end * J))
    ctimes, dsteps, states = _coupled_env_path(env0, Q, J, t_end, N)
    x0 = counts0 / J
    xr, er = _reference_grid(x0, env0, fitfull, J, N, ctimes, states, h_max)
    a = _adjoint(xr, er, fitfull, J, coefs, expo)
    counts, cv = _moran_with_cv(counts0, env0, fitfull, J, N, dsteps, states, a)
    xf = counts[:S] / J
    return _poly(xf, coefs, expo), cv, _poly(xr[N, :S], coefs, expo)
