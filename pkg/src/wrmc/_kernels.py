"""Compiled inner loops: chain stepping and compensated folding of estimator sums.

The fold layout for one chain is a vector of running sums::

    [sum G_i(X_k) for each row i of G]        k = 1..n
    [sum f(X_{k-1}) f(X_k)]                    f = G[0]
    [sum J-term of H_i for each row i of H]
    [sum J'-term of H_i for each row i of H]   only when an alternate kernel is given

Each sum is a Neumaier pair ``(s, c)``. The offline fold (over a stored
trace) and the streaming fold (during simulation) call the same per-step
functions, so both give bit-identical sums.
"""

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _add(s, c, k, v):
    t = s[k] + v
    if abs(s[k]) >= abs(v):
        c[k] += (s[k] - t) + v
    else:
        c[k] += (v - t) + s[k]
    s[k] = t


@njit(cache=True, inline="always")
def pick(cum, u):
    j = 0
    while u >= cum[j]:
        j += 1
    return j


@njit(cache=True)
def pick_many(cum, u):
    out = np.empty(u.shape[0], dtype=np.int64)
    for i in range(u.shape[0]):
        out[i] = pick(cum, u[i])
    return out


@njit(cache=True, inline="always")
def _fold_common(s, c, G, x, y):
    mG = G.shape[0]
    for i in range(mG):
        _add(s, c, i, G[i, y])
    _add(s, c, mG, G[0, x] * G[0, y])


@njit(cache=True)
def fold_single(s, c, G, H, x, prop, r, rp, has_prime, y):
    _fold_common(s, c, G, x, y)
    base = G.shape[0] + 1
    mH = H.shape[0]
    for i in range(mH):
        cond = r * H[i, prop] + (1.0 - r) * H[i, x]
        _add(s, c, base + i, cond - H[i, y])
    if has_prime:
        for i in range(mH):
            cond = rp * H[i, prop] + (1.0 - rp) * H[i, x]
            _add(s, c, base + mH + i, cond - H[i, y])


@njit(cache=True)
def fold_multi(s, c, G, H, x, members, length, w, wp, has_prime, y):
    _fold_common(s, c, G, x, y)
    base = G.shape[0] + 1
    mH = H.shape[0]
    for i in range(mH):
        cond = 0.0
        for j in range(length):
            cond += w[j] * H[i, members[j]]
        _add(s, c, base + i, cond - H[i, y])
    if has_prime:
        for i in range(mH):
            cond = 0.0
            for j in range(length):
                cond += wp[j] * H[i, members[j]]
            _add(s, c, base + mH + i, cond - H[i, y])


@njit(cache=True, nogil=True)
def advance_single(cumq, rho, rhop, has_prime, x, U, G, H, S, C, fold,
                   rec_states, rec_props, rec_rho, rec_acc, offset, record):
    """Advance every row of ``x`` through ``U.shape[1]`` single-proposal steps."""
    for b in range(U.shape[0]):
        xb = x[b]
        for t in range(U.shape[1]):
            prop = pick(cumq[xb], U[b, t, 0])
            r = rho[xb, prop]
            acc = U[b, t, 1] < r
            y = prop if acc else xb
            if fold:
                fold_single(S[b], C[b], G, H, xb, prop, r, rhop[xb, prop], has_prime, y)
            if record:
                k = offset + t
                rec_props[k] = prop
                rec_rho[k] = r
                rec_acc[k] = acc
                rec_states[k + 1] = y
            xb = y
        x[b] = xb


@njit(cache=True, nogil=True)
def advance_multi(cumA, sets, setlen, kap, kapp, cumk, has_prime, x, U, G, H, S, C, fold,
                  rec_states, rec_sets, rec_w, offset, record):
    """Advance every row of ``x`` through ``U.shape[1]`` multi-proposal steps."""
    for b in range(U.shape[0]):
        xb = x[b]
        for t in range(U.shape[1]):
            k = pick(cumA[xb], U[b, t, 0])
            j = pick(cumk[xb, k], U[b, t, 1])
            y = sets[xb, k, j]
            if fold:
                fold_multi(S[b], C[b], G, H, xb, sets[xb, k], setlen[xb, k], kap[xb, k], kapp[xb, k], has_prime, y)
            if record:
                i = offset + t
                rec_sets[i] = k
                rec_w[i, :] = kap[xb, k]
                rec_states[i + 1] = y
            xb = y
        x[b] = xb


@njit(cache=True)
def fold_trace_single(states, props, rhos, rhop, has_prime, G, H, S, C):
    for t in range(props.shape[0]):
        x = states[t]
        p = props[t]
        fold_single(S, C, G, H, x, p, rhos[t], rhop[x, p], has_prime, states[t + 1])


@njit(cache=True)
def fold_trace_multi(states, set_idx, weights, sets, setlen, kapp, has_prime, G, H, S, C):
    for t in range(set_idx.shape[0]):
        x = states[t]
        k = set_idx[t]
        fold_multi(S, C, G, H, x, sets[x, k], setlen[x, k], weights[t], kapp[x, k], has_prime, states[t + 1])
