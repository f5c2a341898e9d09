"""Compiled per-trial loops used by the Monte Carlo harness.

Each function works on a block of trials drawn from one query's pool.
``packed`` is an ``(N, 1 + D)`` array whose first column holds the pool
log weights for the query and whose remaining columns hold coordinates.
Random numbers are generated by the caller, so these loops are pure.
The reference implementations live in ``estimators``; the two are
cross-checked in the test suite.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _softmax_into(idx_row, packed, buf):
    n = idx_row.shape[0]
    top = -np.inf
    for j in range(n):
        v = packed[idx_row[j], 0]
        buf[j] = v
        if v > top:
            top = v
    z = 0.0
    for j in range(n):
        e = np.exp(buf[j] - top)
        buf[j] = e
        z += e
    for j in range(n):
        buf[j] /= z


@njit(cache=True)
def standard_abc_block(idx, packed, out_std, out_abc):
    rows, n = idx.shape
    dim = packed.shape[1] - 1
    alpha = np.empty(n)
    t = np.empty(dim)
    s = np.empty(dim)
    for r in range(rows):
        _softmax_into(idx[r], packed, alpha)
        q = 0.0
        for d in range(dim):
            t[d] = 0.0
            s[d] = 0.0
        for j in range(n):
            i = idx[r, j]
            a = alpha[j]
            a2 = a * a
            q += a2
            for d in range(dim):
                y = packed[i, 1 + d]
                t[d] += a * y
                s[d] += a2 * y
        for d in range(dim):
            out_std[r, d] = t[d]
            out_abc[r, d] = (1.0 - q) * t[d] + s[d]


@njit(cache=True)
def jackknife_block(idx, packed, eps, out, dominated):
    rows, n = idx.shape
    dim = packed.shape[1] - 1
    alpha = np.empty(n)
    t = np.empty(dim)
    acc = np.empty(dim)
    for r in range(rows):
        _softmax_into(idx[r], packed, alpha)
        amax = 0.0
        for j in range(n):
            if alpha[j] > amax:
                amax = alpha[j]
        dominated[r] = amax > 1.0 - eps
        if dominated[r] or n < 2:
            for d in range(dim):
                out[r, d] = np.nan
            continue
        for d in range(dim):
            t[d] = 0.0
            acc[d] = 0.0
        for j in range(n):
            for d in range(dim):
                t[d] += alpha[j] * packed[idx[r, j], 1 + d]
        for j in range(n):
            inv = 1.0 / (1.0 - alpha[j])
            for d in range(dim):
                acc[d] += (t[d] - alpha[j] * packed[idx[r, j], 1 + d]) * inv
        for d in range(dim):
            out[r, d] = n * t[d] - (n - 1) * (acc[d] / n)


@njit(cache=True)
def bootstrap_block(idx, packed, resample, out):
    rows, n = idx.shape
    reps = resample.shape[1]
    dim = packed.shape[1] - 1
    lw = np.empty(n)
    alpha = np.empty(n)
    t = np.empty(dim)
    rep_sum = np.empty(dim)
    rep_t = np.empty(dim)
    for r in range(rows):
        _softmax_into(idx[r], packed, alpha)
        for j in range(n):
            lw[j] = packed[idx[r, j], 0]
        for d in range(dim):
            t[d] = 0.0
            rep_sum[d] = 0.0
        for j in range(n):
            for d in range(dim):
                t[d] += alpha[j] * packed[idx[r, j], 1 + d]
        for b in range(reps):
            top = -np.inf
            for j in range(n):
                v = lw[resample[r, b, j]]
                if v > top:
                    top = v
            z = 0.0
            for d in range(dim):
                rep_t[d] = 0.0
            for j in range(n):
                k = resample[r, b, j]
                w = np.exp(lw[k] - top)
                z += w
                for d in range(dim):
                    rep_t[d] += w * packed[idx[r, k], 1 + d]
            for d in range(dim):
                rep_sum[d] += rep_t[d] / z
        for d in range(dim):
            out[r, d] = 2.0 * t[d] - rep_sum[d] / reps


@njit(cache=True)
def brsnis_block(init, fresh, uniforms, packed, burn_in, out):
    rows, iters, m = fresh.shape
    n = m + 1
    dim = packed.shape[1] - 1
    members = np.empty(n, dtype=np.int64)
    alpha = np.empty(n)
    acc = np.empty(dim)
    for r in range(rows):
        state = init[r]
        for d in range(dim):
            acc[d] = 0.0
        for k in range(iters):
            members[0] = state
            for j in range(m):
                members[j + 1] = fresh[r, k, j]
            _softmax_into(members, packed, alpha)
            if k >= burn_in:
                for j in range(n):
                    for d in range(dim):
                        acc[d] += alpha[j] * packed[members[j], 1 + d]
            # inverse-CDF draw of the next state
            u = uniforms[r, k]
            c = 0.0
            pick = n - 1
            for j in range(n):
                c += alpha[j]
                if u < c:
                    pick = j
                    break
            state = members[pick]
        for d in range(dim):
            out[r, d] = acc[d] / (iters - burn_in)
