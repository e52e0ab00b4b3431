"""Compiled inner loop for batched trajectory integration.

Each row is advanced independently and sequentially, so a row's arithmetic
is identical no matter which batch, thread or chunking produced it. A step
applies the stochastic increment and then the exact propagator exp(-iH dt).
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _matvec(m, is_diag, x, out):
    d = x.shape[0]
    if is_diag:
        for i in range(d):
            out[i] = m[i, i] * x[i]
        return
    for i in range(d):
        acc = 0j
        for k in range(d):
            acc += m[i, k] * x[k]
        out[i] = acc


@njit(cache=True, nogil=True)
def _rdot(a, b):
    acc = 0.0
    for i in range(a.shape[0]):
        acc += a[i].real * b[i].real + a[i].imag * b[i].imag
    return acc


@njit(cache=True, nogil=True)
def _weights(z, basis, basis_is_identity, groups, amps, w):
    if basis_is_identity:
        for i in range(z.shape[0]):
            amps[i] = z[i]
    else:
        _matvec(basis, False, z, amps)
    w[:] = 0.0
    total = 0.0
    for i in range(z.shape[0]):
        p = amps[i].real * amps[i].real + amps[i].imag * amps[i].imag
        w[groups[i]] += p
        total += p
    for g in range(w.shape[0]):
        w[g] /= total


@njit(cache=True, nogil=True)
def advance_rows(
    z,  # (n, d) complex, updated in place
    w_prev,  # (n, K) float
    outcome,  # (n,) int64, -1 unresolved
    hit,  # (n,) float
    active,  # (n,) bool
    end_step,  # (n,) int64
    max_defect,  # (n,) float
    rejected,  # (n,) bool
    dw,  # (n, L, m) float
    n_chunk,
    step0,
    horizon_step,
    last_step,
    u,  # exp(-iH dt)
    u_diag,
    ops,
    ops_diag,
    basis,
    basis_is_identity,
    groups,
    sigma,
    dt,
    include_h,
    milstein,
    threshold,
    reject_tol,
):
    n, d = z.shape
    m = ops.shape[0]
    k_out = w_prev.shape[1]
    b = np.empty((m, d), dtype=np.complex128)
    tmp = np.empty(d, dtype=np.complex128)
    new = np.empty(d, dtype=np.complex128)
    amps = np.empty(d, dtype=np.complex128)
    w = np.empty(k_out)
    means = np.empty(m)
    half = 0.5 * sigma
    eighth = sigma * sigma / 8.0

    for r in range(n):
        if not active[r]:
            continue
        zr = z[r]
        for s in range(n_chunk):
            step = step0 + s + 1
            norm2 = _rdot(zr, zr)
            for j in range(m):
                _matvec(ops[j], ops_diag[j], zr, tmp)
                mj = _rdot(zr, tmp) / norm2
                means[j] = mj
                for i in range(d):
                    b[j, i] = tmp[i] - mj * zr[i]

            for i in range(d):
                new[i] = zr[i]
            for j in range(m):
                _matvec(ops[j], ops_diag[j], b[j], tmp)
                dwj = dw[r, s, j]
                for i in range(d):
                    bb = tmp[i] - means[j] * b[j, i]
                    new[i] += -eighth * bb * dt + half * b[j, i] * dwj
            if milstein and sigma > 0.0:
                for j in range(m):
                    for k in range(m):
                        coeff = dw[r, s, j] * dw[r, s, k]
                        if j == k:
                            coeff -= dt
                        _matvec(ops[k], ops_diag[k], b[j], tmp)
                        cov = _rdot(b[k], b[j]) / norm2
                        for i in range(d):
                            bkbj = tmp[i] - means[k] * b[j, i]
                            new[i] += eighth * (bkbj - 2.0 * cov * zr[i]) * coeff

            if include_h:
                _matvec(u, u_diag, new, tmp)
                for i in range(d):
                    new[i] = tmp[i]
            norm = np.sqrt(_rdot(new, new))
            defect = abs(norm - 1.0)
            if defect > max_defect[r]:
                max_defect[r] = defect
            for i in range(d):
                zr[i] = new[i] / norm
            _weights(zr, basis, basis_is_identity, groups, amps, w)

            t = step * dt
            if outcome[r] < 0:
                best = 0
                for g in range(k_out):
                    if w[g] > w[best]:
                        best = g
                if w[best] >= threshold:
                    lo = w_prev[r, best]
                    hi = w[best]
                    frac = 1.0
                    if hi > lo:
                        frac = (threshold - lo) / (hi - lo)
                    frac = min(max(frac, 0.0), 1.0)
                    hit[r] = t - dt + dt * frac
                    outcome[r] = best
            for g in range(k_out):
                w_prev[r, g] = w[g]
            end_step[r] = step

            if defect > reject_tol:
                rejected[r] = True
                outcome[r] = -1
                hit[r] = np.nan
                active[r] = False
                break
            if step >= last_step or (outcome[r] >= 0 and step >= horizon_step):
                active[r] = False
                break
