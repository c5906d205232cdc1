"""Compiled inner loops: periodic cubic B-spline evaluation and Euler-Maruyama steps.

Coefficient tables hold prefiltered B-spline coefficients on a uniform grid
with origin ``-L`` and spacing ``hf``; every table is taken to be zero
outside ``[-L, L)^d``.  Tables are always 3d arrays ``(ncomp, n1, n)`` with
``n1 = 1`` in one dimension so a single compiled signature serves both.
"""
import math

import numpy as np
from numba import njit

CACHE = True

MODE_DIRECT = 0
MODE_TRANSFORMED = 1


@njit(cache=CACHE, nogil=True, inline="always")
def _bweights(f):
    g = 1.0 - f
    f2 = f * f
    f3 = f2 * f
    return g * g * g / 6.0, (3.0 * f3 - 6.0 * f2 + 4.0) / 6.0, (-3.0 * f3 + 3.0 * f2 + 3.0 * f + 1.0) / 6.0, f3 / 6.0


@njit(cache=CACHE, nogil=True, inline="always")
def spline_eval_1d(coef, comp, x, L, hf):
    n = coef.shape[2]
    if x < -L or x >= L:
        return 0.0
    t = (x + L) / hf
    i = int(math.floor(t))
    w0, w1, w2, w3 = _bweights(t - i)
    return (
        w0 * coef[comp, 0, (i - 1) % n]
        + w1 * coef[comp, 0, i % n]
        + w2 * coef[comp, 0, (i + 1) % n]
        + w3 * coef[comp, 0, (i + 2) % n]
    )


@njit(cache=CACHE, nogil=True, inline="always")
def spline_eval_2d(coef, comp, x0, x1, L, hf):
    n = coef.shape[2]
    if x0 < -L or x0 >= L or x1 < -L or x1 >= L:
        return 0.0
    t0 = (x0 + L) / hf
    t1 = (x1 + L) / hf
    i0 = int(math.floor(t0))
    i1 = int(math.floor(t1))
    a0, a1, a2, a3 = _bweights(t0 - i0)
    c0, c1, c2, c3 = _bweights(t1 - i1)
    wa = (a0, a1, a2, a3)
    wc = (c0, c1, c2, c3)
    acc = 0.0
    for p in range(4):
        row = (i0 - 1 + p) % n
        s = 0.0
        for q in range(4):
            s += wc[q] * coef[comp, row, (i1 - 1 + q) % n]
        acc += wa[p] * s
    return acc


@njit(cache=CACHE, nogil=True)
def spline_batch(coef, points, L, hf):
    """Evaluate all components at ``points`` of shape ``(m, d)``; returns ``(ncomp, m)``."""
    m = points.shape[0]
    d = points.shape[1]
    nc = coef.shape[0]
    out = np.empty((nc, m))
    for j in range(m):
        for c in range(nc):
            if d == 1:
                out[c, j] = spline_eval_1d(coef, c, points[j, 0], L, hf)
            else:
                out[c, j] = spline_eval_2d(coef, c, points[j, 0], points[j, 1], L, hf)
    return out


@njit(cache=CACHE, nogil=True, inline="always")
def closed_drift(code, kappa, x0, x1):
    """Closed-form drift at ``(x0, x1)``; pass ``x1 = 0`` in one dimension."""
    if code == 0:
        return 0.0, 0.0
    if code == 1:
        return -kappa * x0, -kappa * x1
    s = math.sqrt(1.0 + x0 * x0 + x1 * x1)
    return -kappa * x0 / s, -kappa * x1 / s


@njit(cache=CACHE, nogil=True, inline="always")
def _comp(tab, c, d, x0, x1, L, hf):
    if d == 1:
        return spline_eval_1d(tab, c, x0, L, hf)
    return spline_eval_2d(tab, c, x0, x1, L, hf)


@njit(cache=CACHE, nogil=True, inline="always")
def coefficients(mode, d, x0, x1, tab, L, hf, code, kappa, lam, base, has_pert):
    """Drift, diffusion matrix and original-space state at ``(x0, x1)``.

    Returns ``(r0, r1, b0, b1, s00, s01, s10, s11)`` where ``r`` is the
    original-space point (``x - U(x)`` in transformed mode).  Unused second
    components are zero in one dimension.

    Direct mode: ``tab = [b_n (d), sigma_pert (d*d)?]``.
    Transformed mode: ``tab = [U (d), G (d*d), P (d*d)?]``.
    """
    s00 = base[0, 0]
    s01 = s10 = s11 = 0.0
    if d == 2:
        s01 = base[0, 1]
        s10 = base[1, 0]
        s11 = base[1, 1]
    if mode == MODE_DIRECT:
        v0, v1 = closed_drift(code, kappa, x0, x1)
        v0 += _comp(tab, 0, d, x0, x1, L, hf)
        if d == 2:
            v1 += _comp(tab, 1, d, x0, x1, L, hf)
        if has_pert:
            s00 += _comp(tab, d, d, x0, x1, L, hf)
            if d == 2:
                s01 += _comp(tab, 3, d, x0, x1, L, hf)
                s10 += _comp(tab, 4, d, x0, x1, L, hf)
                s11 += _comp(tab, 5, d, x0, x1, L, hf)
        return x0, x1, v0, v1, s00, s01, s10, s11
    u0 = _comp(tab, 0, d, x0, x1, L, hf)
    u1 = g01 = g10 = g11 = 0.0
    if d == 1:
        g00 = _comp(tab, 1, d, x0, x1, L, hf)
        if has_pert:
            s00 += _comp(tab, 2, d, x0, x1, L, hf)
    else:
        u1 = _comp(tab, 1, d, x0, x1, L, hf)
        g00 = _comp(tab, 2, d, x0, x1, L, hf)
        g01 = _comp(tab, 3, d, x0, x1, L, hf)
        g10 = _comp(tab, 4, d, x0, x1, L, hf)
        g11 = _comp(tab, 5, d, x0, x1, L, hf)
        if has_pert:
            s00 += _comp(tab, 6, d, x0, x1, L, hf)
            s01 += _comp(tab, 7, d, x0, x1, L, hf)
            s10 += _comp(tab, 8, d, x0, x1, L, hf)
            s11 += _comp(tab, 9, d, x0, x1, L, hf)
    r0 = x0 - u0
    r1 = x1 - u1
    w0, w1 = closed_drift(code, kappa, r0, r1)
    b0 = lam * u0 + w0 + g00 * w0 + g01 * w1
    b1 = lam * u1 + w1 + g10 * w0 + g11 * w1
    t00 = s00 + g00 * s00 + g01 * s10
    t01 = s01 + g00 * s01 + g01 * s11
    t10 = s10 + g10 * s00 + g11 * s10
    t11 = s11 + g10 * s01 + g11 * s11
    return r0, r1, b0, b1, t00, t01, t10, t11


@njit(cache=CACHE, nogil=True)
def euler_chunk(
    x, normals, dt, step0, record_every, rec, supn, flags,
    mode, tab, L, hf, code, kappa, lam, base, has_pert,
    hist, hist_lo, hist_h, burn_steps, max_abs,
):
    """Advance every path ``normals.shape[1]`` steps in place (``normals`` is ``(paths, steps, d)``).

    ``rec[:, k]`` receives the state after step ``k * record_every``.  The
    original-space state ``X`` (``x - U(x)`` in transformed mode) at step
    ``j`` before the update feeds ``supn[:, ceil(j / record_every)]`` (a
    per-interval maximum of ``|X|``) and, once ``j > burn_steps``, the
    histogram ``hist`` when it is non-empty.  Paths whose state leaves
    ``max_abs`` or becomes non-finite are flagged and frozen.
    """
    S = normals.shape[1]
    B = x.shape[0]
    d = x.shape[1]
    sq = math.sqrt(dt)
    nb = hist.shape[0]
    nsup = supn.shape[1]
    nrec = rec.shape[1]
    for p in range(B):
        if flags[p] != 0:
            continue
        x0 = x[p, 0]
        x1 = x[p, 1] if d == 2 else 0.0
        for s in range(S):
            r0, r1, b0, b1, s00, s01, s10, s11 = coefficients(
                mode, d, x0, x1, tab, L, hf, code, kappa, lam, base, has_pert
            )
            j = step0 + s
            k = (j + record_every - 1) // record_every
            if k < nsup:
                rx = math.sqrt(r0 * r0 + r1 * r1)
                if rx > supn[p, k]:
                    supn[p, k] = rx
            if nb > 0 and j > burn_steps:
                i0 = int(math.floor((r0 - hist_lo) / hist_h))
                if 0 <= i0 < nb:
                    if d == 1:
                        hist[i0, 0] += 1.0
                    else:
                        i1 = int(math.floor((r1 - hist_lo) / hist_h))
                        if 0 <= i1 < hist.shape[1]:
                            hist[i0, i1] += 1.0
            if d == 1:
                x0 = x0 + b0 * dt + s00 * sq * normals[p, s, 0]
            else:
                z0 = normals[p, s, 0]
                z1 = normals[p, s, 1]
                x0, x1 = x0 + b0 * dt + sq * (s00 * z0 + s01 * z1), x1 + b1 * dt + sq * (s10 * z0 + s11 * z1)
            if not (math.sqrt(x0 * x0 + x1 * x1) <= max_abs):
                flags[p] = 1
                break
            step = j + 1
            if step % record_every == 0:
                kr = step // record_every
                if kr < nrec:
                    rec[p, kr, 0] = x0
                    if d == 2:
                        rec[p, kr, 1] = x1
        x[p, 0] = x0
        if d == 2:
            x[p, 1] = x1


@njit(cache=CACHE, nogil=True)
def exit_chunk(
    x, normals, uniforms, dt, step0, lo, hi, side, exit_step, flags,
    mode, tab, L, hf, code, kappa, lam, base, has_pert,
):
    """1d first exit from ``(lo, hi)`` with a Brownian-bridge crossing test between steps.

    ``side`` is -1 (low), +1 (high) or 0 (still inside).
    """
    S = normals.shape[1]
    B = x.shape[0]
    sq = math.sqrt(dt)
    for p in range(B):
        if side[p] != 0 or flags[p] != 0:
            continue
        x_old = x[p, 0]
        for s in range(S):
            _, _, b0, _, s00, _, _, _ = coefficients(mode, 1, x_old, 0.0, tab, L, hf, code, kappa, lam, base, has_pert)
            vol = s00 * s00 * dt
            x_new = x_old + b0 * dt + s00 * sq * normals[p, s, 0]
            if not math.isfinite(x_new):
                flags[p] = 1
                break
            hit = 0
            if x_new <= lo:
                hit = -1
            elif x_new >= hi:
                hit = 1
            else:
                p_lo = math.exp(-2.0 * (x_old - lo) * (x_new - lo) / vol)
                p_hi = math.exp(-2.0 * (hi - x_old) * (hi - x_new) / vol)
                u = uniforms[p, s]
                if u < p_lo:
                    hit = -1
                elif u < p_lo + p_hi:
                    hit = 1
            x_old = x_new
            if hit != 0:
                side[p] = hit
                exit_step[p] = step0 + s + 1
                break
        x[p, 0] = x_old
