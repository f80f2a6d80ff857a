"""Pure-Python fallback for the compiled loops in ``_core``.

Same signatures, same step ordering, same status codes.  The arithmetic is
organised with numpy inside each step, so results agree with the compiled
core to rounding (not bitwise) and it is much slower; it exists so the
package works without a C compiler.
"""
from __future__ import annotations

import math

import numpy as np

from .kernel import TAIL_CUTOFF

TWO_PI = 2.0 * math.pi


def _wrap1(v: float) -> float:
    y = v - math.floor(v)
    return 0.0 if y >= 1.0 else y


def _disp1(a: float, b: float) -> float:
    d = a - b
    d = d - math.floor(d + 0.5)
    return d - 1.0 if d >= 0.5 else d


def _cell(z, G):
    s = z * G
    i = math.floor(s)
    t = s - i
    return int(i) % G, t


def _interp(h, G, m, zc):
    i, t = _cell(zc[0], G)
    i1 = (i + 1) % G
    if m == 1:
        return (1.0 - t) * h[i] + t * h[i1]
    j, u = _cell(zc[1], G)
    j1 = (j + 1) % G
    return ((1.0 - t) * (1.0 - u) * h[i * G + j] + t * (1.0 - u) * h[i1 * G + j]
            + (1.0 - t) * u * h[i * G + j1] + t * u * h[i1 * G + j1])


def _cdiff(h, G, m, axis, i, j):
    lg = math.log
    if m == 1:
        return (lg(h[(i - 1) % G]) - lg(h[(i + 1) % G])) * (0.5 * G)
    if axis == 0:
        return (lg(h[((i - 1) % G) * G + j]) - lg(h[((i + 1) % G) * G + j])) * (0.5 * G)
    return (lg(h[i * G + (j - 1) % G]) - lg(h[i * G + (j + 1) % G])) * (0.5 * G)


def _bias_grad(h, G, m, zc):
    i, t = _cell(zc[0], G)
    i1 = (i + 1) % G
    if m == 1:
        return [(1.0 - t) * _cdiff(h, G, 1, 0, i, 0) + t * _cdiff(h, G, 1, 0, i1, 0)]
    j, u = _cell(zc[1], G)
    j1 = (j + 1) % G
    return [((1.0 - t) * (1.0 - u) * _cdiff(h, G, 2, ax, i, j)
             + t * (1.0 - u) * _cdiff(h, G, 2, ax, i1, j)
             + (1.0 - t) * u * _cdiff(h, G, 2, ax, i, j1)
             + t * u * _cdiff(h, G, 2, ax, i1, j1)) for ax in range(2)]


def _gauss_row(eps, wraps, G, zeta):
    """Unnormalized wrapped Gaussian row, its first-moment row, and the mean."""
    s = zeta * G
    i0 = math.floor(s + 0.5)
    d0 = (i0 - s) / G
    lim = wraps + 0.5
    jmax = int(math.ceil((lim - d0) * G)) + 1
    jj = np.arange(-jmax, jmax + 1)
    off = d0 + jj / G
    keep = (off < lim) & (off >= -lim)
    jj, off = jj[keep], off[keep]
    e = np.exp(-(off * off) / (2.0 * eps * eps))
    e[e < TAIL_CUTOFF] = 0.0
    idx = (i0 + jj) % G
    g = np.bincount(idx, weights=e, minlength=G)
    gu = np.bincount(idx, weights=e * off, minlength=G)
    return g, gu, g.sum() / G


def _deposit(h, dh, use_dh, G, m, zc, wdt, keps, kalpha, kcent, kpower, wraps):
    nc = len(keps)
    if nc == 1:
        theta = [1.0]
    else:
        raw = (1.0 + np.cos(TWO_PI * (zc[0] - np.asarray(kcent)))) ** kpower
        theta = list(raw / raw.sum())
    for n in range(nc):
        sc = wdt * theta[n]
        a = kalpha[n]
        if a == 0.0:
            h += sc * 1.0
            continue
        g1, gu, mean1 = _gauss_row(keps[n], wraps, G, zc[0])
        if m == 1:
            h += sc * (a * (g1 / mean1) + (1.0 - a))
            if use_dh:
                dh += (sc * a / (keps[n] * keps[n])) * (-gu / mean1)
        else:
            g2, _, mean2 = _gauss_row(keps[n], wraps, G, zc[1])
            h += sc * (a * np.multiply.outer(g1 / mean1, g2 / mean2).ravel() + (1.0 - a))


def _norm_eval(h, code, q, z0, G, m):
    lo, hi = float(h.min()), float(h.max())
    if code == 0:
        v = h
        n = v.size
        while v.size > 1 and v.size % 2 == 0:
            v = v[0::2] + v[1::2]
        return math.fsum(v) / n if v.size > 1 else float(v[0]) / n, lo, hi
    if code == 1:
        return hi * float(np.mean((h / hi) ** q)) ** (1.0 / q), lo, hi
    if code == 2:
        return _interp(h, G, m, z0), lo, hi
    if code == 3:
        return lo, lo, hi
    if code == 4:
        return hi, lo, hi
    return 1.0 / ((1.0 / lo) * float(np.mean((lo / h) ** q)) ** (1.0 / q)), lo, hi


def _series(x, freq, a, b, r0, r1):
    if r1 <= r0:
        return 0.0
    ph = TWO_PI * (freq[r0:r1] @ x)
    return float(a[r0:r1] @ np.cos(ph) + b[r0:r1] @ np.sin(ph))


def _pot_grad(x, freq, a, b, quad):
    out = quad * x
    if len(a):
        ph = TWO_PI * (freq @ x)
        c = TWO_PI * (-a * np.sin(ph) + b * np.cos(ph))
        out = out + c @ freq
    return out


def advance(family, dt, gamma, eps_ext, periodic, vfreq, va, vb, vquad, x, p, z, h, dh, G,
            m, adaptive, use_dh, keps, kalpha, kcent, kpower, wraps, norm_code, norm_q,
            norm_z0, bound_lo, bound_hi, check_bounds, ofreq, oa, ob, oconst, ostart, okind,
            acc, S_wphi, S_phi, hist, B, stats, normals, nsteps, step0, info):
    d = x.shape[0]
    sq2dt = math.sqrt(2.0 * dt)
    c1 = math.exp(-gamma * dt)
    c2 = math.sqrt(1.0 - c1 * c1) if c1 < 1.0 else 0.0
    half = 0.5 * dt
    nobs = len(oconst)
    dA_pad = np.zeros(d)
    nh, lo, hi = _norm_eval(h, norm_code, norm_q, norm_z0, G, m)
    status = 0
    for s in range(nsteps):
        zc = [z[i] if family == 2 else _wrap1(x[i]) for i in range(m)]
        w = _interp(h, G, m, zc) / nh
        acc[0] += w * dt
        acc[1] += 1.0
        for k in range(nobs):
            if okind[k] == 1:
                phi = float(p @ p) / d
            else:
                phi = oconst[k] + _series(x, ofreq, oa, ob, ostart[k], ostart[k + 1])
            S_wphi[k] += w * phi * dt
            S_phi[k] += phi * dt
        bidx = 0
        for i in range(m):
            bidx = bidx * B + min(int(zc[i] * B), B - 1)
        hist[bidx] += 1.0

        dA = _bias_grad(h, G, m, zc)
        dA_pad[:m] = dA
        if family == 0:
            fx = _pot_grad(x, vfreq, va, vb, vquad)
            x += dt * (-fx + dA_pad) + sq2dt * normals[s, :d]
            if periodic:
                x -= np.floor(x)
                x[x >= 1.0] = 0.0
        elif family == 1:
            fx = _pot_grad(x, vfreq, va, vb, vquad)
            p += half * (-fx + dA_pad)
            x += half * p
            if periodic:
                x -= np.floor(x)
                x[x >= 1.0] = 0.0
            p *= c1
            p += c2 * normals[s, :d]
            x += half * p
            if periodic:
                x -= np.floor(x)
                x[x >= 1.0] = 0.0
            zq = [_wrap1(x[i]) for i in range(m)]
            dA_pad[:m] = _bias_grad(h, G, m, zq)
            fx = _pot_grad(x, vfreq, va, vb, vquad)
            p += half * (-fx + dA_pad)
        else:
            fx = _pot_grad(x, vfreq, va, vb, vquad)
            for i in range(m):
                delta = _disp1(_wrap1(x[i]), z[i])
                fx[i] += delta / eps_ext
                z[i] = _wrap1(z[i] + dt * (delta / eps_ext + dA[i]) + sq2dt * normals[s, d + i])
            x += -dt * fx + sq2dt * normals[s, :d]
            if periodic:
                x -= np.floor(x)
                x[x >= 1.0] = 0.0
        if not np.all(np.isfinite(x)) or (family == 1 and not np.all(np.isfinite(p))):
            info[0], info[1] = step0 + s, s
            status = 1
            break
        if adaptive:
            _deposit(h, dh, use_dh, G, m, zc, w * dt, keps, kalpha, kcent, kpower, wraps)
            nh, lo, hi = _norm_eval(h, norm_code, norm_q, norm_z0, G, m)
            stats[0] = min(stats[0], lo / nh)
            stats[1] = max(stats[1], hi / nh)
            if check_bounds and (lo / nh < bound_lo or hi / nh > bound_hi):
                info[0], info[1] = step0 + s, s + 1
                status = 2
                break
    if status == 0:
        info[0], info[1] = step0 + nsteps, nsteps
    return status


def advance_spde(dt, c_nl, nonlin, u, S, lam, ones_proj, h, G, adaptive, keps, kalpha,
                 kcent, kpower, wraps, bound_lo, bound_hi, check_bounds, acc, S_wphi, S_phi,
                 hist, B, stats, normals, nsteps, step0, info):
    N = u.shape[0]
    Pd = S.shape[1] + 1.0
    sq2dt = math.sqrt(2.0 * dt)
    nh, lo, hi = _norm_eval(h, 0, 1.0, None, G, 1)
    status = 0
    obs = np.zeros(13)
    for s in range(nsteps):
        ubar = float(u @ ones_proj)
        xi = _wrap1(0.5 + math.atan(0.5 * ubar) / math.pi)
        w = _interp(h, G, 1, [xi]) / nh
        obs[0], obs[1] = ubar, ubar * ubar
        obs[2], obs[3] = math.cos(TWO_PI * xi), math.sin(TWO_PI * xi)
        head = np.zeros(4)
        head[: min(4, N)] = u[:4]
        obs[4:8] = head
        obs[8:12] = head * head
        obs[12] = float(u @ u)
        acc[0] += w * dt
        acc[1] += 1.0
        S_wphi += w * obs * dt
        S_phi += obs * dt
        hist[min(int(xi * B), B - 1)] += 1.0

        f = np.zeros(N)
        if nonlin != 0:
            U = u @ S
            U = c_nl * np.sin(U) if nonlin == 1 else U - U ** 3
            f = (S @ U) / Pd
        fb = _bias_grad(h, G, 1, [xi])[0] / (2.0 * math.pi) / (1.0 + 0.25 * ubar * ubar)
        u[:] = (u + dt * (f + fb * ones_proj) + sq2dt * normals[s, :N]) / (1.0 + dt * lam)
        if not np.all(np.isfinite(u)):
            info[0], info[1] = step0 + s, s
            status = 1
            break
        if adaptive:
            _deposit(h, None, False, G, 1, [xi], w * dt, keps, kalpha, kcent, kpower, wraps)
            nh, lo, hi = _norm_eval(h, 0, 1.0, None, G, 1)
            stats[0] = min(stats[0], lo / nh)
            stats[1] = max(stats[1], hi / nh)
            if check_bounds and (lo / nh < bound_lo or hi / nh > bound_hi):
                info[0], info[1] = step0 + s, s + 1
                status = 2
                break
    if status == 0:
        info[0], info[1] = step0 + nsteps, nsteps
    return status
