# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops.

``advance`` runs a chunk of steps of the coupled adaptive system (or of a
fixed-bias run) for one trajectory, entirely without the GIL.  Per step it
reads the weight and bias gradient from the accumulated grid ``h`` at the
current collective variable, updates the estimator sums, moves the state
with the pre-deposit bias, deposits a kernel row and checks the a-priori
bounds.  ``advance_spde`` does the same for the spectral Galerkin SPDE.

The argument conventions are shared with the pure-Python mirror in
``_pycore``; see ``abpsim.engine`` for how they are assembled.
"""
import numpy as np

from libc.math cimport sin, cos, exp, log, sqrt, floor, pow, atan, isfinite
from libc.stdlib cimport malloc, free

cdef double TWO_PI = 6.283185307179586
cdef double PI = 3.141592653589793
cdef double TAIL_CUTOFF = 1e-22
cdef enum:
    MAX_COMPONENTS = 64


cdef inline double wrap1(double v) noexcept nogil:
    cdef double y = v - floor(v)
    if y >= 1.0:
        y = 0.0
    return y


cdef inline double disp1(double a, double b) noexcept nogil:
    cdef double d = a - b
    d = d - floor(d + 0.5)
    if d >= 0.5:
        d -= 1.0
    return d


cdef inline void cell(double z, int G, int* i0, double* t) noexcept nogil:
    cdef double s = z * G
    cdef int i = <int>floor(s)
    t[0] = s - i
    if i >= G:
        i -= G
    if i < 0:
        i += G
    i0[0] = i


cdef double interp(const double* h, int G, int m, const double* zc) noexcept nogil:
    cdef int i, j, i1, j1
    cdef double t, u
    cell(zc[0], G, &i, &t)
    i1 = i + 1 if i + 1 < G else 0
    if m == 1:
        return (1.0 - t) * h[i] + t * h[i1]
    cell(zc[1], G, &j, &u)
    j1 = j + 1 if j + 1 < G else 0
    return ((1.0 - t) * (1.0 - u) * h[i * G + j] + t * (1.0 - u) * h[i1 * G + j]
            + (1.0 - t) * u * h[i * G + j1] + t * u * h[i1 * G + j1])


cdef inline int wrapi(int i, int G) noexcept nogil:
    if i < 0:
        return i + G
    if i >= G:
        return i - G
    return i


cdef double cdiff(const double* h, int G, int m, int axis, int i, int j) noexcept nogil:
    """Centered difference of -log h at node (i, j) along axis."""
    if m == 1:
        return (log(h[wrapi(i - 1, G)]) - log(h[wrapi(i + 1, G)])) * (0.5 * G)
    if axis == 0:
        return (log(h[wrapi(i - 1, G) * G + j]) - log(h[wrapi(i + 1, G) * G + j])) * (0.5 * G)
    return (log(h[i * G + wrapi(j - 1, G)]) - log(h[i * G + wrapi(j + 1, G)])) * (0.5 * G)


cdef void bias_grad(const double* h, int G, int m, const double* zc, double* out) noexcept nogil:
    cdef int i, j, i1, j1, ax
    cdef double t, u
    cell(zc[0], G, &i, &t)
    i1 = i + 1 if i + 1 < G else 0
    if m == 1:
        out[0] = (1.0 - t) * cdiff(h, G, 1, 0, i, 0) + t * cdiff(h, G, 1, 0, i1, 0)
        return
    cell(zc[1], G, &j, &u)
    j1 = j + 1 if j + 1 < G else 0
    for ax in range(2):
        out[ax] = ((1.0 - t) * (1.0 - u) * cdiff(h, G, 2, ax, i, j)
                   + t * (1.0 - u) * cdiff(h, G, 2, ax, i1, j)
                   + (1.0 - t) * u * cdiff(h, G, 2, ax, i, j1)
                   + t * u * cdiff(h, G, 2, ax, i1, j1))


cdef double gauss_row(double eps, int wraps, int G, double zeta, double* g, double* gu,
                      bint want_u) noexcept nogil:
    """Unnormalized wrapped Gaussian on the grid; returns the row mean.

    Walks outward from the node nearest to zeta with a multiplicative
    recurrence (two exponentials per row) and stops at the tail cutoff or
    at the outermost periodic image.
    """
    cdef int i, idx
    cdef long i0, jj
    cdef double s = zeta * G, dlt = 1.0 / G
    cdef double inv = 1.0 / (2.0 * eps * eps)
    cdef double c = exp(-2.0 * dlt * dlt * inv)
    cdef double lim = wraps + 0.5
    cdef double d0, e0, e, r, off, total
    for i in range(G):
        g[i] = 0.0
        if want_u:
            gu[i] = 0.0
    i0 = <long>floor(s + 0.5)
    d0 = (i0 - s) * dlt
    e0 = exp(-d0 * d0 * inv)
    # forward
    e = e0
    r = exp(-(2.0 * d0 * dlt + dlt * dlt) * inv)
    jj = 0
    off = d0
    while off < lim and e >= TAIL_CUTOFF:
        idx = <int>((i0 + jj) % G)
        g[idx] += e
        if want_u:
            gu[idx] += e * off
        e *= r
        r *= c
        jj += 1
        off = d0 + jj * dlt
    # backward
    r = exp(-(-2.0 * d0 * dlt + dlt * dlt) * inv)
    e = e0 * r
    r *= c
    jj = -1
    off = d0 - dlt
    while off >= -lim and e >= TAIL_CUTOFF:
        idx = <int>(((i0 + jj) % G + G) % G)
        g[idx] += e
        if want_u:
            gu[idx] += e * off
        e *= r
        r *= c
        jj -= 1
        off = d0 + jj * dlt
    total = 0.0
    for i in range(G):
        total += g[i]
    return total / G


cdef void deposit(double* h, double* dh, bint use_dh, int G, int m, const double* zc,
                  double wdt, int nc, const double* keps, const double* kalpha,
                  const double* kcent, double kpower, int wraps,
                  double* g1, double* gu, double* g2) noexcept nogil:
    cdef int n, i, j
    cdef double tot, sc, a, mean1, mean2, f
    cdef double theta[MAX_COMPONENTS]
    if nc == 1:
        theta[0] = 1.0
    else:
        tot = 0.0
        for n in range(nc):
            theta[n] = pow(1.0 + cos(TWO_PI * (zc[0] - kcent[n])), kpower)
            tot += theta[n]
        for n in range(nc):
            theta[n] /= tot
    for n in range(nc):
        sc = wdt * theta[n]
        a = kalpha[n]
        if a == 0.0:
            for i in range(G if m == 1 else G * G):
                h[i] += sc * 1.0
            continue
        mean1 = gauss_row(keps[n], wraps, G, zc[0], g1, gu, use_dh)
        if m == 1:
            for i in range(G):
                h[i] += sc * (a * (g1[i] / mean1) + (1.0 - a))
            if use_dh:
                f = sc * a / (keps[n] * keps[n])
                for i in range(G):
                    dh[i] += f * (-gu[i] / mean1)
        else:
            mean2 = gauss_row(keps[n], wraps, G, zc[1], g2, gu, False)
            for i in range(G):
                for j in range(G):
                    h[i * G + j] += sc * (a * ((g1[i] / mean1) * (g2[j] / mean2)) + (1.0 - a))


cdef double norm_eval(const double* h, long n, int code, double q, const double* z0,
                      int G, int m, double* buf, double* hmin, double* hmax) noexcept nogil:
    cdef long i, k
    cdef double lo = h[0], hi = h[0], acc
    for i in range(n):
        if h[i] < lo:
            lo = h[i]
        if h[i] > hi:
            hi = h[i]
    hmin[0] = lo
    hmax[0] = hi
    if code == 0:
        # repeated halving: exact for constant arrays of power-of-two size
        k = n
        if k % 2 != 0:
            acc = 0.0
            for i in range(k):
                acc += h[i]
            return acc / n
        for i in range(k // 2):
            buf[i] = h[2 * i] + h[2 * i + 1]
        k = k // 2
        while k > 1 and k % 2 == 0:
            for i in range(k // 2):
                buf[i] = buf[2 * i] + buf[2 * i + 1]
            k = k // 2
        acc = 0.0
        for i in range(k):
            acc += buf[i]
        return acc / n
    if code == 1:
        acc = 0.0
        for i in range(n):
            acc += pow(h[i] / hi, q)
        return hi * pow(acc / n, 1.0 / q)
    if code == 2:
        return interp(h, G, m, z0)
    if code == 3:
        return lo
    if code == 4:
        return hi
    # code 5: 1 / n_q(1/h); the largest entry of 1/h is 1/lo
    acc = 0.0
    for i in range(n):
        acc += pow((1.0 / h[i]) * lo, q)
    return 1.0 / ((1.0 / lo) * pow(acc / n, 1.0 / q))


cdef double series_eval(const double* x, int d, const double* freq, const double* a,
                        const double* b, long r0, long r1) noexcept nogil:
    cdef long r
    cdef int i
    cdef double ph, out = 0.0
    for r in range(r0, r1):
        ph = 0.0
        for i in range(d):
            ph += freq[r * d + i] * x[i]
        ph *= TWO_PI
        out += a[r] * cos(ph) + b[r] * sin(ph)
    return out


cdef void pot_grad(const double* x, int d, const double* freq, const double* a,
                   const double* b, long K, double quad, double* out) noexcept nogil:
    cdef long r
    cdef int i
    cdef double ph, c
    for i in range(d):
        out[i] = quad * x[i]
    for r in range(K):
        ph = 0.0
        for i in range(d):
            ph += freq[r * d + i] * x[i]
        ph *= TWO_PI
        c = TWO_PI * (-a[r] * sin(ph) + b[r] * cos(ph))
        for i in range(d):
            out[i] += c * freq[r * d + i]


def advance(int family, double dt, double gamma, double eps_ext, bint periodic,
            double[:, ::1] vfreq, double[::1] va, double[::1] vb, double vquad,
            double[::1] x, double[::1] p, double[::1] z,
            double[::1] h, double[::1] dh, int G, int m, bint adaptive, bint use_dh,
            double[::1] keps, double[::1] kalpha, double[::1] kcent, double kpower, int wraps,
            int norm_code, double norm_q, double[::1] norm_z0,
            double bound_lo, double bound_hi, bint check_bounds,
            double[:, ::1] ofreq, double[::1] oa, double[::1] ob, double[::1] oconst,
            long[::1] ostart, long[::1] okind,
            double[::1] acc, double[::1] S_wphi, double[::1] S_phi, double[::1] hist, int B,
            double[::1] stats, double[:, ::1] normals, long nsteps, long step0,
            long[::1] info):
    """Advance one trajectory by ``nsteps``; returns a status code.

    0 ok, 1 non-finite state (step in info[0]), 2 a-priori bound violated.
    """
    cdef int d = x.shape[0]
    cdef long K = va.shape[0]
    cdef int nobs = oconst.shape[0]
    cdef long nh_len = G if m == 1 else <long>G * G
    cdef double sq2dt = sqrt(2.0 * dt)
    cdef double c1 = exp(-gamma * dt)
    cdef double c2 = sqrt(1.0 - c1 * c1) if c1 < 1.0 else 0.0
    cdef double half = 0.5 * dt
    cdef int nc = keps.shape[0]
    cdef long s
    cdef int i, k, bi, bidx
    cdef double nh, hz, w, phi, lo, hi, delta, pp
    cdef int status = 0
    cdef double zc[2]
    cdef double zq[2]
    cdef double* dA
    cdef double* fx
    cdef double* buf
    cdef double* g1
    cdef double* gu
    cdef double* g2
    cdef double* hp = &h[0]
    cdef double* dhp = &dh[0]
    cdef double* xp = &x[0]
    cdef double* pv = &p[0]
    cdef double* zv = &z[0]

    dA = <double*>malloc(2 * sizeof(double))
    fx = <double*>malloc(d * sizeof(double))
    buf = <double*>malloc(nh_len * sizeof(double))
    g1 = <double*>malloc(G * sizeof(double))
    gu = <double*>malloc(G * sizeof(double))
    g2 = <double*>malloc(G * sizeof(double))
    try:
        with nogil:
            nh = norm_eval(hp, nh_len, norm_code, norm_q, &norm_z0[0], G, m, buf, &lo, &hi)
            for s in range(nsteps):
                # collective variable of the current state
                for i in range(m):
                    zc[i] = zv[i] if family == 2 else wrap1(xp[i])
                hz = interp(hp, G, m, zc)
                w = hz / nh

                # estimator sums (left-point rule)
                acc[0] += w * dt
                acc[1] += 1.0
                for k in range(nobs):
                    if okind[k] == 1:
                        pp = 0.0
                        for i in range(d):
                            pp += pv[i] * pv[i]
                        phi = pp / d
                    else:
                        phi = oconst[k] + series_eval(xp, d, &ofreq[0, 0], &oa[0], &ob[0],
                                                      ostart[k], ostart[k + 1])
                    S_wphi[k] += w * phi * dt
                    S_phi[k] += phi * dt
                bidx = 0
                for i in range(m):
                    bi = <int>(zc[i] * B)
                    if bi >= B:
                        bi = B - 1
                    bidx = bidx * B + bi
                hist[bidx] += 1.0

                # move with the pre-deposit bias
                bias_grad(hp, G, m, zc, dA)
                if family == 0:
                    pot_grad(xp, d, &vfreq[0, 0], &va[0], &vb[0], K, vquad, fx)
                    for i in range(d):
                        xp[i] += dt * (-fx[i] + (dA[i] if i < m else 0.0)) \
                            + sq2dt * normals[s, i]
                        if periodic:
                            xp[i] = wrap1(xp[i])
                elif family == 1:
                    pot_grad(xp, d, &vfreq[0, 0], &va[0], &vb[0], K, vquad, fx)
                    for i in range(d):
                        pv[i] += half * (-fx[i] + (dA[i] if i < m else 0.0))
                        xp[i] += half * pv[i]
                        if periodic:
                            xp[i] = wrap1(xp[i])
                        pv[i] = c1 * pv[i] + c2 * normals[s, i]
                        xp[i] += half * pv[i]
                        if periodic:
                            xp[i] = wrap1(xp[i])
                    # second half kick: same bias, moved position
                    for i in range(m):
                        zq[i] = wrap1(xp[i])
                    bias_grad(hp, G, m, zq, dA)
                    pot_grad(xp, d, &vfreq[0, 0], &va[0], &vb[0], K, vquad, fx)
                    for i in range(d):
                        pv[i] += half * (-fx[i] + (dA[i] if i < m else 0.0))
                else:
                    pot_grad(xp, d, &vfreq[0, 0], &va[0], &vb[0], K, vquad, fx)
                    for i in range(m):
                        delta = disp1(wrap1(xp[i]), zv[i])
                        fx[i] += delta / eps_ext
                        zv[i] = wrap1(zv[i] + dt * (delta / eps_ext + dA[i])
                                      + sq2dt * normals[s, d + i])
                    for i in range(d):
                        xp[i] += -dt * fx[i] + sq2dt * normals[s, i]
                        if periodic:
                            xp[i] = wrap1(xp[i])
                for i in range(d):
                    if not isfinite(xp[i]) or (family == 1 and not isfinite(pv[i])):
                        status = 1
                if status:
                    info[0] = step0 + s
                    info[1] = s
                    break

                if adaptive:
                    deposit(hp, dhp, use_dh, G, m, zc, w * dt, nc, &keps[0], &kalpha[0],
                            &kcent[0], kpower, wraps, g1, gu, g2)
                    nh = norm_eval(hp, nh_len, norm_code, norm_q, &norm_z0[0], G, m, buf,
                                   &lo, &hi)
                    if lo / nh < stats[0]:
                        stats[0] = lo / nh
                    if hi / nh > stats[1]:
                        stats[1] = hi / nh
                    if check_bounds and (lo / nh < bound_lo or hi / nh > bound_hi):
                        status = 2
                        info[0] = step0 + s
                        info[1] = s + 1
                        break
            if status == 0:
                info[0] = step0 + nsteps
                info[1] = nsteps
    finally:
        free(dA)
        free(fx)
        free(buf)
        free(g1)
        free(gu)
        free(g2)
    return status


def advance_spde(double dt, double c_nl, int nonlin, double[::1] u, double[:, ::1] S,
                 double[::1] lam, double[::1] ones_proj,
                 double[::1] h, int G, bint adaptive,
                 double[::1] keps, double[::1] kalpha, double[::1] kcent, double kpower,
                 int wraps, double bound_lo, double bound_hi, bint check_bounds,
                 double[::1] acc, double[::1] S_wphi, double[::1] S_phi, double[::1] hist,
                 int B, double[::1] stats, double[:, ::1] normals, long nsteps, long step0,
                 long[::1] info):
    """Semi-implicit spectral Galerkin steps for the biased SPDE.

    ``nonlin`` 0: none, 1: cosine (force c sin u), 2: Allen-Cahn (force u - u^3).
    Observables are fixed: mean, mean^2, cos(2 pi xi), sin(2 pi xi), u_1..u_4,
    u_1^2..u_4^2 and |u|^2.
    """
    cdef int N = u.shape[0]
    cdef int P1 = S.shape[1]  # interior grid points, P - 1
    cdef double Pd = P1 + 1.0
    cdef double sq2dt = sqrt(2.0 * dt)
    cdef int nc = keps.shape[0]
    cdef long s
    cdef int n, j, k, bi
    cdef double ubar, xi, nh, w, lo, hi, dAv, fb, val, norm2
    cdef double obs[13]
    cdef int status = 0
    cdef double* U = <double*>malloc(P1 * sizeof(double))
    cdef double* f = <double*>malloc(N * sizeof(double))
    cdef double* buf = <double*>malloc(G * sizeof(double))
    cdef double* g1 = <double*>malloc(G * sizeof(double))
    cdef double* gu = <double*>malloc(G * sizeof(double))
    cdef double zc[2]
    cdef double dA[2]
    cdef double z0dummy[2]
    cdef double* hp = &h[0]
    z0dummy[0] = 0.0
    z0dummy[1] = 0.0
    try:
        with nogil:
            nh = norm_eval(hp, G, 0, 1.0, z0dummy, G, 1, buf, &lo, &hi)
            for s in range(nsteps):
                ubar = 0.0
                norm2 = 0.0
                for n in range(N):
                    ubar += u[n] * ones_proj[n]
                    norm2 += u[n] * u[n]
                xi = wrap1(0.5 + atan(0.5 * ubar) / PI)
                zc[0] = xi
                w = interp(hp, G, 1, zc) / nh

                obs[0] = ubar
                obs[1] = ubar * ubar
                obs[2] = cos(TWO_PI * xi)
                obs[3] = sin(TWO_PI * xi)
                for k in range(4):
                    val = u[k] if k < N else 0.0
                    obs[4 + k] = val
                    obs[8 + k] = val * val
                obs[12] = norm2
                acc[0] += w * dt
                acc[1] += 1.0
                for k in range(13):
                    S_wphi[k] += w * obs[k] * dt
                    S_phi[k] += obs[k] * dt
                bi = <int>(xi * B)
                if bi >= B:
                    bi = B - 1
                hist[bi] += 1.0

                # nonlinear force, pseudo-spectrally
                for n in range(N):
                    f[n] = 0.0
                if nonlin != 0:
                    for j in range(P1):
                        val = 0.0
                        for n in range(N):
                            val += u[n] * S[n, j]
                        U[j] = c_nl * sin(val) if nonlin == 1 else val - val * val * val
                    for n in range(N):
                        val = 0.0
                        for j in range(P1):
                            val += U[j] * S[n, j]
                        f[n] = val / Pd
                bias_grad(hp, G, 1, zc, dA)
                dAv = dA[0]
                fb = dAv / (2.0 * PI) / (1.0 + 0.25 * ubar * ubar)
                for n in range(N):
                    u[n] = (u[n] + dt * (f[n] + fb * ones_proj[n])
                            + sq2dt * normals[s, n]) / (1.0 + dt * lam[n])
                    if not isfinite(u[n]):
                        status = 1
                if status:
                    info[0] = step0 + s
                    info[1] = s
                    break
                if adaptive:
                    deposit(hp, hp, False, G, 1, zc, w * dt, nc, &keps[0], &kalpha[0],
                            &kcent[0], kpower, wraps, g1, gu, g1)
                    nh = norm_eval(hp, G, 0, 1.0, z0dummy, G, 1, buf, &lo, &hi)
                    if lo / nh < stats[0]:
                        stats[0] = lo / nh
                    if hi / nh > stats[1]:
                        stats[1] = hi / nh
                    if check_bounds and (lo / nh < bound_lo or hi / nh > bound_hi):
                        status = 2
                        info[0] = step0 + s
                        info[1] = s + 1
                        break
            if status == 0:
                info[0] = step0 + nsteps
                info[1] = nsteps
    finally:
        free(U)
        free(f)
        free(buf)
        free(g1)
        free(gu)
    return status
