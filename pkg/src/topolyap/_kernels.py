"""Compiled RK4 integrator for diagonal control generators.

The free dynamics matrix enters in CSR form. Control generators, leakage
terms and bulk noise are all diagonal, so each stage costs one sparse
mat-vec plus O(N) work. Two field rules are supported: the linear overlap
family (``kind == 0``) and the implicit law with a rank-one on-site
generator (``kind == 1``), whose tracked eigenvector is obtained from the
secular equation of a rank-one update.
"""

import numpy as np
from numba import njit

STATUS_OK = 0
STATUS_STOPPED = 1
STATUS_NORM_DRIFT = 2
STATUS_NO_CONVERGENCE = 3


@njit(cache=True)
def _matvec(data, indices, indptr, x, out):
    for i in range(indptr.shape[0] - 1):
        s = 0j
        for p in range(indptr[i], indptr[i + 1]):
            s += data[p] * x[indices[p]]
        out[i] = s


@njit(cache=True)
def _linear_fields(x, g, u, coef, out):
    K = g.shape[0]
    M = u.shape[0]
    n = x.shape[0]
    for m in range(M):
        b = 0j
        for i in range(n):
            b += np.conj(u[m, i]) * x[i]
        for k in range(K):
            if coef[k, m] != 0.0:
                a = 0j
                for i in range(n):
                    a += np.conj(x[i]) * g[k, m, i]
                if m == 0:
                    out[k] = 0.0
                out[k] += coef[k, m] * (a * b).imag
            elif m == 0:
                out[k] = 0.0


@njit(cache=True)
def _secular(g, c, T, rho, lam0):
    # eigenvalue of diag(g) + rho c c^T continuously connected to g[T]
    n = g.shape[0]
    if rho == 0.0 or c[T] == 0.0:
        return g[T]
    s2 = 0.0
    for i in range(n):
        s2 += c[i] * c[i]
    if rho > 0:
        lo = g[T]
        hi = g[T + 1] if T + 1 < n else g[T] + rho * s2 + 1.0
    else:
        hi = g[T]
        lo = g[T - 1] if T > 0 else g[T] + rho * s2 - 1.0
    lam = lam0
    if not (lo < lam < hi):
        lam = 0.5 * (lo + hi)
    for _ in range(200):
        phi = 1.0
        dphi = 0.0
        scale = 1.0
        for i in range(n):
            r = 1.0 / (g[i] - lam)
            w = rho * c[i] * c[i] * r
            phi += w
            dphi += w * r
            scale += abs(w)
        if abs(phi) <= 1e-14 * scale:
            return lam
        if (phi > 0) == (rho > 0):
            hi = lam
        else:
            lo = lam
        new = lam - phi / dphi
        if not (lo < new < hi):
            new = 0.5 * (lo + hi)
        if abs(new - lam) <= 4e-16 * max(1.0, abs(lam)):
            return new
        lam = new
    return lam


@njit(cache=True)
def _tracked(V, g, c, T, rho, lam, out):
    # eigenvector of V diag(g) V^T + rho e e^T (c = V^T e), sign fixed by V[:, T]
    n = g.shape[0]
    a = np.empty(n)
    _coeffs(g, c, T, rho, lam, a)
    for i in range(n):
        x = 0.0
        for j in range(n):
            x += V[i, j] * a[j]
        out[i] = x


@njit(cache=True)
def _coeffs(g, c, T, rho, lam, a):
    # normalized eigenvector coefficients in the unperturbed eigenbasis
    n = g.shape[0]
    if rho == 0.0 or c[T] == 0.0:
        for i in range(n):
            a[i] = 0.0
        a[T] = 1.0
        return
    nrm = 0.0
    for i in range(n):
        a[i] = c[i] / (g[i] - lam)
        nrm += a[i] * a[i]
    nrm = np.sqrt(nrm)
    if a[T] < 0:
        nrm = -nrm
    for i in range(n):
        a[i] /= nrm


@njit(cache=True)
def _eta_step(cur, h, prev, hprev, it, damping):
    # secant step on h(eta) = target(eta) - eta, damped iteration as fallback
    step = damping * h
    if it > 1 and h != hprev:
        sec = -h * (cur - prev) / (h - hprev)
        if np.isfinite(sec) and abs(sec) <= 4.0 * abs(h):
            step = sec
    return cur + step


@njit(cache=True)
def _implicit_field(x, V, g, c, T, off, site, sgn, F, slope, damping, tol, max_iter,
                    state, a, p):
    # state = [eta, lam, iterations, failed, eta_prev, t_prev, t_eta, t_request]
    n = g.shape[0]
    for i in range(n):
        s = 0j
        for j in range(n):
            s += V[j, i] * x[off + j]
        p[i] = s
    # warm start: linear extrapolation of the two most recent solutions
    cur = state[0]
    if state[5] < state[6] < state[7]:
        cur = state[0] + (state[0] - state[4]) * (state[7] - state[6]) / (state[6] - state[5])
    lam = state[1]
    done = False
    it = 0
    ov = 0j
    prev = 0.0
    hprev = 0.0
    for it in range(1, max_iter + 1):
        lam = _secular(g, c, T, sgn * cur, lam)
        _coeffs(g, c, T, sgn * cur, lam, a)
        ov = 0j
        for i in range(n):
            ov += a[i] * p[i]
        h = slope * (1.0 - abs(ov) ** 2) - cur
        if abs(h) < tol:
            # converged: the undamped step leaves an error of order g'(eta) h
            cur += h
            done = True
            break
        nxt = _eta_step(cur, h, prev, hprev, it, damping)
        prev, hprev = cur, h
        cur = nxt
    lam = _secular(g, c, T, sgn * cur, lam)
    _coeffs(g, c, T, sgn * cur, lam, a)
    ov = 0j
    wsite = 0.0
    for i in range(n):
        ov += a[i] * p[i]
        wsite += c[i] * a[i]
    z = np.conj(x[off + site]) * sgn * wsite * ov
    if state[7] != state[6]:
        state[4] = state[0]
        state[5] = state[6]
    state[0] = cur
    state[1] = lam
    state[2] += it
    state[6] = state[7]
    if not done:
        state[3] = 1.0
    return cur + F * z.imag, 1.0 - abs(ov) ** 2


@njit(cache=True)
def integrate(q0, data, indices, indptr, apply_diag, kind,
              g, u, coef, vu, vp, voff,
              V, gv, cv, T, off, site, sgn, F, slope, damping, tol, max_iter, istate,
              scale, clip, metric, noise_idx, noise_val, stop_u, stop_level,
              dt, s0, nsteps, every, is_last, rec_q, rec_f, rec_v, rec_t, acc):
    """Advance ``q0`` by up to ``nsteps`` RK4 steps starting at step ``s0``.

    ``acc`` carries ``[v_prev, has_prev, max_dv, max_drift, norm0]`` across
    chunks. A state is recorded when its global step index is a multiple of
    ``every``, at the end of the last chunk, and whenever the run stops.

    Returns ``(q, steps_done, n_recorded, status)``.
    """
    n = q0.shape[0]
    K = apply_diag.shape[0]
    q = q0.copy()
    kk = np.empty((4, n), np.complex128)
    x = np.empty(n, np.complex128)
    f = np.zeros(K)
    f0 = np.zeros(K)
    aw = np.empty(gv.shape[0])
    pw = np.empty(gv.shape[0], np.complex128)
    nn = noise_idx.shape[1]
    noisy = noise_idx.shape[0] > 0
    nrec = 0
    status = 0
    step = 0
    v = 0.0
    while True:
        gstep = s0 + step
        for st in range(4):
            if st == 0:
                for i in range(n):
                    x[i] = q[i]
            elif st < 3:
                for i in range(n):
                    x[i] = q[i] + 0.5 * dt * kk[st - 1, i]
            else:
                for i in range(n):
                    x[i] = q[i] + dt * kk[2, i]
            if kind == 0:
                _linear_fields(x, g, u, coef, f)
                if st == 0:
                    v = voff
                    for m in range(vu.shape[0]):
                        b = 0j
                        for i in range(n):
                            b += np.conj(vu[m, i]) * x[i]
                        v += vp[m] * (b.real ** 2 + b.imag ** 2)
            else:
                if st == 0:
                    istate[7] = gstep * dt
                elif st < 3:
                    istate[7] = (gstep + 0.5) * dt
                else:
                    istate[7] = (gstep + 1.0) * dt
                fv, vv = _implicit_field(x, V, gv, cv, T, off, site, sgn, F, slope,
                                         damping, tol, max_iter, istate, aw, pw)
                f[0] = fv
                if st == 0:
                    v = vv
                if istate[3] != 0.0:
                    status = STATUS_NO_CONVERGENCE
            if clip > 0.0 and st > 0:
                # bang-bang fields are held over the whole step
                for k in range(K):
                    f[k] = f0[k]
            else:
                for k in range(K):
                    if clip > 0.0:
                        if f[k] > 0.0:
                            f[k] = clip
                        elif f[k] < 0.0:
                            f[k] = -clip
                    f[k] *= scale
            if st == 0:
                for k in range(K):
                    f0[k] = f[k]
                if step == nsteps or status != 0:
                    break
            _matvec(data, indices, indptr, x, kk[st])
            for i in range(n):
                d = 0.0
                for k in range(K):
                    d += f[k] * apply_diag[k, i]
                kk[st, i] += d * x[i]
            if noisy:
                for j in range(nn):
                    i = noise_idx[step, j]
                    kk[st, i] += noise_val[step, j] * x[i]
            for i in range(n):
                kk[st, i] *= 1j
        if acc[1] != 0.0:
            dv = (v - acc[0]) / max(1.0, abs(acc[0]))
            if dv > acc[2]:
                acc[2] = dv
        acc[0] = v
        acc[1] = 1.0
        stop_now = False
        if stop_level > 0.0:
            fid = 0.0
            for m in range(stop_u.shape[0]):
                b = 0j
                for i in range(n):
                    b += np.conj(stop_u[m, i]) * q[i]
                fid += b.real ** 2 + b.imag ** 2
            if fid >= stop_level:
                stop_now = True
                if status == 0:
                    status = STATUS_STOPPED
        rec = (gstep % every == 0 and not (step == 0 and s0 > 0))
        rec = rec or (is_last and step == nsteps) or stop_now or status > 1
        if rec:
            for i in range(n):
                rec_q[nrec, i] = q[i]
            for k in range(K):
                rec_f[nrec, k] = f0[k]
            rec_v[nrec] = v
            rec_t[nrec] = gstep * dt
            nrec += 1
        if step == nsteps or stop_now or status > 1:
            break
        for i in range(n):
            q[i] += dt / 6.0 * (kk[0, i] + 2.0 * kk[1, i] + 2.0 * kk[2, i] + kk[3, i])
        step += 1
        nrm = 0.0
        for i in range(n):
            nrm += metric[i] * (q[i].real ** 2 + q[i].imag ** 2)
        drift = abs(abs(nrm) - acc[4])
        if drift > acc[3]:
            acc[3] = drift
        if drift > 1e-6:
            status = STATUS_NORM_DRIFT
            break
    return q, step, nrec, status
