"""Inner loops of the coordinate-descent solvers.

Every kernel is written once, in the subset of numpy that numba's nopython
mode understands.  By default the kernels are compiled with ``numba.njit``;
setting ``ASYNCACT_DISABLE_NUMBA=1`` before import runs the identical source
as ordinary numpy (slower, but dependency-free and easy to step through).
With numba active, the interpreted version of any kernel is reachable as
``kernel.py_func``.

Conventions shared by all kernels:

* ``S`` is the (J, n) matrix of effective signatures as rows, J = K(T+1).
* ``cinv`` is an explicit inverse of C = noise*I + sum_j x_j w_j s_j s_j^H,
  maintained by Sherman-Morrison updates and rebuilt from scratch every
  ``refresh`` rank-1 updates (``count`` carries the running total).
* For coordinate j with current value x0, the scalar problem is written in
  terms of D = C - x0 w_j s_j s_j^H, i.e.
  ``xi1 = w s^H D^-1 s`` and ``xi2 = w s^H D^-1 R D^-1 s``.
"""
from __future__ import annotations

import math
import os

import numpy as np

_DISABLED = os.environ.get("ASYNCACT_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError("numba disabled by ASYNCACT_DISABLE_NUMBA")
    from numba import njit as _njit
    NUMBA_ENABLED = True
except ImportError:  # pragma: no cover - exercised via the env flag in a subprocess
    _njit = None
    NUMBA_ENABLED = False


def jit(fn):
    if NUMBA_ENABLED:
        return _njit(cache=True, nogil=True)(fn)
    return fn


def python_impl(fn):
    """Interpreted implementation of a kernel (itself when numba is off)."""
    return getattr(fn, "py_func", fn)


GOLDEN = 0.5 * (math.sqrt(5.0) - 1.0)
_GRID = 64


@jit
def cubic_roots(a3, a2, a1, a0):
    """Real roots of a3 u^3 + a2 u^2 + a1 u + a0.

    Closed form (Cardano for one real root, trigonometric form for three)
    with a relative guard on the discriminant, followed by Newton polishing
    on the original coefficients.  Leading coefficients that are negligible
    relative to the largest one drop the degree.
    """
    out = np.empty(3)
    scale = max(abs(a3), abs(a2), abs(a1), abs(a0))
    if scale == 0.0:
        return out[:0]
    eps = 1e-14 * scale
    cnt = 0
    if abs(a3) <= eps:
        if abs(a2) <= eps:
            if abs(a1) <= eps:
                return out[:0]
            out[0] = -a0 / a1
            cnt = 1
        else:
            disc = a1 * a1 - 4.0 * a2 * a0
            if disc < 0.0:
                if disc > -1e-12 * (a1 * a1 + abs(4.0 * a2 * a0)):
                    disc = 0.0
                else:
                    return out[:0]
            sq = math.sqrt(disc)
            qq = -0.5 * (a1 + math.copysign(sq, a1))
            if qq == 0.0:
                out[0] = 0.0
                cnt = 1
            else:
                out[0] = qq / a2
                out[1] = a0 / qq
                cnt = 2
    else:
        b = a2 / a3
        c = a1 / a3
        d = a0 / a3
        shift = -b / 3.0
        p = c - b * b / 3.0
        q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d
        hq = 0.5 * q
        tp = p / 3.0
        disc = hq * hq + tp * tp * tp
        guard = 1e-12 * (hq * hq + abs(tp) ** 3)
        if disc > guard:
            sd = math.sqrt(disc)
            t = -hq
            A = np.cbrt(t + math.copysign(sd, t))
            B = -tp / A if A != 0.0 else 0.0
            out[0] = A + B + shift
            cnt = 1
        elif tp >= 0.0:
            out[0] = np.cbrt(-q) + shift
            cnt = 1
        else:
            r = 2.0 * math.sqrt(-tp)
            arg = (3.0 * q / (2.0 * p)) * math.sqrt(-3.0 / p)
            arg = min(1.0, max(-1.0, arg))
            phi = math.acos(arg)
            for i in range(3):
                out[i] = r * math.cos(phi / 3.0 - 2.0 * math.pi * i / 3.0) + shift
            cnt = 3
    for i in range(cnt):
        u = out[i]
        f = ((a3 * u + a2) * u + a1) * u + a0
        for _ in range(4):
            fp = (3.0 * a3 * u + 2.0 * a2) * u + a1
            if fp == 0.0:
                break
            un = u - f / fp
            fn = ((a3 * un + a2) * un + a1) * un + a0
            if abs(fn) < abs(f):
                u = un
                f = fn
            else:
                break
        out[i] = u
    return out[:cnt]


@jit
def stationary_cubic_coeffs(xi1, xi2, lam, mu, bt):
    """Coefficients (cubic first) of the stationarity condition
    (1 + xi1 u) xi1 - xi2 + (lam + mu (u - bt)) (1 + xi1 u)^2 = 0."""
    x2 = xi1 * xi1
    return (mu * x2,
            lam * x2 + mu * (2.0 * xi1 - bt * x2),
            x2 + 2.0 * lam * xi1 + mu * (1.0 - 2.0 * bt * xi1),
            xi1 - xi2 + lam - mu * bt)


@jit
def scalar_objective(u, xi1, xi2, lam, mu, bt):
    z = 1.0 + xi1 * u
    if z <= 0.0:
        return np.inf
    return math.log(z) - xi2 * u / z + lam * (u - bt) + 0.5 * mu * (u - bt) ** 2


@jit
def best_scalar_candidate(xi1, xi2, lam, mu, bt, x0, boxed, lo, hi, pd_tol):
    """Global minimizer of the scalar coordinate objective.

    Boxed mode: clipped stationary points plus both endpoints.  Free mode:
    stationary points with 1 + xi1 u > pd_tol; the current value is kept if
    no candidate improves on it.
    """
    a3, a2, a1, a0 = stationary_cubic_coeffs(xi1, xi2, lam, mu, bt)
    roots = cubic_roots(a3, a2, a1, a0)
    f0 = scalar_objective(x0, xi1, xi2, lam, mu, bt)
    best_u = x0
    best_f = f0
    if boxed:
        for u in (lo, hi):
            f = scalar_objective(u, xi1, xi2, lam, mu, bt)
            if f < best_f:
                best_u = u
                best_f = f
        for i in range(roots.shape[0]):
            u = min(hi, max(lo, roots[i]))
            f = scalar_objective(u, xi1, xi2, lam, mu, bt)
            if f < best_f:
                best_u = u
                best_f = f
        return best_u
    found = False
    root_u = x0
    root_f = np.inf
    for i in range(roots.shape[0]):
        u = roots[i]
        if 1.0 + xi1 * u <= pd_tol:
            continue
        f = scalar_objective(u, xi1, xi2, lam, mu, bt)
        if f < root_f:
            root_u = u
            root_f = f
            found = True
    if found and root_f <= f0 + 1e-12 * (1.0 + abs(f0)):
        return root_u
    return best_u


@jit
def multiap_objective(u, xi1, xi2):
    total = 0.0
    for m in range(xi1.shape[0]):
        z = 1.0 + xi1[m] * u
        if z <= 0.0:
            return np.inf
        total += math.log(z) - xi2[m] * u / z
    return total


@jit
def _golden(xi1, xi2, a, b):
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc = multiap_objective(c, xi1, xi2)
    fd = multiap_objective(d, xi1, xi2)
    for _ in range(200):
        if b - a <= 1e-12:
            break
        if fc < fd:
            b = d
            d = c
            fd = fc
            c = b - GOLDEN * (b - a)
            fc = multiap_objective(c, xi1, xi2)
        else:
            a = c
            c = d
            fc = fd
            d = a + GOLDEN * (b - a)
            fd = multiap_objective(d, xi1, xi2)
    u = 0.5 * (a + b)
    return u, multiap_objective(u, xi1, xi2)


@jit
def minimize_multiap(xi1, xi2, lo, hi):
    """Global minimizer over [lo, hi] of sum_m log(1+xi1_m u) - xi2_m u/(1+xi1_m u).

    Candidates are both endpoints, each AP's own stationary point and a
    uniform grid; every grid local minimum is refined by golden-section
    search inside its neighbouring grid cells.
    """
    G = _GRID
    h = (hi - lo) / G
    grid_f = np.empty(G + 1)
    best_u = lo
    best_f = np.inf
    for i in range(G + 1):
        u = lo + i * h
        f = multiap_objective(u, xi1, xi2)
        grid_f[i] = f
        if f < best_f:
            best_u = u
            best_f = f
    for m in range(xi1.shape[0]):
        if xi1[m] > 0.0:
            u = (xi2[m] - xi1[m]) / (xi1[m] * xi1[m])
            u = min(hi, max(lo, u))
            f = multiap_objective(u, xi1, xi2)
            if f < best_f:
                best_u = u
                best_f = f
    for i in range(G + 1):
        left = grid_f[i - 1] if i > 0 else np.inf
        right = grid_f[i + 1] if i < G else np.inf
        if grid_f[i] <= left and grid_f[i] <= right:
            a = lo + max(i - 1, 0) * h
            b = lo + min(i + 1, G) * h
            u, f = _golden(xi1, xi2, a, b)
            if f < best_f:
                best_u = u
                best_f = f
    return best_u, best_f


@jit
def rebuild_inverse(S, w, x, noise):
    n = S.shape[1]
    C = np.zeros((n, n), dtype=np.complex128)
    for i in range(n):
        C[i, i] = noise
    for j in range(S.shape[0]):
        c = x[j] * w[j]
        if c != 0.0:
            C += c * np.outer(S[j], np.conj(S[j]))
    inv = np.linalg.inv(C)
    return 0.5 * (inv + np.conj(inv.T))


@jit
def local_residual(cinv, rmat, S, w, x, bt, lam, mu, boxed, lo, hi):
    """Stationarity residual of the local augmented subproblem.

    With g_j = df/dx_j + lam_j + mu (x_j - bt_j) this is max_j |g_j|, or
    the projected-gradient residual max_j |x_j - clip(x_j - g_j)| when the
    coordinates are confined to [lo, hi].
    """
    worst = 0.0
    for j in range(S.shape[0]):
        s = S[j]
        v = cinv @ s
        q = np.vdot(s, v).real
        r = np.vdot(v, rmat @ v).real
        g = w[j] * (q - r) + lam[j] + mu * (x[j] - bt[j])
        if boxed:
            g = x[j] - min(hi, max(lo, x[j] - g))
        worst = max(worst, abs(g))
    return worst


@jit
def local_gradient(cinv, rmat, S, w):
    """Gradient of log|C| + tr(C^-1 R) with respect to every coordinate."""
    J = S.shape[0]
    out = np.empty(J)
    for j in range(J):
        s = S[j]
        v = cinv @ s
        out[j] = w[j] * (np.vdot(s, v).real - np.vdot(v, rmat @ v).real)
    return out


@jit
def local_sweeps(cinv, rmat, S, w, noise, x, bt, lam, mu, boxed, lo, hi,
                 max_sweeps, tol, use_residual, refresh, count, pd_tol):
    """Cyclic coordinate descent on one AP's local problem.

    Minimizes log|C(x)| + tr(C(x)^-1 R) + lam^T (x - bt) + mu/2 ||x - bt||^2
    one coordinate at a time (fixed order j = 0..J-1).  Updates ``x`` and
    ``cinv`` in place.  Stops when the largest coordinate move of a sweep
    drops below ``tol`` or, with ``use_residual``, when the stationarity
    residual does.

    Returns (sweeps, rejected, count, max_change, residual).
    """
    J = S.shape[0]
    sweeps = 0
    rejected = 0
    max_change = 0.0
    resid = np.inf
    for _ in range(max_sweeps):
        max_change = 0.0
        for j in range(J):
            wj = w[j]
            s = S[j]
            v = cinv @ s
            q = np.vdot(s, v).real
            r = np.vdot(v, rmat @ v).real
            x0 = x[j]
            den = 1.0 - x0 * wj * q
            if den <= pd_tol:
                rejected += 1
                continue
            xi1 = wj * q / den
            xi2 = max(wj * r / (den * den), 0.0)
            u = best_scalar_candidate(xi1, xi2, lam[j], mu, bt[j], x0, boxed, lo, hi, pd_tol)
            if u == x0:
                continue
            c = (u - x0) * wj
            den2 = 1.0 + c * q
            if den2 <= pd_tol:
                rejected += 1
                continue
            cinv -= (c / den2) * np.outer(v, np.conj(v))
            x[j] = u
            max_change = max(max_change, abs(u - x0))
            count += 1
            if count % refresh == 0:
                cinv[:, :] = rebuild_inverse(S, w, x, noise)
        sweeps += 1
        if use_residual:
            resid = local_residual(cinv, rmat, S, w, x, bt, lam, mu, boxed, lo, hi)
            if resid < tol:
                break
        elif max_change < tol:
            break
    return sweeps, rejected, count, max_change, resid


@jit
def multiap_sweeps(cinv, rmats, S, W, noise, x, max_sweeps, tol, refresh, count, pd_tol, deltas):
    """Box-constrained cyclic coordinate descent on the multi-AP likelihood.

    Each coordinate is set to the global minimizer over [0, 1] of the sum of
    per-AP scalar objectives.  ``deltas`` receives the (non-positive) cost
    change of every committed move.

    Returns (sweeps, count, n_deltas, max_change).
    """
    M = cinv.shape[0]
    n = S.shape[1]
    J = S.shape[0]
    xi1 = np.empty(M)
    xi2 = np.empty(M)
    qs = np.empty(M)
    V = np.empty((M, n), dtype=np.complex128)
    n_delta = 0
    sweeps = 0
    max_change = 0.0
    for _ in range(max_sweeps):
        max_change = 0.0
        for j in range(J):
            s = S[j]
            x0 = x[j]
            ok = True
            for m in range(M):
                v = cinv[m] @ s
                q = np.vdot(s, v).real
                r = np.vdot(v, rmats[m] @ v).real
                den = 1.0 - x0 * W[m, j] * q
                if den <= pd_tol:
                    ok = False
                    break
                xi1[m] = W[m, j] * q / den
                xi2[m] = max(W[m, j] * r / (den * den), 0.0)
                qs[m] = q
                V[m] = v
            if not ok:
                continue
            u, fu = minimize_multiap(xi1, xi2, 0.0, 1.0)
            f0 = multiap_objective(x0, xi1, xi2)
            if not fu < f0 or u == x0:
                continue
            for m in range(M):
                c = (u - x0) * W[m, j]
                cm = cinv[m]
                cm -= (c / (1.0 + c * qs[m])) * np.outer(V[m], np.conj(V[m]))
            x[j] = u
            if n_delta < deltas.shape[0]:
                deltas[n_delta] = fu - f0
                n_delta += 1
            max_change = max(max_change, abs(u - x0))
            count += 1
            if count % refresh == 0:
                for m in range(M):
                    cinv[m] = rebuild_inverse(S, W[m], x, noise[m])
        sweeps += 1
        if max_change < tol:
            break
    return sweeps, count, n_delta, max_change


@jit
def _rank1_all(cinv, S, W, j, value, count, refresh, x, noise):
    """Add value * w_mj s_j s_j^H to every AP covariance and value to x[j];
    returns the updated counter."""
    M = cinv.shape[0]
    s = S[j]
    for m in range(M):
        cm = cinv[m]
        v = cm @ s
        q = np.vdot(s, v).real
        c = value * W[m, j]
        cm -= (c / (1.0 + c * q)) * np.outer(v, np.conj(v))
    x[j] += value
    count += 1
    if count % refresh == 0:
        for m in range(M):
            cinv[m] = rebuild_inverse(S, W[m], x, noise[m])
    return count


@jit
def bcd_sweeps(cinv, rmats, S, W, noise, x, Tp1, max_sweeps, tol, refresh, count, pd_tol, deltas):
    """Block coordinate descent with at most one active delay per device.

    For each device the block is cleared, then the all-zero block and the
    T+1 single-delay candidates (value optimized over [0, 1]) are compared;
    the current block is kept unless a candidate is strictly better.

    Returns (sweeps, count, n_deltas, max_change).
    """
    M = cinv.shape[0]
    J = S.shape[0]
    K = J // Tp1
    xi1 = np.empty(M)
    xi2 = np.empty(M)
    n_delta = 0
    sweeps = 0
    max_change = 0.0
    for _ in range(max_sweeps):
        max_change = 0.0
        for k in range(K):
            j0 = k * Tp1
            old = x[j0:j0 + Tp1].copy()
            # cost of the current block relative to the empty block
            f_cur = 0.0
            for t in range(Tp1):
                j = j0 + t
                x0 = x[j]
                if x0 == 0.0:
                    continue
                s = S[j]
                for m in range(M):
                    v = cinv[m] @ s
                    q = np.vdot(s, v).real
                    r = np.vdot(v, rmats[m] @ v).real
                    den = 1.0 - x0 * W[m, j] * q
                    xi1[m] = W[m, j] * q / den
                    xi2[m] = max(W[m, j] * r / (den * den), 0.0)
                f_cur += multiap_objective(x0, xi1, xi2)
                count = _rank1_all(cinv, S, W, j, -x0, count, refresh, x, noise)
                x[j] = 0.0
            best_t = -1
            best_u = 0.0
            best_f = 0.0
            for t in range(Tp1):
                j = j0 + t
                s = S[j]
                for m in range(M):
                    v = cinv[m] @ s
                    xi1[m] = W[m, j] * np.vdot(s, v).real
                    xi2[m] = max(W[m, j] * np.vdot(v, rmats[m] @ v).real, 0.0)
                u, f = minimize_multiap(xi1, xi2, 0.0, 1.0)
                if f < best_f:
                    best_t = t
                    best_u = u
                    best_f = f
            if best_f < f_cur:
                if best_t >= 0:
                    count = _rank1_all(cinv, S, W, j0 + best_t, best_u, count, refresh, x, noise)
                    x[j0 + best_t] = best_u
                if n_delta < deltas.shape[0]:
                    deltas[n_delta] = best_f - f_cur
                    n_delta += 1
            else:
                for t in range(Tp1):
                    if old[t] != 0.0:
                        count = _rank1_all(cinv, S, W, j0 + t, old[t], count, refresh, x, noise)
                        x[j0 + t] = old[t]
            for t in range(Tp1):
                max_change = max(max_change, abs(x[j0 + t] - old[t]))
        sweeps += 1
        if max_change < tol:
            break
    return sweeps, count, n_delta, max_change
