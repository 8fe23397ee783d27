"""Numba coordinate-descent kernels for the elastic-net family.

All kernels work on the covariance form of the problem.  With ``G = X'X/m``,
``c = X'y/m`` and ``yy = y'y/m`` the objective

    (1/2m)||y - X b||^2 + lam1 ||b||_1 + (lam2/2) ||b||^2

equals ``yy/2 - c'b + b'Gb/2 + penalty``.  The gradient ``g = c - G b`` is
kept current as coordinates move (G is symmetric, so rows are read instead
of columns).

Plain cyclic sweeps crawl when the active block is ill-conditioned.  Once the
support and signs stop changing, `_support_step` solves the quadratic that
the objective reduces to on that orthant and moves toward its minimiser.
When the support is wider than the sample (k > m) and ``lam2 > 0`` the
restricted system is solved through the Woodbury identity in m dimensions,
which needs the design ``X`` itself; pass an empty (0 x p) array to disable.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def soft_threshold(z, gamma):
    if z > gamma:
        return z - gamma
    if z < -gamma:
        return z + gamma
    return 0.0


@njit(cache=True)
def _nnz(beta):
    k = 0
    for j in range(beta.shape[0]):
        if beta[j] != 0.0:
            k += 1
    return k


@njit(cache=True)
def _support(beta):
    idx = np.empty(_nnz(beta), dtype=np.int64)
    k = 0
    for j in range(beta.shape[0]):
        if beta[j] != 0.0:
            idx[k] = j
            k += 1
    return idx


@njit(cache=True)
def kkt_from_grad(g, beta, lam1, lam2):
    worst = 0.0
    for j in range(beta.shape[0]):
        gj = g[j] - lam2 * beta[j]
        if beta[j] > 0.0:
            v = abs(gj - lam1)
        elif beta[j] < 0.0:
            v = abs(gj + lam1)
        else:
            v = abs(gj) - lam1
        if v > worst:
            worst = v
    return worst


@njit(cache=True)
def _objective(g, c, beta, yy, lam1, lam2):
    # b'Gb = b'c - b'g
    smooth = 0.5 * yy - 0.5 * (beta @ c) - 0.5 * (beta @ g)
    return smooth + lam1 * np.abs(beta).sum() + 0.5 * lam2 * (beta @ beta)


@njit(cache=True)
def _refresh_grad(G, c, beta, g):
    g[:] = c
    for j in range(beta.shape[0]):
        b = beta[j]
        if b != 0.0:
            for q in range(g.shape[0]):
                g[q] -= G[j, q] * b


@njit(cache=True)
def _newton_cost(k, m, p, lam2, have_x):
    direct = k * k * k / 3.0 + k * k
    if have_x and lam2 > 0.0 and k > m:
        return min(direct, m * m * k + m * m * m / 3.0)
    return direct


@njit(cache=True)
def _restricted_minimiser(G, X, c, lam1, lam2, beta, idx):
    """Minimiser of the objective restricted to the support and signs."""
    k = idx.shape[0]
    m = X.shape[0]
    rhs = np.empty(k)
    for a in range(k):
        rhs[a] = c[idx[a]] - lam1 * np.sign(beta[idx[a]])
    use_woodbury = (m > 0 and lam2 > 0.0 and k > m
                    and m * m * k + m * m * m / 3.0 < k * k * k / 3.0)
    if use_woodbury:
        XS = np.empty((m, k))
        for a in range(k):
            XS[:, a] = X[:, idx[a]]
        K = XS @ XS.T
        for i in range(m):
            K[i, i] += m * lam2
        u = np.linalg.solve(K, XS @ rhs)
        return (rhs - XS.T @ u) / lam2
    A = np.empty((k, k))
    for a in range(k):
        ja = idx[a]
        for b in range(k):
            A[a, b] = G[ja, idx[b]]
        A[a, a] += lam2
    return np.linalg.solve(A, rhs)


@njit(cache=True)
def _support_step(G, X, c, yy, lam1, lam2, beta, g):
    """Move toward the exact minimiser on the current support and signs.

    On a fixed orthant the objective is a convex quadratic, so every point on
    the segment to its minimiser lowers the objective; the step stops at the
    first coordinate that would change sign and pins it to zero.  Returns
    True when the full step was taken.
    """
    idx = _support(beta)
    k = idx.shape[0]
    if k == 0:
        return False
    try:
        target = _restricted_minimiser(G, X, c, lam1, lam2, beta, idx)
    except Exception:  # noqa: BLE001 - singular support block
        return False
    if not np.all(np.isfinite(target)):
        return False
    t = 1.0
    hit = -1
    for a in range(k):
        b0 = beta[idx[a]]
        if target[a] * b0 <= 0.0:
            frac = b0 / (b0 - target[a])
            if frac < t:
                t = frac
                hit = a
    before = _objective(g, c, beta, yy, lam1, lam2)
    old = beta.copy()
    oldg = g.copy()
    p = beta.shape[0]
    for a in range(k):
        j = idx[a]
        if a == hit:
            nb = 0.0
        else:
            nb = beta[j] + t * (target[a] - beta[j])
        d = nb - beta[j]
        if d != 0.0:
            beta[j] = nb
            for q in range(p):
                g[q] -= G[j, q] * d
    if _objective(g, c, beta, yy, lam1, lam2) > before:
        beta[:] = old
        g[:] = oldg
        return False
    return hit < 0


@njit(cache=True)
def cd_solve(G, X, c, yy, lam1, lam2, beta, g, tol, kkt_tol, max_sweeps,
             trace):
    """Run cyclic sweeps in place on ``beta`` and ``g``.

    Stops once the largest coordinate move in a sweep is below
    ``tol * max(1, ||beta||_inf)`` and the KKT residual is at most
    ``kkt_tol``.  ``trace`` (length 0 to disable) receives the objective
    after each sweep.  Returns ``(n_sweeps, converged)``.
    """
    p = beta.shape[0]
    m = X.shape[0]
    have_x = m > 0
    ntrace = trace.shape[0]
    sweeps = 0
    prev_sign = np.zeros(p)
    wait = 2
    since = 0
    while sweeps < max_sweeps:
        sweeps += 1
        max_move = 0.0
        max_abs = 0.0
        changed = False
        k = 0
        for j in range(p):
            gjj = G[j, j]
            old = beta[j]
            z = g[j] + gjj * old
            denom = gjj + lam2
            if denom > 0.0:
                new = soft_threshold(z, lam1) / denom
            else:
                new = 0.0
            d = new - old
            if d != 0.0:
                beta[j] = new
                for q in range(p):
                    g[q] -= G[j, q] * d
                if abs(d) > max_move:
                    max_move = abs(d)
            sg = np.sign(new)
            if sg != prev_sign[j]:
                changed = True
                prev_sign[j] = sg
            if new != 0.0:
                k += 1
                if abs(new) > max_abs:
                    max_abs = abs(new)
        if sweeps <= ntrace:
            trace[sweeps - 1] = _objective(g, c, beta, yy, lam1, lam2)
        if max_move < tol * max(1.0, max_abs):
            if kkt_from_grad(g, beta, lam1, lam2) <= kkt_tol:
                return sweeps, True
        since += 1
        if changed:
            since = 0
        elif since >= wait and (
                4.0 * since * p * max(k, 1) >= _newton_cost(k, m, p, lam2, have_x)):
            since = 0
            if _support_step(G, X, c, yy, lam1, lam2, beta, g):
                wait = 2
            else:
                wait = min(2 * wait, 64)
            for j in range(p):
                prev_sign[j] = np.sign(beta[j])
    return sweeps, False


@njit(cache=True)
def cd_path(G, X, c, yy, lam1s, lam2, tol, kkt_tol, max_sweeps, max_r2):
    """Solutions along a decreasing ``lam1s`` grid.

    Each point starts from the linear extrapolation of the previous two
    solutions (exact while the support is unchanged, since the solution is
    affine in lam1 on a fixed orthant), with coordinates that would change
    sign set to zero, followed by one support step.  The path stops once the
    training R^2 reaches ``max_r2``; rows past that point stay zero.
    Returns ``(coefs, n_computed, total_sweeps, all_converged)``.
    """
    p = c.shape[0]
    m = X.shape[0]
    nl = lam1s.shape[0]
    out = np.zeros((nl, p))
    beta = np.zeros(p)
    g = c.copy()
    empty = np.zeros(0)
    total = 0
    all_ok = True
    done = 0
    for i in range(nl):
        lam = lam1s[i]
        if i >= 2:
            step = (lam - lam1s[i - 1]) / (lam1s[i - 1] - lam1s[i - 2])
            for j in range(p):
                cur = out[i - 1, j]
                nb = cur + (cur - out[i - 2, j]) * step
                if nb * cur <= 0.0:
                    nb = 0.0
                beta[j] = nb
            _refresh_grad(G, c, beta, g)
            k = _nnz(beta)
            if k > 0 and _newton_cost(k, m, p, lam2, m > 0) <= 40.0 * p * k:
                _support_step(G, X, c, yy, lam, lam2, beta, g)
        s, ok = cd_solve(G, X, c, yy, lam, lam2, beta, g, tol, kkt_tol,
                         max_sweeps, empty)
        total += s
        all_ok = all_ok and ok
        out[i, :] = beta
        done = i + 1
        if yy > 0.0:
            rss = yy - beta @ c - beta @ g
            if 1.0 - rss / yy >= max_r2:
                break
    return out, done, total, all_ok
