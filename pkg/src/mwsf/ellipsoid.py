"""Minimum-volume enclosing ellipsoid for centrally symmetric point sets.

Khachiyan barycentric-coordinate ascent with Wolfe-Atwood away steps, on the
centered problem (the symmetry {+-x_j} pins the center at the origin).  The
returned shape matrix A is scaled so that x_j^T A x_j <= 1 holds for every
input point, which makes |A^{1/2} x| a guaranteed underestimate of the
underlying norm on the sampled directions.
"""
from __future__ import annotations

import numpy as np

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is normally installed
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


class ConvergenceError(RuntimeError):
    """MVEE iteration cap exhausted before reaching the tolerance."""


@njit(cache=True)
def _mvee_loop(X, tol, max_iter):
    m, n = X.shape
    u = np.full(m, 1.0 / m)
    # V = sum_j u_j x_j x_j^T
    V = np.zeros((n, n))
    for j in range(m):
        for a in range(n):
            for b in range(n):
                V[a, b] += u[j] * X[j, a] * X[j, b]
    Vinv = np.linalg.inv(V)
    kappa = np.zeros(m)
    for j in range(m):
        kappa[j] = X[j] @ Vinv @ X[j]
    thresh = n * (1.0 + tol)
    # accept a plateaued iterate when it is already far inside the quality
    # slack needed downstream (kappa_max/n - 1 <= 2e-4 => John factor within
    # sqrt(n)(1 + 1e-4)); roundoff can stall the tail of the ascent there.
    stall_ok = n * (1.0 + 2e-4)
    last_kmax = 1e300
    for it in range(max_iter):
        jmax = np.argmax(kappa)
        kmax = kappa[jmax]
        # away step candidate: smallest kappa among active weights
        jmin = -1
        kmin = 1e300
        for j in range(m):
            if u[j] > 1e-12 and kappa[j] < kmin:
                kmin = kappa[j]
                jmin = j
        if kmax <= thresh:
            return u, kmax, it
        if kmax - n >= n - kmin:
            j, kj = jmax, kmax
            alpha = (kj - n) / (n * (kj - 1.0))
        else:
            j, kj = jmin, kmin
            alpha = (kj - n) / (n * (kj - 1.0))
            amin = -u[j] / (1.0 - u[j])
            if alpha < amin:
                alpha = amin
        # rank-one update u <- (1-alpha) u + alpha e_j
        beta = 1.0 - alpha
        for i in range(m):
            u[i] *= beta
        u[j] += alpha
        # Sherman-Morrison for Vinv of V' = beta V + alpha x x^T
        x = X[j]
        Vx = Vinv @ x
        denom = beta + alpha * kj
        coef = alpha / (beta * denom)
        for a in range(n):
            for b in range(n):
                Vinv[a, b] = Vinv[a, b] / beta - coef * Vx[a] * Vx[b]
        if (it + 1) % 1000 == 0:
            # periodic resync against accumulated roundoff
            V = np.zeros((n, n))
            for jj in range(m):
                for a in range(n):
                    for b in range(n):
                        V[a, b] += u[jj] * X[jj, a] * X[jj, b]
            Vinv = np.linalg.inv(V)
            kcur = 0.0
            for jj in range(m):
                kj2 = X[jj] @ Vinv @ X[jj]
                if kj2 > kcur:
                    kcur = kj2
            if kcur <= stall_ok and kcur >= last_kmax - 0.1 * n * tol:
                return u, kcur, it
            last_kmax = kcur
        for jj in range(m):
            kappa[jj] = X[jj] @ Vinv @ X[jj]
    return u, np.max(kappa), max_iter


def mvee_shape(points: np.ndarray, tol: float = 1e-6, max_iter: int = 100000):
    """Shape matrix of the MVEE of {+-points}.

    Returns A symmetric positive definite with x^T A x <= 1 for every input
    point and volume within (1 + tol)^n of optimal.
    """
    X = np.ascontiguousarray(points, dtype=float)
    m, n = X.shape
    if m < n:
        raise ValueError(f"need at least n={n} points, got {m}")
    if n == 1:
        r = np.max(np.abs(X))
        if r == 0.0:
            raise ValueError("degenerate point set")
        return np.array([[1.0 / r ** 2]])
    u, kmax, iters = _mvee_loop(X, tol, max_iter)
    if iters >= max_iter:
        raise ConvergenceError(
            f"MVEE did not reach tol={tol} within {max_iter} iterations "
            f"(kappa_max/n - 1 = {kmax / n - 1:.3e})"
        )
    V = (X * u[:, None]).T @ X
    Vinv = np.linalg.inv(V)
    kappa = np.einsum("ji,ik,jk->j", X, Vinv, X)
    kmax = float(np.max(kappa))
    # scale so every point is inside: x^T A x = kappa / kmax <= 1
    A = Vinv / (kmax * (1.0 + 1e-12))
    return 0.5 * (A + A.T)


def unit_directions(n: int, m: int) -> np.ndarray:
    """Deterministic well-spread unit directions in R^n.

    n=1: the single direction; n=2: equally spaced half-circle angles;
    n=3: Fibonacci sphere; n>3: seeded Gaussian directions, normalized.
    """
    if n == 1:
        return np.array([[1.0]])
    if n == 2:
        theta = np.pi * np.arange(m) / m
        return np.stack([np.cos(theta), np.sin(theta)], axis=1)
    if n == 3:
        k = np.arange(m) + 0.5
        phi = np.arccos(1.0 - 2.0 * k / m)
        golden = np.pi * (1.0 + 5.0 ** 0.5)
        theta = golden * k
        return np.stack(
            [
                np.sin(phi) * np.cos(theta),
                np.sin(phi) * np.sin(theta),
                np.cos(phi),
            ],
            axis=1,
        )
    rng = np.random.default_rng(20240 + n)
    dirs = rng.standard_normal((m, n))
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
