"""Shared test utilities: reference systems and brute-force oracles."""

from __future__ import annotations

import numpy as np

from homcont.dichotomy import LinearSystem, asymptotically_periodic


def pw_system(alpha: float, lam: float) -> LinearSystem:
    """Triangular 2-d system switching character at t = 0."""

    def coeff(t: int) -> np.ndarray:
        b = 1.0 / alpha if t < 0 else alpha
        c = alpha if t < 0 else 1.0 / alpha
        return np.array([[b, 0.0], [lam, c]])

    A_minus = np.array([[1.0 / alpha, 0.0], [lam, alpha]])
    A_plus = np.array([[alpha, 0.0], [lam, 1.0 / alpha]])
    return asymptotically_periodic(coeff, 2, [A_minus], [A_plus])


def random_hyperbolic_pair(rng: np.random.Generator, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Two hyperbolic matrices with eigenvalue moduli in [0.3, 0.7] or [1.5, 3]."""

    def draw() -> np.ndarray:
        moduli = np.where(
            rng.random(dim) < 0.5,
            rng.uniform(0.3, 0.7, dim),
            rng.uniform(1.5, 3.0, dim),
        )
        signs = rng.choice([-1.0, 1.0], dim)
        while True:
            R = np.eye(dim) + 0.3 * rng.standard_normal((dim, dim))
            if np.linalg.cond(R) < 8.0:
                break
        return R @ np.diag(signs * moduli) @ np.linalg.inv(R)

    return draw(), draw()


def random_asym_autonomous(seed: int) -> LinearSystem:
    """Asymptotically autonomous hyperbolic system with a decaying bounded
    perturbation in the transient region."""
    rng = np.random.default_rng(seed)
    dim = int(rng.integers(1, 4))
    A_minus, A_plus = random_hyperbolic_pair(rng, dim)
    bumps = {t: 0.1 * 0.5 ** abs(t) * rng.standard_normal((dim, dim)) for t in range(-8, 9)}

    def coeff(t: int) -> np.ndarray:
        base = A_minus if t < 0 else A_plus
        return base + bumps.get(t, 0.0)

    return asymptotically_periodic(coeff, dim, [A_minus], [A_plus])


def truncated_operator_matrix(sys: LinearSystem, T: int) -> np.ndarray:
    """Zero-extension truncation of phi_t - A_{t-1} phi_{t-1} on [-T, T]:
    d(L+1) x dL, rows t = -T .. T+1."""
    d = sys.dim
    ts = np.arange(-T, T + 1)
    L = len(ts)
    M = np.zeros((d * (L + 1), d * L))
    for i in range(L):
        M[i * d : (i + 1) * d, i * d : (i + 1) * d] = np.eye(d)
        M[(i + 1) * d : (i + 2) * d, i * d : (i + 1) * d] = -sys.matrix(int(ts[i]))
    return M


def truncated_adjoint_matrix(sys: LinearSystem, T: int) -> np.ndarray:
    """Zero-extension truncation of psi_t - A_t^T psi_{t+1} on [-T, T]:
    d(L+1) x dL, rows t = -T-1 .. T."""
    d = sys.dim
    ts = np.arange(-T, T + 1)
    L = len(ts)
    N = np.zeros((d * (L + 1), d * L))
    for i in range(L):
        t = int(ts[i])
        N[i * d : (i + 1) * d, i * d : (i + 1) * d] = -sys.matrix(t - 1).T
        N[(i + 1) * d : (i + 2) * d, i * d : (i + 1) * d] = np.eye(d)
    return N


def brute_force_index(sys: LinearSystem, T: int = 60, tol: float = 1e-6) -> int:
    """Kernel minus cokernel count of the truncated operator, via the number
    of singular values below `tol` of the zero-extension truncations of the
    operator and of its adjoint."""
    sv_ker = np.linalg.svd(truncated_operator_matrix(sys, T), compute_uv=False)
    sv_cok = np.linalg.svd(truncated_adjoint_matrix(sys, T), compute_uv=False)
    return int(np.sum(sv_ker < tol)) - int(np.sum(sv_cok < tol))
