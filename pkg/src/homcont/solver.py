"""Operator formulation of the homoclinic problem and a Newton solver.

A parametrized recursion x_{t+1} = f_t(x_t, lambda) is solved for sequences
decaying to zero in both time directions by writing it as the zero problem
of the residual map

    r_t = phi_{t+1} - f_t(phi_t, lambda),   t_minus <= t <= t_plus - 1,

on a truncation window.  The last row (which would compare the zero
extension against f at t_plus) is dropped and the system is closed by
boundary conditions: either plain zero conditions at both ends (the default;
overdetermined by d and solved in the least-squares sense) or projected
conditions built from the half-axis dichotomy projectors of the variational
equation, which make the system square.

The solver is plain Newton with step halving, per-entry enforcement of the
state box, and automatic window growth whenever the converged tails exceed
a threshold.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from . import dichotomy as dich
from .sequences import TruncatedSequence, Window, embed, sup_norm, zeros

__all__ = [
    "Box",
    "LimitRhs",
    "ParametricModel",
    "NewtonSettings",
    "NewtonDiagnostics",
    "BoundaryConditions",
    "HyperbolicityReport",
    "DomainError",
    "ConvergenceError",
    "NonHyperbolicError",
    "residual",
    "jacobian",
    "boundary_conditions",
    "newton_solve",
    "hyperbolicity_report",
    "variational_system",
    "validate_model",
]


class DomainError(ValueError):
    """State left the admissible box; `time` names the first bad index."""

    def __init__(self, message: str, time: int | None = None):
        super().__init__(message)
        self.time = time


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, history: list[float]):
        super().__init__(message)
        self.history = history


class NonHyperbolicError(RuntimeError):
    """Newton matrix is rank deficient, i.e. the linearization along the
    iterate is not hyperbolic enough to determine a correction."""


@dataclass(frozen=True)
class Box:
    """Axis-aligned open box, possibly unbounded, containing the origin."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box bounds must be 1-d arrays of equal length")
        if not (np.all(lo < 0) and np.all(hi > 0)):
            raise ValueError("box must contain the origin in its interior")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def full(cls, dim: int) -> "Box":
        return cls(np.full(dim, -np.inf), np.full(dim, np.inf))

    @property
    def is_bounded(self) -> bool:
        return bool(np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper)))

    def contains(self, x: np.ndarray) -> bool:
        return bool(np.all(x > self.lower) and np.all(x < self.upper))

    def boundary_distance(self, x: np.ndarray) -> float:
        return float(min(np.min(x - self.lower), np.min(self.upper - x)))


@dataclass(frozen=True)
class LimitRhs:
    """Periodic limit right-hand side with optional certification data.

    `lip_table`, `linear_table` and `lip_residual` are maps of the parameter,
    supplying per-period Lipschitz constants, the linear part and the
    Lipschitz bound of the nonlinear remainder; they feed the admissibility
    certificates.
    """

    period: int
    f: Callable[[int, np.ndarray, float], np.ndarray] = field(repr=False)
    df: Callable[[int, np.ndarray, float], np.ndarray] = field(repr=False)
    lip_table: Callable[[float], np.ndarray] | None = field(default=None, repr=False)
    linear_table: Callable[[float], np.ndarray] | None = field(default=None, repr=False)
    lip_residual: Callable[[float], float] | None = field(default=None, repr=False)
    admissibility_hint: str | None = None
    strictly_lower_coupling: bool = False


@dataclass(frozen=True)
class ParametricModel:
    """Right-hand side f_t(x, lambda) with spatial derivative and metadata."""

    dim: int
    f: Callable[[int, np.ndarray, float], np.ndarray] = field(repr=False)
    df: Callable[[int, np.ndarray, float], np.ndarray] = field(repr=False)
    omega: Box = None
    lambda_interval: tuple[float, float] = (-np.inf, np.inf)
    limit_minus: LimitRhs | None = None
    limit_plus: LimitRhs | None = None
    reference_lambda: float = 0.0
    reference_solution: TruncatedSequence | None = None
    f_lambda: Callable[[int, np.ndarray, float], np.ndarray] | None = field(
        default=None, repr=False
    )
    name: str = "custom"

    def __post_init__(self):
        if self.omega is None:
            object.__setattr__(self, "omega", Box.full(self.dim))
        lo, hi = self.lambda_interval
        if not (lo < self.reference_lambda < hi):
            raise ValueError("reference parameter must lie inside the open parameter interval")

    @property
    def has_limits(self) -> bool:
        return self.limit_minus is not None and self.limit_plus is not None

    def reference(self, window: Window) -> TruncatedSequence:
        if self.reference_solution is None:
            return zeros(window, self.dim)
        return embed(self.reference_solution, window)


@dataclass(frozen=True)
class NewtonSettings:
    residual_tol: float = 1e-10
    max_iterations: int = 25
    window_growth_factor: float = 1.5
    tail_tol: float = 1e-8
    damping: bool = True
    max_halvings: int = 8
    max_window_growths: int = 6
    bc_mode: str = "zero"

    def __post_init__(self):
        if self.residual_tol <= 0:
            raise ValueError("residual_tol must be positive")
        if self.window_growth_factor <= 1:
            raise ValueError("window_growth_factor must exceed 1")
        if self.bc_mode not in ("zero", "projected"):
            raise ValueError("bc_mode must be 'zero' or 'projected'")


@dataclass
class NewtonDiagnostics:
    iterations: int = 0
    residual_history: list = field(default_factory=list)
    final_residual: float = np.inf
    window: tuple[int, int] = (0, 0)
    tail_left: float = np.inf
    tail_right: float = np.inf
    window_growths: int = 0
    bc_mode: str = "zero"
    halvings: int = 0
    warnings: list = field(default_factory=list)


@dataclass
class BoundaryConditions:
    """Affine constraint blocks (time, rows, rhs) closing the truncation."""

    blocks: list
    mode: str
    warning: str | None = None

    @property
    def n_rows(self) -> int:
        return sum(b[1].shape[0] for b in self.blocks)

    def residual_parts(self, phi: TruncatedSequence) -> np.ndarray:
        parts = [B @ phi.at(t) - rhs for t, B, rhs in self.blocks]
        return np.concatenate(parts) if parts else np.zeros(0)


def _check_domain(model: ParametricModel, phi: TruncatedSequence, lam: float) -> None:
    lo, hi = model.lambda_interval
    if not (lo < lam < hi):
        raise DomainError(f"parameter {lam} outside the open interval ({lo}, {hi})")
    inside = (phi.values > model.omega.lower) & (phi.values < model.omega.upper)
    ok = np.all(inside, axis=1)
    if not np.all(ok):
        t_bad = int(phi.window.indices()[np.argmin(ok)])
        raise DomainError(f"state leaves the admissible box at t={t_bad}", time=t_bad)


def rhs_values(model: ParametricModel, phi: TruncatedSequence, lam: float) -> np.ndarray:
    return np.array(
        [model.f(int(t), x, lam) for t, x in zip(phi.window.indices(), phi.values)],
        dtype=float,
    )


def residual(model: ParametricModel, phi: TruncatedSequence, lam: float) -> TruncatedSequence:
    """r_t = phi_{t+1} - f_t(phi_t, lambda) on [t_minus, t_plus - 1]."""
    _check_domain(model, phi, lam)
    w = phi.window
    fvals = rhs_values(model, phi, lam)
    out = phi.values[1:] - fvals[:-1]
    return TruncatedSequence(Window(w.t_minus, w.t_plus - 1), out)


def _df_blocks(model: ParametricModel, phi: TruncatedSequence, lam: float) -> np.ndarray:
    ts = phi.window.indices()[:-1]
    return np.array(
        [model.df(int(t), phi.values[i], lam) for i, t in enumerate(ts)], dtype=float
    )


def jacobian(model: ParametricModel, phi: TruncatedSequence, lam: float) -> sp.bsr_matrix:
    """Derivative of the residual map: block bidiagonal, d(L-1) x dL."""
    _check_domain(model, phi, lam)
    d = model.dim
    L = phi.window.length
    blocks = _df_blocks(model, phi, lam)
    eye = np.eye(d)
    data = np.empty((2 * (L - 1), d, d))
    data[0::2] = -blocks
    data[1::2] = eye
    indices = np.empty(2 * (L - 1), dtype=int)
    indices[0::2] = np.arange(L - 1)
    indices[1::2] = np.arange(1, L)
    indptr = np.arange(0, 2 * L - 1, 2)
    return sp.bsr_matrix((data, indices, indptr), shape=(d * (L - 1), d * L))


def dense_jacobian(model: ParametricModel, phi: TruncatedSequence, lam: float) -> np.ndarray:
    d = model.dim
    L = phi.window.length
    blocks = _df_blocks(model, phi, lam)
    J = np.zeros((d * (L - 1), d * L))
    eye = np.eye(d)
    for i in range(L - 1):
        J[i * d : (i + 1) * d, i * d : (i + 1) * d] = -blocks[i]
        J[i * d : (i + 1) * d, (i + 1) * d : (i + 2) * d] = eye
    return J


def parameter_derivative(model: ParametricModel, phi: TruncatedSequence, lam: float) -> np.ndarray:
    """d residual / d lambda, analytically when the model provides it."""
    w = phi.window
    ts = w.indices()[:-1]
    if model.f_lambda is not None:
        return -np.array([model.f_lambda(int(t), phi.at(t), lam) for t in ts]).ravel()
    h = 1e-6 * (1.0 + abs(lam))
    rp = residual(model, phi, lam + h).values
    rm = residual(model, phi, lam - h).values
    return ((rp - rm) / (2 * h)).ravel()


def variational_system(
    model: ParametricModel, phi: TruncatedSequence, lam: float
) -> dich.LinearSystem:
    """Linear system t -> Df_t(phi_t, lambda), with phi extended by zero."""

    def coeff(t: int) -> np.ndarray:
        return np.asarray(model.df(int(t), phi.at(int(t)), lam), dtype=float)

    if model.has_limits:
        lm, lp = model.limit_minus, model.limit_plus
        z = np.zeros(model.dim)
        minus_table = [lm.df(t, z, lam) for t in range(lm.period)]
        plus_table = [lp.df(t, z, lam) for t in range(lp.period)]
        return dich.asymptotically_periodic(coeff, model.dim, minus_table, plus_table)
    return dich.general_system(coeff, model.dim)


def boundary_conditions(
    model: ParametricModel,
    lam: float,
    window: Window,
    mode: str = "zero",
    phi: TruncatedSequence | None = None,
    tol: float = dich.DEFAULT_TOL,
) -> BoundaryConditions:
    """Constraint blocks at the window ends.

    zero mode:      phi_{t-} = 0 and phi_{t+} = 0  (2d rows),
    projected mode: P^- phi_{t-} = 0 and (I - P^+) phi_{t+} = 0, built from
    the half-axis dichotomy projectors of the variational equation along the
    current iterate; falls back to zero mode with a warning when either
    half-axis dichotomy is missing.
    """
    d = model.dim
    eye = np.eye(d)
    zero_blocks = [
        (window.t_minus, eye, np.zeros(d)),
        (window.t_plus, eye, np.zeros(d)),
    ]
    if mode == "zero":
        return BoundaryConditions(zero_blocks, "zero")
    if mode != "projected":
        raise ValueError(f"unknown boundary-condition mode {mode!r}")

    if phi is None:
        phi = zeros(window, d)
    vs = variational_system(model, phi, lam)
    try:
        rep_m = dich.detect_dichotomy(
            vs, "Z_minus", Window(window.t_minus, 0), tol=tol, fit_constants=False
        )
        rep_p = dich.detect_dichotomy(
            vs, "Z_plus", Window(0, window.t_plus), tol=tol, fit_constants=False
        )
    except (ValueError, np.linalg.LinAlgError) as exc:
        msg = f"projected boundary conditions unavailable ({exc}); using zero mode"
        warnings.warn(msg)
        return BoundaryConditions(zero_blocks, "zero", warning=msg)
    if not (rep_m.has_ed and rep_p.has_ed):
        msg = "no half-axis dichotomy for the variational equation; using zero mode"
        warnings.warn(msg)
        return BoundaryConditions(zero_blocks, "zero", warning=msg)

    P_minus = rep_m.data.projector(window.t_minus)
    Q_plus = np.eye(d) - rep_p.data.projector(window.t_plus)
    blocks = []
    rows_m = _independent_rows(P_minus)
    if rows_m.shape[0]:
        blocks.append((window.t_minus, rows_m, np.zeros(rows_m.shape[0])))
    rows_p = _independent_rows(Q_plus)
    if rows_p.shape[0]:
        blocks.append((window.t_plus, rows_p, np.zeros(rows_p.shape[0])))
    return BoundaryConditions(blocks, "projected")


def _independent_rows(M: np.ndarray) -> np.ndarray:
    """Orthonormal rows with the same kernel as M."""
    U, s, Vt = np.linalg.svd(M)
    if not s.size or s[0] == 0.0:
        return np.zeros((0, M.shape[1]))
    r = int(np.sum(s > M.shape[0] * np.finfo(float).eps * s[0]))
    return Vt[:r]


def _stack_system(model, phi, lam, bc: BoundaryConditions):
    """Dense stacked matrix [jacobian; BC rows] and right-hand side."""
    d = model.dim
    w = phi.window
    rows = [dense_jacobian(model, phi, lam)]
    rhs = [-residual(model, phi, lam).values.ravel()]
    for t, B, b in bc.blocks:
        block = np.zeros((B.shape[0], d * w.length))
        j = w.offset(t)
        block[:, j * d : (j + 1) * d] = B
        rows.append(block)
        rhs.append(b - B @ phi.at(t))
    return np.vstack(rows), np.concatenate(rhs)


def _newton_fixed_window(model, phi, lam, settings, diag):
    """Newton iterations at a fixed window; returns (phi, converged).

    A stall above the tolerance (three iterations without progress, as
    happens when the truncation error floors the residual) reports
    converged=False instead of raising, so the caller can grow the window.
    """
    bc = boundary_conditions(model, lam, phi.window, settings.bc_mode, phi)
    if bc.warning:
        diag.warnings.append(bc.warning)
    best = sup_norm(residual(model, phi, lam))
    diag.residual_history.append(best)
    it = 0
    stall = 0
    while best > settings.residual_tol:
        if it >= settings.max_iterations or stall >= 3:
            diag.iterations = it
            diag.final_residual = best
            diag.bc_mode = bc.mode
            return phi, False
        if settings.bc_mode == "projected":
            bc = boundary_conditions(model, lam, phi.window, settings.bc_mode, phi)
        A, b = _stack_system(model, phi, lam, bc)
        step, _, rank, _ = sla.lstsq(A, b, lapack_driver="gelsy")
        if rank < A.shape[1]:
            raise NonHyperbolicError(
                "singular Newton matrix: non-hyperbolic linearization along the iterate"
            )
        scale = 1.0
        accepted = None
        for h in range(settings.max_halvings + 1):
            cand_vals = phi.values + scale * step.reshape(-1, model.dim)
            inside = np.all(
                (cand_vals > model.omega.lower) & (cand_vals < model.omega.upper)
            )
            if inside:
                cand = phi.with_values(cand_vals)
                cand_res = sup_norm(residual(model, cand, lam))
                if (not settings.damping) or cand_res < best or scale <= 2.0 ** (-settings.max_halvings):
                    accepted = (cand, cand_res)
                    break
            scale *= 0.5
            diag.halvings += 1
        if accepted is None:
            raise ConvergenceError(
                "step could not be damped into the admissible box",
                diag.residual_history,
            )
        stall = stall + 1 if accepted[1] >= 0.5 * best else 0
        phi, best = accepted
        diag.residual_history.append(best)
        it += 1
    diag.iterations = it
    diag.final_residual = best
    diag.bc_mode = bc.mode
    return phi, True


def newton_solve(
    model: ParametricModel,
    phi0: TruncatedSequence,
    lam: float,
    settings: NewtonSettings = NewtonSettings(),
) -> tuple[TruncatedSequence, NewtonDiagnostics]:
    """Solve the truncated operator equation, growing the window until the
    solution tails fall below `tail_tol` (a residual stalled above tolerance
    by the truncation error also triggers growth)."""
    _check_domain(model, phi0, lam)
    phi = phi0
    diag = NewtonDiagnostics()
    for growth in range(settings.max_window_growths + 1):
        phi, converged = _newton_fixed_window(model, phi, lam, settings, diag)
        tl = float(np.max(np.abs(phi.values[0])))
        tr = float(np.max(np.abs(phi.values[-1])))
        diag.tail_left, diag.tail_right = tl, tr
        diag.window = (phi.window.t_minus, phi.window.t_plus)
        diag.window_growths = growth
        if converged and max(tl, tr) <= settings.tail_tol:
            break
        if growth == settings.max_window_growths:
            if not converged:
                raise ConvergenceError(
                    f"no convergence after {diag.iterations} iterations "
                    f"(residual {diag.final_residual:.3e})",
                    diag.residual_history,
                )
            diag.warnings.append(
                f"tails {max(tl, tr):.3e} still above tail_tol after "
                f"{growth} window growths"
            )
            break
        phi = embed(phi, phi.window.grow(settings.window_growth_factor))
    return phi, diag


@dataclass
class HyperbolicityReport:
    """Whether 1 avoids the dichotomy spectra of the variational equation
    on the whole axis and both half axes, plus the Fredholm index data."""

    one_in_spectrum: bool
    one_in_forward_spectrum: bool
    one_in_backward_spectrum: bool
    rank_plus: int | None
    rank_minus: int | None
    index: int | None
    reports: dict

    @property
    def ranks_equal(self) -> bool | None:
        if self.rank_plus is None or self.rank_minus is None:
            return None
        return self.rank_plus == self.rank_minus

    @property
    def hypotheses_met(self) -> bool:
        return not (
            self.one_in_spectrum
            or self.one_in_forward_spectrum
            or self.one_in_backward_spectrum
        ) and bool(self.ranks_equal)


def hyperbolicity_report(
    model: ParametricModel,
    phi: TruncatedSequence,
    lam: float,
    window: Window | None = None,
    tol: float = dich.DEFAULT_TOL,
    constants: bool = True,
) -> HyperbolicityReport:
    """Run the dichotomy tests required by the continuation hypotheses on
    the variational system along (phi, lambda).

    `constants=False` skips the (K, alpha) fit; the booleans and ranks are
    unaffected and the call is considerably cheaper.
    """
    _check_domain(model, phi, lam)
    vs = variational_system(model, phi, lam)
    if window is None:
        base = dich.default_window(vs, "Z")
        window = Window(
            min(base.t_minus, phi.window.t_minus), max(base.t_plus, phi.window.t_plus)
        )
    rep_z = dich.detect_dichotomy(vs, "Z", window, tol=tol, fit_constants=constants)
    rep_p = dich.detect_dichotomy(
        vs, "Z_plus", Window(0, window.t_plus), tol=tol, fit_constants=constants
    )
    rep_m = dich.detect_dichotomy(
        vs, "Z_minus", Window(window.t_minus, 0), tol=tol, fit_constants=constants
    )
    rank_p = rep_p.projector_rank if rep_p.has_ed else None
    rank_m = rep_m.projector_rank if rep_m.has_ed else None
    index = rank_p - rank_m if (rank_p is not None and rank_m is not None) else None
    return HyperbolicityReport(
        one_in_spectrum=not rep_z.has_ed,
        one_in_forward_spectrum=not rep_p.has_ed,
        one_in_backward_spectrum=not rep_m.has_ed,
        rank_plus=rank_p,
        rank_minus=rank_m,
        index=index,
        reports={"Z": rep_z, "Z_plus": rep_p, "Z_minus": rep_m},
    )


def validate_model(model: ParametricModel, seed: int = 0, samples: int = 25) -> dict:
    """Sampled consistency checks: the derivative matches finite differences
    of f to 1e-5 relative, and f stays bounded over sampled times."""
    rng = np.random.default_rng(seed)
    d = model.dim
    lo = np.maximum(model.omega.lower, -1.0)
    hi = np.minimum(model.omega.upper, 1.0)
    l0, l1 = model.lambda_interval
    l0 = max(l0, model.reference_lambda - 2.0)
    l1 = min(l1, model.reference_lambda + 2.0)
    worst = 0.0
    fmax = 0.0
    for _ in range(samples):
        t = int(rng.integers(-50, 51))
        x = lo + (hi - lo) * rng.random(d) * 0.9 + 0.05 * (hi - lo)
        lam = l0 + (l1 - l0) * rng.random()
        D = np.asarray(model.df(t, x, lam), dtype=float)
        F = np.empty((d, d))
        h = 1e-6
        for j in range(d):
            e = np.zeros(d)
            e[j] = h
            F[:, j] = (model.f(t, x + e, lam) - model.f(t, x - e, lam)) / (2 * h)
        err = np.max(np.abs(D - F)) / max(1.0, np.max(np.abs(D)))
        worst = max(worst, float(err))
        fmax = max(fmax, float(np.max(np.abs(model.f(t, x, lam)))))
    if worst > 1e-5:
        raise ValueError(
            f"model derivative disagrees with finite differences (relative error {worst:.2e})"
        )
    return {"df_fd_error": worst, "f_sample_bound": fmax}
