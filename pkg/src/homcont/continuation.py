"""Pseudo-arclength continuation of homoclinic branches.

The solution component through a hyperbolic starting pair is traced in both
parameter directions by a predictor-corrector scheme on the bordered system

    [ residual rows; boundary rows; arclength row ] = 0,

which parametrizes the branch by arclength and therefore passes through
folds in the parameter.  Each trace terminates with an outcome code
(reconnection, budget-certified unboundedness, boundary contact, or an
exhausted budget); a classifier maps a pair of traces onto the global
branch alternatives.  The labels are numerical evidence, never proofs, and
the classification text says so.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.spatial import cKDTree

from .sequences import (
    TruncatedSequence,
    Window,
    embed,
    product_distance,
    sup_norm,
    zeros,
)
from .solver import (
    BoundaryConditions,
    dense_jacobian,
    ConvergenceError,
    DomainError,
    NewtonSettings,
    NonHyperbolicError,
    ParametricModel,
    boundary_conditions,
    hyperbolicity_report,
    jacobian,
    newton_solve,
    parameter_derivative,
    residual,
)

__all__ = [
    "ContinuationSettings",
    "BranchPoint",
    "BranchOutcome",
    "Branch",
    "Classification",
    "continue_branch",
    "classify",
]

OUTCOME_CODES = (
    "RECONNECT",
    "UNBOUNDED",
    "HIT_OMEGA_BOUNDARY",
    "HIT_LAMBDA_BOUNDARY",
    "BUDGET_EXHAUSTED",
)


@dataclass(frozen=True)
class ContinuationSettings:
    step: float = 0.02
    min_step: float = 1e-6
    max_step: float = 0.1
    max_points: int = 400
    reconnect_tol: float | None = None      # default 10 * step
    norm_budget: float = 1e3
    lambda_budget: tuple[float, float] | None = None
    corrector_tol: float = 1e-12
    corrector_maxit: int = 12
    tail_tol: float = 1e-10
    bc_mode: str = "zero"
    weight_lambda: float = 1.0
    check_hyperbolicity: bool = True
    boundary_margin: float = 1e-8
    window_growth_factor: float = 1.5
    max_window_growths: int = 4

    def __post_init__(self):
        if not (0 < self.min_step <= self.step <= self.max_step):
            raise ValueError("need 0 < min_step <= step <= max_step")

    @property
    def reconnect_radius(self) -> float:
        return self.reconnect_tol if self.reconnect_tol is not None else 10.0 * self.step


@dataclass
class BranchPoint:
    lam: float
    phi: TruncatedSequence
    tangent_phi: np.ndarray
    tangent_lam: float
    sup: float
    arclength: float
    hyperbolic: bool | None = None
    fold: bool = False
    corrector_iterations: int = 0
    residual_sup: float = 0.0


@dataclass
class BranchOutcome:
    code: str
    evidence: dict = field(default_factory=dict)
    message: str = ""


@dataclass
class Branch:
    direction: str
    points: list
    outcome: BranchOutcome

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([p.lam for p in self.points])


@dataclass
class Classification:
    label: str
    alternatives: list
    text: str
    evidence: dict


def _newton_settings(settings: ContinuationSettings) -> NewtonSettings:
    return NewtonSettings(
        residual_tol=settings.corrector_tol,
        max_iterations=30,
        window_growth_factor=settings.window_growth_factor,
        tail_tol=settings.tail_tol,
        max_window_growths=settings.max_window_growths,
        bc_mode=settings.bc_mode,
    )


def _bordered_matrix(model, phi, lam, bc: BoundaryConditions, tau_phi, tau_lam, w):
    d = model.dim
    L = phi.window.length
    J = dense_jacobian(model, phi, lam)
    dlam = parameter_derivative(model, phi, lam)
    rows = [np.hstack([J, dlam[:, None]])]
    for t, B, _ in bc.blocks:
        block = np.zeros((B.shape[0], d * L + 1))
        j = phi.window.offset(t)
        block[:, j * d : (j + 1) * d] = B
        rows.append(block)
    rows.append(np.hstack([tau_phi.ravel(), [w * tau_lam]])[None, :])
    return np.vstack(rows)


def _tangent(model, phi, lam, bc, w, prev=None):
    """Unit tangent (product max-norm) of the solution curve: null vector of
    the bordered matrix without its arclength row.

    With a previous tangent available the null vector is found by one
    bordered solve normalized against it (orientation comes for free); the
    first tangent, or a failed solve, uses the SVD."""
    M = _bordered_matrix(model, phi, lam, bc, np.zeros_like(phi.values), 0.0, w)[:-1]
    v = None
    if prev is not None:
        p_phi, p_lam = prev
        row = np.hstack([p_phi.ravel(), [w * p_lam]])
        A = np.vstack([M, row[None, :]])
        rhs = np.zeros(A.shape[0])
        rhs[-1] = 1.0
        cand, _, rank, _ = sla.lstsq(A, rhs, lapack_driver="gelsy")
        if rank == A.shape[1]:
            raw = float(np.max(np.abs(M @ cand)))
            if raw <= 1e-8 * max(1.0, float(np.max(np.abs(cand)))):
                v = cand
    if v is None:
        # economy SVD exposes the null vector only for tall matrices
        _, _, Vt = np.linalg.svd(M, full_matrices=M.shape[0] < M.shape[1])
        v = Vt[-1]
    tau_phi = v[:-1].reshape(-1, model.dim)
    tau_lam = float(v[-1])
    scale = max(float(np.max(np.abs(tau_phi))), abs(tau_lam))
    if scale == 0.0:
        raise NonHyperbolicError("zero tangent: bordered matrix has a fat null space")
    tau_phi /= scale
    tau_lam /= scale
    if prev is not None:
        p_phi, p_lam = prev
        orient = float(np.sum(p_phi * tau_phi) + w * p_lam * tau_lam)
        if orient < 0:
            tau_phi, tau_lam = -tau_phi, -tau_lam
    return tau_phi, tau_lam


def _corrector(model, phi_pred, lam_pred, prev_vals, prev_lam, tau_phi, tau_lam, settings):
    """Newton on the bordered system, keeping the arclength plane of the
    predictor.  Returns (phi, lam, iterations)."""
    w = settings.weight_lambda
    arc_rhs = float(
        np.sum(tau_phi * (phi_pred.values - prev_vals)) + w * tau_lam * (lam_pred - prev_lam)
    )
    phi, lam = phi_pred, lam_pred
    bc = boundary_conditions(model, lam, phi.window, settings.bc_mode, phi)

    def arc_residual(p, l):
        return (
            float(np.sum(tau_phi * (p.values - prev_vals)) + w * tau_lam * (l - prev_lam))
            - arc_rhs
        )

    res = residual(model, phi, lam)
    best = sup_norm(res)
    for it in range(settings.corrector_maxit + 1):
        if best <= settings.corrector_tol and abs(arc_residual(phi, lam)) <= max(
            settings.corrector_tol, 1e-12
        ):
            return phi, lam, it
        if it == settings.corrector_maxit:
            raise ConvergenceError(f"corrector stalled at residual {best:.3e}", [best])
        A = _bordered_matrix(model, phi, lam, bc, tau_phi, tau_lam, w)
        rhs = np.concatenate(
            [
                -residual(model, phi, lam).values.ravel(),
                np.concatenate([b - B @ phi.at(t) for t, B, b in bc.blocks]),
                [-arc_residual(phi, lam)],
            ]
        )
        step, _, rank, _ = sla.lstsq(A, rhs, lapack_driver="gelsy")
        if rank < A.shape[1]:
            raise NonHyperbolicError("singular bordered matrix")
        scale = 1.0
        accepted = None
        for _ in range(9):
            cand_vals = phi.values + scale * step[:-1].reshape(-1, model.dim)
            cand_lam = lam + scale * step[-1]
            lo, hi = model.lambda_interval
            inside = (
                np.all((cand_vals > model.omega.lower) & (cand_vals < model.omega.upper))
                and lo < cand_lam < hi
            )
            if inside:
                cand = phi.with_values(cand_vals)
                cand_res = sup_norm(residual(model, cand, cand_lam))
                if cand_res < best or scale <= 1.0 / 256.0:
                    accepted = (cand, cand_lam, cand_res)
                    break
            scale *= 0.5
        if accepted is None:
            raise DomainError("corrector step left the admissible region")
        phi, lam, best = accepted
    raise ConvergenceError("corrector did not converge", [best])


def _regrow(model, phi, lam, settings: ContinuationSettings):
    """Re-solve at fixed parameter on a grown window when tails are large."""
    tails = max(np.max(np.abs(phi.values[0])), np.max(np.abs(phi.values[-1])))
    if tails <= settings.tail_tol:
        return phi
    phi2, diag = newton_solve(
        model,
        embed(phi, phi.window.grow(settings.window_growth_factor)),
        lam,
        _newton_settings(settings),
    )
    return phi2


def _near_lambda_boundary(model, lam, margin):
    lo, hi = model.lambda_interval
    out = {}
    if np.isfinite(lo) and lam - lo <= margin:
        out["end"] = lo
    if np.isfinite(hi) and hi - lam <= margin:
        out["end"] = hi
    return out


def _near_omega_boundary(model, phi, margin):
    if not np.any(np.isfinite(model.omega.lower)) and not np.any(np.isfinite(model.omega.upper)):
        return None
    dist = min(model.omega.boundary_distance(x) for x in phi.values)
    return dist if dist <= margin else None


class _ReconnectIndex:
    """Spatial index over (lambda, phi_0) signatures with exact product-norm
    confirmation against the stored points."""

    def __init__(self, dim: int):
        self.features: list[np.ndarray] = []
        self.points: list[BranchPoint] = []
        self.dim = dim
        self._tree = None

    def add(self, point: BranchPoint) -> None:
        self.features.append(np.concatenate([[point.lam], point.phi.at(0)]))
        self.points.append(point)
        self._tree = None

    def query(self, point: BranchPoint, radius: float, min_arc_gap: float):
        if len(self.points) < 2:
            return None
        if self._tree is None:
            self._tree = cKDTree(np.array(self.features))
        feat = np.concatenate([[point.lam], point.phi.at(0)])
        for j in self._tree.query_ball_point(feat, r=radius, p=np.inf):
            old = self.points[j]
            if point.arclength - old.arclength < min_arc_gap:
                continue
            dist = product_distance(point.phi, point.lam, old.phi, old.lam)
            if dist <= radius:
                return j, dist
        return None


def continue_branch(
    model: ParametricModel,
    direction: str,
    settings: ContinuationSettings = ContinuationSettings(),
    start: tuple[TruncatedSequence, float] | None = None,
) -> Branch:
    """Trace the branch through the starting pair toward lambda >= lambda*
    ("plus") or lambda <= lambda* ("minus")."""
    if direction not in ("plus", "minus"):
        raise ValueError("direction must be 'plus' or 'minus'")
    nset = _newton_settings(settings)
    if start is None:
        win = Window(-40, 40)
        phi0, lam0 = model.reference(win), model.reference_lambda
    else:
        phi0, lam0 = start
    phi0, _ = newton_solve(model, phi0, lam0, nset)

    hyp = hyperbolicity_report(model, phi0, lam0, constants=False)
    if hyp.one_in_spectrum:
        raise NonHyperbolicError(
            "continuation requires a dichotomy on Z at the starting pair "
            "(1 lies in the spectrum of the variational equation)"
        )

    w = settings.weight_lambda
    bc0 = boundary_conditions(model, lam0, phi0.window, settings.bc_mode, phi0)
    tau_phi, tau_lam = _tangent(model, phi0, lam0, bc0, w)
    want = 1.0 if direction == "plus" else -1.0
    if tau_lam * want < 0:
        tau_phi, tau_lam = -tau_phi, -tau_lam

    current = BranchPoint(
        lam=lam0,
        phi=phi0,
        tangent_phi=tau_phi,
        tangent_lam=tau_lam,
        sup=sup_norm(phi0),
        arclength=0.0,
        hyperbolic=hyp.hypotheses_met,
        residual_sup=sup_norm(residual(model, phi0, lam0)),
    )
    points = [current]
    index = _ReconnectIndex(model.dim)
    index.add(current)

    lo_budget, hi_budget = settings.lambda_budget or (lam0 - 100.0, lam0 + 100.0)
    ds = settings.step
    outcome = None

    while outcome is None:
        if len(points) >= settings.max_points:
            outcome = BranchOutcome(
                "BUDGET_EXHAUSTED",
                {"which": "max_points", "points": len(points)},
                f"stopped after {len(points)} points",
            )
            break

        stepped = None
        while stepped is None:
            phi_pred = current.phi.with_values(current.phi.values + ds * current.tangent_phi)
            lam_pred = current.lam + ds * current.tangent_lam
            try:
                lo, hi = model.lambda_interval
                if not (lo < lam_pred < hi):
                    raise DomainError("predictor left the parameter interval")
                cand_phi, cand_lam, iters = _corrector(
                    model,
                    phi_pred,
                    lam_pred,
                    current.phi.values,
                    current.lam,
                    current.tangent_phi,
                    current.tangent_lam,
                    settings,
                )
                dist = product_distance(cand_phi, cand_lam, current.phi, current.lam)
                if dist > 2.0 * ds or dist < 1e-3 * ds:
                    raise ConvergenceError(
                        f"corrector landed at distance {dist:.2e} for step {ds:.2e}", []
                    )
                stepped = (cand_phi, cand_lam, iters)
            except (ConvergenceError, DomainError, NonHyperbolicError, np.linalg.LinAlgError):
                if ds <= settings.min_step:
                    near_l = _near_lambda_boundary(model, current.lam, 1e3 * settings.min_step)
                    near_o = _near_omega_boundary(model, current.phi, 1e3 * settings.min_step)
                    if near_l:
                        outcome = BranchOutcome(
                            "HIT_LAMBDA_BOUNDARY",
                            {"lambda": current.lam, **near_l},
                            "corrector stalled at the parameter boundary",
                        )
                    elif near_o is not None:
                        outcome = BranchOutcome(
                            "HIT_OMEGA_BOUNDARY",
                            {"distance": near_o},
                            "corrector stalled at the state-box boundary",
                        )
                    else:
                        outcome = BranchOutcome(
                            "BUDGET_EXHAUSTED",
                            {"which": "min_step", "lambda": current.lam},
                            "corrector failed at the minimal steplength",
                        )
                    break
                ds = max(settings.min_step, 0.5 * ds)
        if outcome is not None:
            break

        cand_phi, cand_lam, iters = stepped
        cand_phi = _regrow(model, cand_phi, cand_lam, settings)
        res_sup = sup_norm(residual(model, cand_phi, cand_lam))
        if res_sup > settings.corrector_tol * 10:
            outcome = BranchOutcome(
                "BUDGET_EXHAUSTED",
                {"which": "residual_recheck", "residual": res_sup},
                "accepted point failed the independent residual re-check",
            )
            break

        bc = boundary_conditions(model, cand_lam, cand_phi.window, settings.bc_mode, cand_phi)
        prev_tan = (
            embed(
                TruncatedSequence(current.phi.window, current.tangent_phi), cand_phi.window
            ).values,
            current.tangent_lam,
        )
        tau_phi, tau_lam = _tangent(model, cand_phi, cand_lam, bc, w, prev=prev_tan)
        fold = bool(
            prev_tan[1] * tau_lam < 0 and max(abs(prev_tan[1]), abs(tau_lam)) > 1e-12
        )

        hyp_ok = None
        if settings.check_hyperbolicity:
            try:
                hyp_ok = hyperbolicity_report(
                    model, cand_phi, cand_lam, constants=False
                ).hypotheses_met
            except (ValueError, np.linalg.LinAlgError):
                hyp_ok = None

        new_point = BranchPoint(
            lam=cand_lam,
            phi=cand_phi,
            tangent_phi=tau_phi,
            tangent_lam=tau_lam,
            sup=sup_norm(cand_phi),
            arclength=current.arclength
            + product_distance(cand_phi, cand_lam, current.phi, current.lam),
            hyperbolic=hyp_ok,
            fold=fold,
            corrector_iterations=iters,
            residual_sup=res_sup,
        )
        points.append(new_point)
        current = new_point

        hit = index.query(
            new_point, settings.reconnect_radius, 3.0 * settings.reconnect_radius
        )
        index.add(new_point)
        if hit is not None:
            j, dist = hit
            outcome = BranchOutcome(
                "RECONNECT",
                {"matched_point": j, "distance": dist},
                "trace returned to a previously computed point",
            )
            break

        near_o = _near_omega_boundary(model, new_point.phi, settings.boundary_margin)
        if near_o is not None:
            outcome = BranchOutcome(
                "HIT_OMEGA_BOUNDARY", {"distance": near_o}, "state reached the box boundary"
            )
            break
        if new_point.sup > settings.norm_budget:
            outcome = BranchOutcome(
                "UNBOUNDED",
                {"which": "norm_budget", "sup_norm": new_point.sup},
                "solution norm passed the budget",
            )
            break
        near_l = _near_lambda_boundary(model, new_point.lam, settings.boundary_margin)
        if near_l:
            outcome = BranchOutcome(
                "HIT_LAMBDA_BOUNDARY",
                {"lambda": new_point.lam, **near_l},
                "parameter reached the boundary of its interval",
            )
            break
        if not (lo_budget <= new_point.lam <= hi_budget):
            outcome = BranchOutcome(
                "UNBOUNDED",
                {"which": "lambda_budget", "lambda": new_point.lam},
                "parameter passed the budget",
            )
            break

        if iters <= 3:
            ds = min(settings.max_step, 1.4 * ds)

    return Branch(direction, points, outcome)


def classify(plus: Branch, minus: Branch, model: ParametricModel) -> Classification:
    """Map a pair of traces onto the global branch alternatives.

    RECONNECT traces indicate alternatives (a)/(d) (not distinguishable
    numerically); two budget-certified unbounded traces on a globally defined
    model indicate (c); boundary contacts indicate (b1)/(b2) with the
    touched set named.  The result is evidence, not a proof.
    """
    omega_global = not model.omega.is_bounded and not (
        np.any(np.isfinite(model.omega.lower)) or np.any(np.isfinite(model.omega.upper))
    )
    lambda_global = not (
        np.isfinite(model.lambda_interval[0]) or np.isfinite(model.lambda_interval[1])
    )
    evidence = {
        "plus": {"code": plus.outcome.code, **plus.outcome.evidence},
        "minus": {"code": minus.outcome.code, **minus.outcome.evidence},
    }
    codes = {plus.outcome.code, minus.outcome.code}

    if "RECONNECT" in codes:
        return Classification(
            "(a)/(d)",
            ["a", "d"],
            "The trace reconnects: the two half-branches intersect beyond the "
            "starting pair, or the component minus the starting pair stays "
            "connected.  The two cases cannot be told apart numerically.  "
            "This classification is numerical evidence, not a proof.",
            evidence,
        )

    parts = []
    alternatives = []
    for branch, tag in ((plus, "b1"), (minus, "b2")):
        code = branch.outcome.code
        side = "C_+" if tag == "b1" else "C_-"
        if code == "UNBOUNDED":
            which = branch.outcome.evidence.get("which", "")
            parts.append(f"{side} left the {which.replace('_', ' ')} (unbounded evidence)")
            alternatives.append(tag)
        elif code == "HIT_OMEGA_BOUNDARY":
            parts.append(f"closure of Pi_1({side}) meets the state-box boundary")
            alternatives.append(tag)
        elif code == "HIT_LAMBDA_BOUNDARY":
            parts.append(f"closure of Pi_2({side}) meets the parameter boundary")
            alternatives.append(tag)
        else:
            parts.append(f"{side} stopped on a budget ({branch.outcome.evidence.get('which')})")

    if (
        plus.outcome.code == "UNBOUNDED"
        and minus.outcome.code == "UNBOUNDED"
        and omega_global
        and lambda_global
    ):
        return Classification(
            "(c)",
            ["c"],
            "Both half-branches left their budgets on a globally defined "
            "model: two unbounded disjoint sets meeting at the starting pair.  "
            "This classification is numerical evidence, not a proof.",
            evidence,
        )

    if alternatives:
        label = "+".join(f"({a})" for a in dict.fromkeys(alternatives))
        return Classification(
            label,
            list(dict.fromkeys(alternatives)),
            "; ".join(parts) + ".  This classification is numerical evidence, not a proof.",
            evidence,
        )
    return Classification(
        "inconclusive",
        [],
        "; ".join(parts) + ".  Budgets were exhausted before any alternative "
        "could be certified; the labels are numerical evidence only.",
        evidence,
    )
