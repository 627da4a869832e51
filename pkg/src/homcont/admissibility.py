"""Certificates that limit equations admit only the trivial bounded entire
solution, plus the discrete Green's function of a hyperbolic linear equation.

Each check returns an AdmissibilityCertificate recording the criterion, the
two sides of the decisive inequality and whether it holds with a strict
margin.  Nothing here is proof-grade for arbitrary systems: Lipschitz data
is user-supplied (spot-checked by sampling), and the semilinear route
reports two candidate thresholds side by side rather than silently choosing
one (see `check_semilinear`).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import dichotomy as dich
from .sequences import Window
from .solver import LimitRhs, ParametricModel

__all__ = [
    "LimitSystem",
    "AdmissibilityCertificate",
    "check_contractive",
    "check_semilinear",
    "check_asymptotically_linear",
    "check_limit_admissibility",
    "green_function",
    "green_sup_norm",
    "kappa_closed_form",
    "kappa_series",
    "kappa_green_sum",
    "iterate_limit_map",
    "limit_system_at",
]


@dataclass(frozen=True)
class LimitSystem:
    """p-periodic autonomous-in-parameter right-hand side g_t(x), with the
    optional data needed by the certification routes."""

    dim: int
    period: int
    rhs: Callable[[int, np.ndarray], np.ndarray] = field(repr=False)
    lip: np.ndarray | None = None
    linear: dich.LinearSystem | None = None
    lip_residual: float | None = None
    hint: str | None = None
    strictly_lower_coupling: bool = False

    def __post_init__(self):
        if self.period < 1:
            raise ValueError("period must be positive")
        if self.lip is not None:
            lip = np.atleast_1d(np.asarray(self.lip, dtype=float))
            if lip.shape != (self.period,):
                raise ValueError("need one Lipschitz constant per period entry")
            object.__setattr__(self, "lip", lip)
        self._spot_check()

    def _spot_check(self, seed: int = 0, samples: int = 8) -> None:
        rng = np.random.default_rng(seed)
        for _ in range(samples):
            t = int(rng.integers(-3, 3))
            x = rng.standard_normal(self.dim)
            y = rng.standard_normal(self.dim)
            gx = np.asarray(self.rhs(t, x), dtype=float)
            gper = np.asarray(self.rhs(t + self.period, x), dtype=float)
            if np.max(np.abs(gx - gper)) > 1e-9 * (1.0 + np.max(np.abs(gx))):
                raise ValueError(f"right-hand side is not {self.period}-periodic at t={t}")
            if self.lip is not None:
                gy = np.asarray(self.rhs(t, y), dtype=float)
                num = np.max(np.abs(gx - gy))
                den = np.max(np.abs(x - y))
                if den > 0 and num > self.lip[t % self.period] * den * (1.0 + 1e-9):
                    raise ValueError(
                        f"sampled slope {num / den:.4f} at t={t} exceeds the "
                        f"declared Lipschitz constant {self.lip[t % self.period]}"
                    )


@dataclass
class AdmissibilityCertificate:
    criterion: str
    verified: bool
    numbers: dict
    reason: str | None = None


# ---------------------------------------------------------------------------
# contraction route


def check_contractive(sys: LimitSystem, n_max: int = 16) -> AdmissibilityCertificate:
    """Search n <= n_max with sup over phases of the n-fold running product
    of Lipschitz constants below one.  Uniform boundedness of the right-hand
    side is sampled alongside and recorded with the certificate."""
    if sys.lip is None:
        return AdmissibilityCertificate(
            "contractive", False, {}, reason="no Lipschitz data supplied"
        )
    rng = np.random.default_rng(0)
    bound = max(
        float(np.max(np.abs(sys.rhs(int(t), x))))
        for t in range(sys.period)
        for x in 2.0 * rng.standard_normal((4, sys.dim))
    )
    lip = sys.lip
    p = sys.period
    best = np.inf
    for n in range(1, n_max + 1):
        worst = max(
            float(np.prod([lip[(t + j) % p] for j in range(n)])) for t in range(p)
        )
        best = min(best, worst)
        if worst < 1.0:
            return AdmissibilityCertificate(
                "contractive",
                True,
                {"n": n, "sup_product": worst, "threshold": 1.0, "bound_sample": bound},
            )
    return AdmissibilityCertificate(
        "contractive",
        False,
        {"n_max": n_max, "best_sup_product": best, "threshold": 1.0, "bound_sample": bound},
        reason=f"no n <= {n_max} makes the running Lipschitz product contractive",
    )


# ---------------------------------------------------------------------------
# Green's function of a hyperbolic linear equation


def green_function(
    A: dich.LinearSystem, report: dich.DichotomyReport, t: int, s: int
) -> np.ndarray:
    """G(t,s): forward transport of the projector for s <= t, minus the
    backward transport of its complement (through the restricted inverse on
    the kernel bundle) for s > t."""
    if not report.has_ed or report.data is None:
        raise ValueError("Green's function needs a dichotomy on Z")
    data = report.data
    d = A.dim
    if s <= t:
        return dich.evolution(A, t, s) @ data.projector(s)
    Vt = data.unstable_basis(t)
    Vs = data.unstable_basis(s)
    if Vt.shape[1] == 0:
        return np.zeros((d, d))
    C = Vs.T @ (dich.evolution(A, s, t) @ Vt)
    if np.linalg.cond(C) > 1e12:
        raise np.linalg.LinAlgError(
            f"kernel transport between t={t} and s={s} is numerically singular"
        )
    P_s = data.projector(s)
    return -Vt @ np.linalg.solve(C, Vs.T @ (np.eye(d) - P_s))


def green_sup_norm(
    A: dich.LinearSystem,
    report: dich.DichotomyReport,
    t_samples=None,
    s_radius: int | None = None,
) -> float:
    """sup_t sum_s |G(t, s+1)| over sampled t, truncated to |s - t| <= radius."""
    data = report.data
    win = data.window
    if s_radius is None:
        s_radius = max(20, win.length // 3)
    if t_samples is None:
        mid = (win.t_minus + win.t_plus) // 2
        t_samples = sorted({0, mid}) if win.contains(0) else [mid]
    best = 0.0
    for t in t_samples:
        total = 0.0
        for s in range(max(win.t_minus, t - s_radius), min(win.t_plus, t + s_radius) + 1):
            total += _mat_norm(green_function(A, report, t, s + 1)) if win.contains(s + 1) else 0.0
        best = max(best, total)
    return best


def _mat_norm(M: np.ndarray) -> float:
    if M.size == 0:
        return 0.0
    return float(np.max(np.sum(np.abs(M), axis=1)))


# ---------------------------------------------------------------------------
# semilinear route


def check_semilinear(
    A: dich.LinearSystem,
    lip_r: float,
    window: Window | None = None,
    tol: float = dich.DEFAULT_TOL,
) -> AdmissibilityCertificate:
    """Perturbation bound for x_{t+1} = A_t x_t + r_t(x_t) with hyperbolic
    linear part.

    Two thresholds are reported: a loose reference value K/(1-alpha), and
    the contraction bound (1-alpha)/(K(1+alpha)) that the Green's-function
    fixed-point argument actually needs.  With K >= 1 the loose value
    exceeds 1 and cannot force a contraction, so verification uses the
    contraction bound; a Lipschitz constant that only clears the loose value
    is flagged, never silently accepted.
    """
    rep = dich.detect_dichotomy(A, "Z", window, tol=tol)
    if not rep.has_ed:
        return AdmissibilityCertificate(
            "semilinear",
            False,
            {"lip_r": lip_r},
            reason="1 in Sigma(A): linear part has no dichotomy on Z",
        )
    K, alpha = rep.K, rep.alpha
    printed = K / (1.0 - alpha)
    contraction = (1.0 - alpha) / (K * (1.0 + alpha))
    verified = lip_r < contraction
    numbers = {
        "lip_r": float(lip_r),
        "K": K,
        "alpha": alpha,
        "contraction_bound": contraction,
        "printed_bound": printed,
    }
    reason = None
    if not verified and lip_r < printed:
        reason = "passes the printed bound only; contraction bound is violated"
    return AdmissibilityCertificate("semilinear", verified, numbers, reason=reason)


# ---------------------------------------------------------------------------
# asymptotically linear route


def kappa_closed_form(K: float, alpha: float, p: float) -> float:
    """Closed form K*alpha*((1+alpha^p)/(1-alpha^p))^(1/p) from the
    dichotomy constants.  The direct summation `kappa_green_sum` can exceed
    this value; certificates use the larger of the two."""
    return K * alpha * ((1.0 + alpha**p) / (1.0 - alpha**p)) ** (1.0 / p)


def kappa_series(K: float, alpha: float, p: float, terms: int = 60) -> float:
    """Truncation of the geometric series behind `kappa_closed_form`."""
    j = np.arange(terms + 1)
    total = np.sum(K**p * (alpha ** (p * (j + 1)) + alpha ** (p * (j + 2))))
    return float(total ** (1.0 / p))


def kappa_green_sum(
    A: dich.LinearSystem,
    report: dich.DichotomyReport,
    p: float,
    t_samples=None,
    s_radius: int | None = None,
) -> float:
    """sup_t (sum_s |G(t,s+1)|^p)^(1/p) by truncated summation of the actual
    Green's function."""
    data = report.data
    win = data.window
    if s_radius is None:
        s_radius = max(20, win.length // 3)
    if t_samples is None:
        t_samples = [0] if win.contains(0) else [(win.t_minus + win.t_plus) // 2]
    best = 0.0
    for t in t_samples:
        total = 0.0
        for s in range(max(win.t_minus, t - s_radius), min(win.t_plus - 1, t + s_radius) + 1):
            total += _mat_norm(green_function(A, report, t, s + 1)) ** p
        best = max(best, total ** (1.0 / p))
    return best


def check_asymptotically_linear(
    A: dich.LinearSystem,
    p: float,
    q: float,
    rho_norm: float,
    mu_norm: float,
    lambda_norm: float,
    R: float = 1.0,
    window: Window | None = None,
    tol: float = dich.DEFAULT_TOL,
) -> AdmissibilityCertificate:
    """Summability test: with kappa the l^p norm of the Green's function rows,
    verify ||rho||_q + ||mu||_q < 1/(2 kappa) and ||lambda||_q < 1/kappa.

    kappa is evaluated both through the printed closed form (from the
    dichotomy constants) and by truncated summation of the actual Green's
    function; the larger value decides, both are reported.
    """
    if not (1.0 < p < np.inf and 1.0 < q < np.inf) or abs(1.0 / p + 1.0 / q - 1.0) > 1e-9:
        raise ValueError("need conjugate exponents 1/p + 1/q = 1 with p, q in (1, inf)")
    rep = dich.detect_dichotomy(A, "Z", window, tol=tol)
    if not rep.has_ed:
        return AdmissibilityCertificate(
            "asymptotically_linear",
            False,
            {},
            reason="1 in Sigma(A): linear part has no dichotomy on Z",
        )
    k_closed = kappa_closed_form(rep.K, rep.alpha, p)
    k_green = kappa_green_sum(A, rep, p)
    kappa = max(k_closed, k_green)
    small_ok = rho_norm + mu_norm < 1.0 / (2.0 * kappa)
    lip_ok = lambda_norm < 1.0 / kappa
    numbers = {
        "kappa_closed_form": k_closed,
        "kappa_green_sum": k_green,
        "kappa_used": kappa,
        "rho_plus_mu": rho_norm + mu_norm,
        "half_inverse_kappa": 1.0 / (2.0 * kappa),
        "lambda_norm": lambda_norm,
        "inverse_kappa": 1.0 / kappa,
        "R": R,
    }
    reason = None
    if not (small_ok and lip_ok):
        reason = "growth/Lipschitz norms too large for the summability bound"
    return AdmissibilityCertificate(
        "asymptotically_linear", small_ok and lip_ok, numbers, reason=reason
    )


# ---------------------------------------------------------------------------
# structural route for triangular systems


def _check_triangular(sys: LimitSystem, tol: float) -> AdmissibilityCertificate:
    """Cascade argument for lower-triangular periodic systems whose
    nonlinearity feeds each row only from strictly earlier components: every
    diagonal subsystem is a hyperbolic scalar equation, so bounded solutions
    vanish component by component."""
    if sys.linear is None or not sys.strictly_lower_coupling:
        return AdmissibilityCertificate(
            "periodic_floquet", False, {}, reason="no triangular structure data"
        )
    p = sys.period
    table = np.array([sys.linear.matrix(t) for t in range(p)])
    if np.max(np.abs(np.triu(table, k=1))) > 0:
        return AdmissibilityCertificate(
            "periodic_floquet", False, {}, reason="linear part is not lower triangular"
        )
    diag_mult = np.prod(np.abs(np.diagonal(table, axis1=1, axis2=2)), axis=0)
    rates = diag_mult ** (1.0 / p)
    margin = float(np.min(np.abs(rates - 1.0)))
    ok = margin > tol
    return AdmissibilityCertificate(
        "periodic_floquet",
        ok,
        {"diagonal_rates": rates.tolist(), "unit_circle_margin": margin},
        reason=None if ok else "a diagonal rate sits on the unit circle",
    )


# ---------------------------------------------------------------------------
# dispatch for the limit systems of a model


def limit_system_at(rhs: LimitRhs, dim: int, lam: float) -> LimitSystem:
    """Freeze a model's limit right-hand side at a parameter value."""
    linear = None
    if rhs.linear_table is not None:
        table = np.asarray(rhs.linear_table(lam), dtype=float).reshape(-1, dim, dim)
        linear = dich.periodic_system(list(table))
    return LimitSystem(
        dim=dim,
        period=rhs.period,
        rhs=lambda t, x: rhs.f(t, x, lam),
        lip=None if rhs.lip_table is None else rhs.lip_table(lam),
        linear=linear,
        lip_residual=None if rhs.lip_residual is None else rhs.lip_residual(lam),
        hint=rhs.admissibility_hint,
        strictly_lower_coupling=rhs.strictly_lower_coupling,
    )


def _certify(sys: LimitSystem, tol: float) -> AdmissibilityCertificate:
    order = {
        "contractive": [_route_contractive],
        "semilinear": [_route_semilinear],
        "triangular": [_check_triangular],
        "periodic_floquet": [_check_triangular],
        None: [_route_contractive, _route_semilinear, _check_triangular],
    }[sys.hint]
    last = None
    for route in order:
        cert = route(sys, tol)
        if cert.verified:
            return cert
        last = cert
    if sys.hint is None:
        return AdmissibilityCertificate(
            "none", False, {}, reason="no certificate: no applicable criterion verified"
        )
    return last


def _route_contractive(sys: LimitSystem, tol: float) -> AdmissibilityCertificate:
    return check_contractive(sys)


def _route_semilinear(sys: LimitSystem, tol: float) -> AdmissibilityCertificate:
    if sys.linear is None or sys.lip_residual is None:
        return AdmissibilityCertificate(
            "semilinear", False, {}, reason="no semilinear split supplied"
        )
    return check_semilinear(sys.linear, sys.lip_residual, tol=tol)


def check_limit_admissibility(
    model: ParametricModel, lam: float, tol: float = dich.DEFAULT_TOL
) -> tuple[AdmissibilityCertificate, AdmissibilityCertificate]:
    """Certificates for the backward- and forward-limit equations of a model."""
    if not model.has_limits:
        raise ValueError("no certificate: model carries no limit systems")
    certs = []
    for rhs in (model.limit_minus, model.limit_plus):
        sys = limit_system_at(rhs, model.dim, lam)
        certs.append(_certify(sys, tol))
    return certs[0], certs[1]


# ---------------------------------------------------------------------------
# fixed-point iteration of the sequence-space map


def iterate_limit_map(
    sys: LimitSystem, start: np.ndarray, window: Window, sweeps: int
) -> np.ndarray:
    """Iterate (F phi)_t = g_{t-1}(phi_{t-1}) on a finite window (the value
    entering from the left of the window is frozen to zero).  For a verified
    contractive system this converges to the unique fixed sequence."""
    vals = np.array(start, dtype=float)
    if vals.shape[0] != window.length:
        raise ValueError("start values must match the window length")
    ts = window.indices()
    for _ in range(sweeps):
        new = np.empty_like(vals)
        new[0] = sys.rhs(int(ts[0]) - 1, np.zeros(sys.dim))
        for j in range(1, len(ts)):
            new[j] = sys.rhs(int(ts[j]) - 1, vals[j - 1])
        vals = new
    return vals
