"""Linear nonautonomous machinery: evolution operators, exponential
dichotomies, dichotomy spectra and Fredholm indices.

A linear difference equation x_{t+1} = A_t x_t is described by a coefficient
map together with a structural tag (autonomous, periodic, asymptotically
periodic, or general bounded).  Dichotomy detection is structure-aware:

* autonomous / periodic systems are decided exactly through the moduli of
  the multipliers of the period matrix;
* asymptotically periodic systems inherit their half-axis spectra from the
  limit systems; on the whole axis an additional transversality test between
  the forward-decaying and backward-decaying solution bundles is required;
* general systems fall back to a singular-value splitting heuristic over
  sliding sub-windows, flagged as such in the report diagnostics.

Solution bundles are propagated with QR re-orthonormalization, so products
never overflow.  Backward dynamics are only ever used through the restricted
inverse on the kernel bundle; coefficient matrices are not assumed invertible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla

from .sequences import TruncatedSequence, Window

__all__ = [
    "Autonomous",
    "Periodic",
    "AsymPeriodic",
    "General",
    "LinearSystem",
    "DichotomyReport",
    "SpectrumReport",
    "NotFredholmError",
    "constant_system",
    "periodic_system",
    "asymptotically_periodic",
    "general_system",
    "scale",
    "coeff_table",
    "evolution",
    "detect_dichotomy",
    "dichotomy_spectrum",
    "fredholm_index",
    "apply_difference_operator",
    "default_window",
]

DEFAULT_TOL = 1e-9        # margin between Floquet rates and the unit circle
DEFAULT_ANGLE_TOL = 1e-8  # smallest admissible angle between solution bundles
DEFAULT_K_CAP = 1e6       # largest constant accepted when fitting (K, alpha)
DEFAULT_GAP_TOL = 0.05    # splitting gap for the general-structure heuristic

INTERVALS = ("Z", "Z_plus", "Z_minus")


class NotFredholmError(RuntimeError):
    """Raised when a half-axis dichotomy needed for the index is missing."""

    def __init__(self, half_axis: str, message: str):
        super().__init__(message)
        self.half_axis = half_axis


# ---------------------------------------------------------------------------
# system descriptions


@dataclass(frozen=True)
class Autonomous:
    period: int = 1


@dataclass(frozen=True)
class Periodic:
    period: int

    def __post_init__(self):
        if self.period < 1:
            raise ValueError("period must be a positive integer")


@dataclass(frozen=True)
class AsymPeriodic:
    """Coefficients converging to periodic limits on each half axis."""

    period_minus: int
    limit_minus: Callable[[int], np.ndarray] = field(repr=False)
    period_plus: int = 1
    limit_plus: Callable[[int], np.ndarray] = field(repr=False, default=None)

    def __post_init__(self):
        if self.period_minus < 1 or self.period_plus < 1:
            raise ValueError("periods must be positive integers")


@dataclass(frozen=True)
class General:
    pass


@dataclass(frozen=True)
class LinearSystem:
    """Coefficient map t -> A_t with a structural tag.

    `bound` caches sup_t |A_t| when known; it is only used to seed default
    spectral ranges.
    """

    dim: int
    coeff: Callable[[int], np.ndarray] = field(repr=False)
    structure: object = General()
    bound: float | None = None

    def matrix(self, t: int) -> np.ndarray:
        A = np.asarray(self.coeff(int(t)), dtype=float)
        if A.shape != (self.dim, self.dim):
            raise ValueError(f"coefficient at t={t} has shape {A.shape}, expected {(self.dim, self.dim)}")
        return A


def _table_fn(table: np.ndarray) -> Callable[[int], np.ndarray]:
    table = np.asarray(table, dtype=float)
    p = table.shape[0]
    return lambda t: table[t % p]


def constant_system(A) -> LinearSystem:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return LinearSystem(A.shape[0], lambda t: A, Autonomous(), bound=_mat_norm(A))


def periodic_system(matrices: Sequence) -> LinearSystem:
    table = np.asarray([np.atleast_2d(np.asarray(M, dtype=float)) for M in matrices])
    if table.shape[0] == 1:
        return constant_system(table[0])
    d = table.shape[1]
    return LinearSystem(
        d, _table_fn(table), Periodic(table.shape[0]), bound=max(_mat_norm(M) for M in table)
    )


def asymptotically_periodic(
    coeff: Callable[[int], np.ndarray],
    dim: int,
    minus_table: Sequence,
    plus_table: Sequence,
    bound: float | None = None,
) -> LinearSystem:
    """System with tabulated periodic limits at -inf and +inf."""
    mt = np.asarray([np.atleast_2d(np.asarray(M, dtype=float)) for M in minus_table])
    pt = np.asarray([np.atleast_2d(np.asarray(M, dtype=float)) for M in plus_table])
    structure = AsymPeriodic(mt.shape[0], _table_fn(mt), pt.shape[0], _table_fn(pt))
    return LinearSystem(dim, coeff, structure, bound=bound)


def general_system(coeff: Callable[[int], np.ndarray], dim: int, bound=None) -> LinearSystem:
    return LinearSystem(dim, coeff, General(), bound=bound)


def scale(sys: LinearSystem, gamma: float) -> LinearSystem:
    """System with coefficients A_t / gamma; the structure tag is preserved."""
    if gamma <= 0:
        raise ValueError("scaling factor must be positive")
    g = float(gamma)
    coeff = sys.coeff
    st = sys.structure
    if isinstance(st, AsymPeriodic):
        lm, lp = st.limit_minus, st.limit_plus
        st = AsymPeriodic(
            st.period_minus, lambda t: lm(t) / g, st.period_plus, lambda t: lp(t) / g
        )
    return LinearSystem(
        sys.dim,
        lambda t: coeff(t) / g,
        st,
        bound=None if sys.bound is None else sys.bound / g,
    )


def coeff_table(sys: LinearSystem, window: Window) -> np.ndarray:
    """Coefficients A_t for t in the window, stacked as (length, d, d)."""
    return np.array([sys.matrix(t) for t in window.indices()])


def coeff_bound(sys: LinearSystem, window: Window | None = None) -> float:
    if sys.bound is not None:
        return sys.bound
    window = window or default_window(sys, "Z")
    return max(_mat_norm(sys.matrix(t)) for t in window.indices())


def evolution(sys: LinearSystem, t: int, s: int) -> np.ndarray:
    """Forward product A_{t-1} ... A_s; identity when t == s."""
    if s > t:
        raise ValueError(
            f"evolution requires s <= t (got t={t}, s={s}); backward dynamics "
            "exist only on the kernel bundle of a dichotomy projector"
        )
    M = np.eye(sys.dim)
    for r in range(s, t):
        M = sys.matrix(r) @ M
    return M


def apply_difference_operator(sys: LinearSystem, phi: TruncatedSequence) -> TruncatedSequence:
    """psi_t = phi_t - A_{t-1} phi_{t-1} on the sub-window [t_minus+1, t_plus]."""
    w = phi.window
    table = coeff_table(sys, Window(w.t_minus, w.t_plus - 1))
    out = phi.values[1:] - np.einsum("tij,tj->ti", table, phi.values[:-1])
    return TruncatedSequence(Window(w.t_minus + 1, w.t_plus), out)


def default_window(sys: LinearSystem, interval: str) -> Window:
    p = _periods(sys)
    hw = int(max(30, 8 * max(p)))
    if interval == "Z":
        return Window(-hw, hw)
    if interval == "Z_plus":
        return Window(0, 2 * hw)
    if interval == "Z_minus":
        return Window(-2 * hw, 0)
    raise ValueError(f"unknown interval tag {interval!r}; expected one of {INTERVALS}")


def _periods(sys: LinearSystem):
    st = sys.structure
    if isinstance(st, (Autonomous, Periodic)):
        return (st.period,)
    if isinstance(st, AsymPeriodic):
        return (st.period_minus, st.period_plus)
    return (1,)


# ---------------------------------------------------------------------------
# small linear-algebra helpers


def _mat_norm(M: np.ndarray) -> float:
    """Operator norm induced by the max-norm (largest absolute row sum)."""
    if M.size == 0:
        return 0.0
    return float(np.max(np.sum(np.abs(M), axis=1)))


def _orth_cols(M: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the column space."""
    if M.shape[1] == 0:
        return M
    Q, R = np.linalg.qr(M)
    diag = np.abs(np.diag(R))
    if diag.size and np.min(diag) > 1e-10 * max(np.max(diag), 1e-290):
        return Q
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((M.shape[0], 0))
    r = int(np.sum(s > s[0] * M.shape[0] * np.finfo(float).eps))
    return U[:, :r]


def _orth_rows(M: np.ndarray) -> np.ndarray:
    return _orth_cols(M.T).T


def _null_of_rows(B: np.ndarray, d: int) -> np.ndarray:
    """Orthonormal basis of {x : B x = 0} for a matrix of orthonormal rows."""
    if B.shape[0] == 0:
        return np.eye(d)
    _, s, Vt = np.linalg.svd(B, full_matrices=True)
    r = int(np.sum(s > max(B.shape) * np.finfo(float).eps * (s[0] if s.size else 1.0)))
    return Vt[r:].T


def _monodromy(limit_fn: Callable[[int], np.ndarray], period: int, t0: int, d: int) -> np.ndarray:
    M = np.eye(d)
    for r in range(t0, t0 + period):
        M = np.asarray(limit_fn(r), dtype=float) @ M
    return M


def _floquet_rates(M: np.ndarray, period: int) -> np.ndarray:
    """Moduli of the multipliers, taken to the power 1/period, sorted."""
    moduli = np.abs(np.linalg.eigvals(M))
    return np.sort(moduli ** (1.0 / period))


def _floquet_points(M: np.ndarray, period: int) -> list[float]:
    rates = [r for r in _floquet_rates(M, period) if r > 1e-14]
    pts: list[float] = []
    for r in rates:
        if not pts or abs(r - pts[-1]) > 1e-12 * max(1.0, r):
            pts.append(float(r))
    return pts


def _stable_basis(M: np.ndarray) -> np.ndarray:
    d = M.shape[0]
    _, Q, sdim = sla.schur(M, output="real", sort=lambda ar, ai: np.hypot(ar, ai) < 1.0)
    return Q[:, :sdim] if sdim else np.zeros((d, 0))


def _unstable_basis(M: np.ndarray) -> np.ndarray:
    d = M.shape[0]
    _, Q, sdim = sla.schur(M, output="real", sort=lambda ar, ai: np.hypot(ar, ai) > 1.0)
    return Q[:, :sdim] if sdim else np.zeros((d, 0))


def _annihilator_rows(V: np.ndarray, d: int) -> np.ndarray:
    """Orthonormal rows spanning the orthogonal complement of span(V)."""
    if V.shape[1] == 0:
        return np.eye(d)
    U, s, _ = np.linalg.svd(V, full_matrices=True)
    r = int(np.sum(s > d * np.finfo(float).eps * s[0]))
    return U[:, r:].T


# ---------------------------------------------------------------------------
# solution bundles


@dataclass
class _Bundles:
    """Forward-decaying (stable) and backward-decaying (kernel) solution
    bundles on a common sub-window.

    The stable bundle is stored through annihilator rows (B_t x = 0 defines
    it); orthonormal column bases are materialized lazily on request.
    """

    window: Window
    annihilator: np.ndarray  # (n, m, d) orthonormal rows per time
    unstable: np.ndarray     # (n, d, m) orthonormal columns per time
    rank_ok: bool
    min_angle: float = 1.0

    def __post_init__(self):
        self._stable_cache: dict[int, np.ndarray] = {}
        self._unstable_cache: dict[int, np.ndarray] = {}
        self._proj_cache: dict[int, np.ndarray] = {}

    @property
    def dim(self) -> int:
        return self.unstable.shape[1]

    def _idx(self, t: int) -> int:
        return self.window.offset(int(t))

    def stable_basis(self, t: int) -> np.ndarray:
        t = int(t)
        if t not in self._stable_cache:
            d = self.dim
            k = d - self.annihilator.shape[1]
            self._stable_cache[t] = _null_of_rows(self.annihilator[self._idx(t)], d)[:, :k]
        return self._stable_cache[t]

    def unstable_basis(self, t: int) -> np.ndarray:
        """Orthonormalized on access; the stored propagation is raw."""
        t = int(t)
        if t not in self._unstable_cache:
            raw = self.unstable[self._idx(t)]
            m = raw.shape[1]
            U = _orth_cols(raw)
            if U.shape[1] < m:
                U = np.hstack([U, np.zeros((raw.shape[0], m - U.shape[1]))])
            self._unstable_cache[t] = U
        return self._unstable_cache[t]

    def angle(self, t: int) -> float:
        return _min_angle(self.stable_basis(t), self.unstable_basis(t))

    def projector(self, t: int) -> np.ndarray:
        """Projector onto the stable bundle along the kernel bundle at time t."""
        t = int(t)
        if t not in self._proj_cache:
            S = self.stable_basis(t)
            U = self.unstable_basis(t)
            d = self.dim
            if S.shape[1] + U.shape[1] != d:
                raise np.linalg.LinAlgError(
                    f"bundle dimensions {S.shape[1]}+{U.shape[1]} do not split R^{d} at t={t}"
                )
            M = np.hstack([S, U])
            E = np.zeros((d, d))
            E[: S.shape[1], : S.shape[1]] = np.eye(S.shape[1])
            self._proj_cache[t] = M @ E @ np.linalg.inv(M)
        return self._proj_cache[t]


_REORTH_EVERY = 4


def _propagate_annihilator(table: np.ndarray, B_end: np.ndarray, n_keep: int) -> tuple[np.ndarray, bool]:
    """Rows B_t = B_{t+1} A_t swept down over `table`, re-orthonormalized
    every few steps for conditioning (the kernel is scaling-invariant)."""
    m = B_end.shape[0]
    d = B_end.shape[1] if m else table.shape[1]
    out = np.empty((n_keep + 1, m, d))
    out[n_keep] = B_end
    ok = True
    B = B_end
    for j in range(n_keep - 1, -1, -1):
        B = B @ table[j]
        if m and (j % _REORTH_EVERY == 0 or j == 0):
            Bo = _orth_rows(B)
            if Bo.shape[0] < m:
                ok = False
                pad = np.zeros((m - Bo.shape[0], d))
                Bo = np.vstack([Bo, pad]) if Bo.size else pad
            B = Bo
        out[j] = B
    return out, ok


def _propagate_unstable(table: np.ndarray, U_start: np.ndarray, n_keep: int) -> tuple[np.ndarray, bool]:
    """Columns U_{t+1} = A_t U_t swept up over `table`, re-orthonormalized
    every few steps; bases are re-orthonormalized again on access."""
    d = U_start.shape[0]
    m = U_start.shape[1]
    out = np.empty((n_keep + 1, d, m))
    out[0] = U_start
    ok = True
    U = U_start
    for j in range(n_keep):
        U = table[j] @ U
        if m and (j % _REORTH_EVERY == _REORTH_EVERY - 1 or j == n_keep - 1):
            Uo = _orth_cols(U)
            if Uo.shape[1] < m:
                # a kernel direction was annihilated: restricted invertibility fails
                ok = False
                pad = np.zeros((d, m - Uo.shape[1]))
                Uo = np.hstack([Uo, pad]) if Uo.size else pad
            U = Uo
        out[j + 1] = U
    return out, ok


def _min_angle(S: np.ndarray, U: np.ndarray) -> float:
    """Smallest singular value of the combined basis [S U] (0 when the
    bundles overlap, 1 when they are orthogonal complements)."""
    M = np.hstack([S, U])
    if M.shape[1] == 0:
        return 1.0
    if M.shape[1] > M.shape[0]:
        return 0.0
    return float(np.linalg.svd(M, compute_uv=False)[-1])


def _build_bundles(
    table: np.ndarray,
    window: Window,
    B_anchor: np.ndarray,
    anchor_s: int,
    U_anchor: np.ndarray,
    anchor_u: int,
) -> _Bundles:
    """Propagate both bundles and restrict them to the overlap window."""
    off = window.t_minus
    nB = anchor_s - window.t_minus
    B_all, b_ok = _propagate_annihilator(table[: anchor_s - off], B_anchor, nB)
    nU = window.t_plus - anchor_u
    U_all, u_ok = _propagate_unstable(table[anchor_u - off :], U_anchor, nU)

    sub = Window(anchor_u, anchor_s)
    bundles = _Bundles(
        sub, B_all[anchor_u - window.t_minus :], U_all[: sub.length], b_ok and u_ok
    )
    sample = _subsample(sub.indices(), 9)
    bundles.min_angle = float(min(bundles.angle(int(t)) for t in sample))
    return bundles


# ---------------------------------------------------------------------------
# reports


@dataclass
class DichotomyReport:
    """Outcome of a dichotomy detection on one interval.

    When `has_ed` is true, `projector_at_0` is the invariant projector at
    time 0 and (K, alpha) are constants verified against the exponential
    estimates on sampled window pairs.
    """

    interval: str
    has_ed: bool
    projector_rank: int
    projector_at_0: np.ndarray | None
    K: float | None
    alpha: float | None
    diagnostics: dict = field(default_factory=dict)
    data: _Bundles | None = field(default=None, repr=False, compare=False)

    def projector(self, t: int) -> np.ndarray:
        if self.data is None:
            raise ValueError("report carries no bundle data (no dichotomy detected)")
        return self.data.projector(t)


@dataclass
class SpectrumReport:
    """Closed spectral intervals [lo, hi] on (0, inf), sorted and disjoint."""

    interval: str
    intervals: list[tuple[float, float]]
    warning: str | None = None
    method: str = "scan"
    diagnostics: dict = field(default_factory=dict)

    def contains(self, gamma: float, margin: float = 0.0) -> bool:
        return any(lo - margin <= gamma <= hi + margin for lo, hi in self.intervals)

    def to_json_dict(self) -> dict:
        return {
            "interval": self.interval,
            "spectrum": [[lo, hi] for lo, hi in self.intervals],
        }


# ---------------------------------------------------------------------------
# detection


def _check_window(sys: LinearSystem, interval: str, window: Window | None) -> Window:
    if interval not in INTERVALS:
        raise ValueError(f"unknown interval tag {interval!r}; expected one of {INTERVALS}")
    if window is None:
        window = default_window(sys, interval)
    need = max(3, 2 * max(_periods(sys)))
    if window.length < need:
        raise ValueError(f"window of length {window.length} too short; need at least {need}")
    if interval == "Z_plus":
        window = Window(max(window.t_minus, 0), window.t_plus)
    elif interval == "Z_minus":
        window = Window(window.t_minus, min(window.t_plus, 0))
    if not (window.contains(0)):
        raise ValueError(f"window {window} must contain t=0")
    return window


def _limit_data(sys: LinearSystem, side: str):
    """(limit_fn, period) describing the coefficients at +inf or -inf."""
    st = sys.structure
    if isinstance(st, (Autonomous, Periodic)):
        return sys.coeff, st.period
    if isinstance(st, AsymPeriodic):
        if side == "plus":
            return st.limit_plus, st.period_plus
        return st.limit_minus, st.period_minus
    raise ValueError("no periodic limit data for general structure")


def _sliding_split(table: np.ndarray, gap_tol: float):
    """Singular-value splitting of transition matrices over sliding
    sub-windows.  Returns (k_stable, m_unstable, consistent, rate_floor)."""
    L, d, _ = table.shape
    ell = max(6, min(L // 3, 25))
    step = max(1, ell // 2)
    counts = []
    floors = []
    marginal = False
    for s in range(0, L - ell + 1, step):
        M = np.eye(d)
        for j in range(s, s + ell):
            M = table[j] @ M
        sv = np.linalg.svd(M, compute_uv=False)
        rates = sv ** (1.0 / ell)
        n_u = int(np.sum(rates > 1.0 + gap_tol))
        n_s = int(np.sum(rates < 1.0 - gap_tol))
        if n_u + n_s < d:
            marginal = True
        counts.append((n_s, n_u))
        stab = rates[rates < 1.0 - gap_tol]
        unst = rates[rates > 1.0 + gap_tol]
        f = 0.0
        if stab.size:
            f = max(f, float(np.max(stab)))
        if unst.size:
            f = max(f, float(1.0 / np.min(unst)))
        floors.append(f if f > 0 else 0.5)
    consistent = (not marginal) and len(set(counts)) == 1
    k, m = counts[0] if counts else (0, 0)
    return k, m, consistent, max(floors) if floors else 0.5, ell


def _subsample(ts: np.ndarray, n: int) -> np.ndarray:
    if len(ts) <= n:
        return ts
    picks = np.unique(np.linspace(0, len(ts) - 1, n).round().astype(int))
    out = set(ts[picks].tolist())
    out.add(int(ts[0]))
    out.add(int(ts[-1]))
    if ts[0] <= 0 <= ts[-1]:
        out.add(0)
    return np.array(sorted(out))


def _fit_constants(
    table: np.ndarray,
    window: Window,
    bundles: _Bundles,
    rate_floor: float,
    k_cap: float,
) -> tuple[float, float, dict]:
    """Smallest alpha on a log grid (and the minimal matching K) such that
    the exponential estimates hold on sampled window pairs."""
    sub = bundles.window
    ts = _subsample(sub.indices(), 16)
    projs = {int(t): bundles.projector(t) for t in ts}
    d = table.shape[1]
    pairs: list[tuple[int, float]] = []

    # forward estimates |Phi(t,s) P_s|
    for i, s in enumerate(ts):
        M = projs[int(s)].copy()
        pairs.append((0, _mat_norm(M)))
        trail = int(s)
        for t in ts[i + 1 :]:
            for r in range(trail, int(t)):
                M = table[r - window.t_minus] @ M
            trail = int(t)
            pairs.append((int(t) - int(s), _mat_norm(M)))

    # backward estimates |Phibar(s,t)(I - P_t)| through the kernel bundle
    m = bundles.unstable.shape[2]
    cond_bad = False
    if m > 0:
        for i, s in enumerate(ts):
            Vs = bundles.unstable_basis(int(s))
            W = Vs.copy()
            trail = int(s)
            for t in ts[i:]:
                for r in range(trail, int(t)):
                    W = table[r - window.t_minus] @ W
                trail = int(t)
                Vt = bundles.unstable_basis(int(t))
                C = Vt.T @ W
                if np.linalg.cond(C) > 1e12:
                    cond_bad = True
                    continue
                back = Vs @ np.linalg.solve(C, Vt.T @ (np.eye(d) - projs[int(t)]))
                pairs.append((int(t) - int(s), _mat_norm(back)))

    deltas = np.array([p[0] for p in pairs], dtype=float)
    mags = np.array([p[1] for p in pairs], dtype=float)
    keep = mags > 0
    deltas, mags = deltas[keep], mags[keep]
    lo = min(max(rate_floor, 1e-6), 0.99)
    grid = np.geomspace(lo, 0.9995, 33)
    if not deltas.size:
        return 1.0, float(grid[0]), {"pairs": 0, "kernel_cond_bad": cond_bad}
    logK = np.log(mags)[None, :] - deltas[None, :] * np.log(grid)[:, None]
    Ks = np.exp(np.max(logK, axis=1))
    feas = np.nonzero(Ks <= k_cap)[0]
    j = int(feas[0]) if feas.size else len(grid) - 1
    K = max(1.0, float(Ks[j]))
    return K, float(grid[j]), {
        "pairs": int(deltas.size),
        "kernel_cond_bad": cond_bad,
        "K_cap_hit": not feas.size,
    }


def detect_dichotomy(
    sys: LinearSystem,
    interval: str = "Z",
    window: Window | None = None,
    tol: float = DEFAULT_TOL,
    angle_tol: float = DEFAULT_ANGLE_TOL,
    gap_tol: float = DEFAULT_GAP_TOL,
    fit_constants: bool = True,
    k_cap: float = DEFAULT_K_CAP,
) -> DichotomyReport:
    """Decide an exponential dichotomy on the tagged interval.

    Returns a report with the projector at time 0 and constants (K, alpha)
    verified on sampled pairs of the window.  Borderline rate splittings
    (within `tol` of the unit circle) yield has_ed=False with a "marginal"
    diagnostic instead of guessing.
    """
    window = _check_window(sys, interval, window)
    d = sys.dim
    table = coeff_table(sys, window)
    diag: dict = {"window": (window.t_minus, window.t_plus)}
    general = isinstance(sys.structure, General)

    if general:
        k, m, consistent, rate_floor, ell = _sliding_split(table, gap_tol)
        diag.update(heuristic=True, split_counts=(k, m), split_window=ell)
        if not consistent or k + m != d:
            diag["marginal"] = True
            diag["reason"] = "no uniform singular-value splitting"
            return DichotomyReport(interval, False, -1, None, None, None, diag)
        off = window.t_minus
        # anchors estimated from the outermost sliding blocks: right-singular
        # directions of the last block annihilate the decaying bundle, left-
        # singular directions of the first block span the growing one
        Mr = np.eye(d)
        for j in range(window.t_plus - ell - off, window.t_plus - off):
            Mr = table[j] @ Mr
        _, _, Vt = np.linalg.svd(Mr)
        B_anchor = Vt[:m]
        Ml = np.eye(d)
        for j in range(0, ell):
            Ml = table[j] @ Ml
        Ul, _, _ = np.linalg.svd(Ml)
        U_anchor = Ul[:, :m]
        rank_plus = k
        rank_minus_kernel = m
    else:
        lim_p, per_p = _limit_data(sys, "plus")
        lim_m, per_m = _limit_data(sys, "minus")
        mono_p = _monodromy(lim_p, per_p, window.t_plus % per_p, d)
        mono_m = _monodromy(lim_m, per_m, ((window.t_minus % per_m) + per_m) % per_m, d)
        rates_p = _floquet_rates(_monodromy(lim_p, per_p, 0, d), per_p)
        rates_m = _floquet_rates(_monodromy(lim_m, per_m, 0, d), per_m)
        rel = rates_p if interval == "Z_plus" else rates_m if interval == "Z_minus" else np.concatenate([rates_p, rates_m])
        margin = float(np.min(np.abs(rel - 1.0))) if rel.size else np.inf
        diag["unit_circle_margin"] = margin
        if isinstance(sys.structure, AsymPeriodic):
            diag["limit_mismatch"] = (
                _mat_norm(sys.matrix(window.t_minus) - np.asarray(lim_m(window.t_minus))),
                _mat_norm(sys.matrix(window.t_plus) - np.asarray(lim_p(window.t_plus))),
            )
        if margin <= tol:
            diag["marginal"] = True
            diag["reason"] = "Floquet rate within tol of the unit circle"
            return DichotomyReport(interval, False, -1, None, None, None, diag)

        if interval == "Z_plus":
            B_anchor = _annihilator_rows(_stable_basis(mono_p), d)
            U_anchor = _unstable_basis(_monodromy(lim_p, per_p, 0, d))
        elif interval == "Z_minus":
            B_anchor = _annihilator_rows(_stable_basis(_monodromy(lim_m, per_m, 0, d)), d)
            U_anchor = _unstable_basis(mono_m)
        else:
            B_anchor = _annihilator_rows(_stable_basis(mono_p), d)
            U_anchor = _unstable_basis(mono_m)
        rank_plus = d - B_anchor.shape[0]
        rank_minus_kernel = U_anchor.shape[1]
        stab = rel[rel < 1.0]
        unst = rel[rel > 1.0]
        rate_floor = 0.0
        if stab.size:
            rate_floor = max(rate_floor, float(np.max(stab)))
        if unst.size:
            rate_floor = max(rate_floor, float(1.0 / np.min(unst)))
        rate_floor = rate_floor or 0.5

    a_s = window.t_plus if not general else window.t_plus - diag["split_window"]
    a_u = window.t_minus if not general else window.t_minus + diag["split_window"]
    bundles = _build_bundles(table, window, B_anchor, a_s, U_anchor, a_u)
    diag["transversality"] = bundles.min_angle

    if interval == "Z":
        # on the whole axis the two canonical bundles must split the space
        if rank_plus + rank_minus_kernel != d or not bundles.rank_ok:
            diag["reason"] = "stable and kernel bundle ranks do not split R^d"
            return DichotomyReport(interval, False, -1, None, None, None, diag)
        if bundles.min_angle <= angle_tol:
            diag["marginal"] = bundles.min_angle > 0
            diag["reason"] = "stable and kernel bundles are not transversal"
            return DichotomyReport(interval, False, -1, None, None, None, diag)
        rank = rank_plus
    else:
        # half axis: the dichotomy follows from limit hyperbolicity; if the
        # default complement degenerates on the window, re-anchor it
        if not bundles.rank_ok:
            diag["reason"] = "bundle rank collapsed along the window"
            return DichotomyReport(interval, False, -1, None, None, None, diag)
        if bundles.min_angle <= angle_tol:
            sub = bundles.window
            if interval == "Z_plus":
                S0 = bundles.stable_basis(sub.t_minus)
                U_anchor = _null_of_rows(S0.T, d)[:, : d - S0.shape[1]]
                bundles = _build_bundles(table, window, B_anchor, a_s, U_anchor, a_u)
            else:
                Uend = bundles.unstable_basis(sub.t_plus)
                B_anchor = Uend.T
                bundles = _build_bundles(table, window, B_anchor, a_s, U_anchor, a_u)
            diag["complement_reanchored"] = True
            diag["transversality"] = bundles.min_angle
            if bundles.min_angle <= angle_tol:
                diag["reason"] = "no transversal complement found on the window"
                return DichotomyReport(interval, False, -1, None, None, None, diag)
        rank = d - rank_minus_kernel if interval == "Z_minus" else rank_plus

    P0 = bundles.projector(0)
    K = alpha = None
    if fit_constants:
        K, alpha, fit_diag = _fit_constants(table, window, bundles, rate_floor, k_cap)
        diag.update(fit_diag)
    return DichotomyReport(interval, True, rank, P0, K, alpha, diag, data=bundles)


def _has_ed(sys: LinearSystem, interval: str, window: Window, tol: float) -> bool:
    return detect_dichotomy(sys, interval, window, tol=tol, fit_constants=False).has_ed


# ---------------------------------------------------------------------------
# spectrum


def _default_gamma_range(sys: LinearSystem, window: Window) -> tuple[float, float]:
    svs = []
    for t in _subsample(window.indices(), 16):
        sv = np.linalg.svd(sys.matrix(int(t)), compute_uv=False)
        svs.extend(sv.tolist())
    smax = max(svs) if svs else 1.0
    smin = min(svs) if svs else 0.1
    lo = max(smin / 2.0, 1e-8)
    hi = max(2.0 * smax, 2.0 * lo)
    return lo, hi


def _refine_boundary(probe, lo, hi, lo_val, hi_val, width):
    """Bisect between a probe with ED and one without, down to `width`."""
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        if probe(mid) == lo_val:
            lo = mid
        else:
            hi = mid
    return lo, hi


def _merge_intervals(intervals: list[tuple[float, float]], gap: float) -> list[tuple[float, float]]:
    out: list[tuple[float, float]] = []
    for lo, hi in sorted(intervals):
        if out and lo - out[-1][1] <= gap:
            out[-1] = (out[-1][0], max(out[-1][1], hi))
        else:
            out.append((lo, hi))
    return out


def dichotomy_spectrum(
    sys: LinearSystem,
    interval: str = "Z",
    gamma_range: tuple[float, float] | None = None,
    resolution: float = 1e-4,
    window: Window | None = None,
    tol: float = DEFAULT_TOL,
    scan_points: int = 257,
) -> SpectrumReport:
    """Set of gamma > 0 for which the gamma-scaled system has no dichotomy.

    Autonomous/periodic systems (and the half axes of asymptotically periodic
    systems) are resolved exactly through Floquet multiplier moduli; otherwise
    scan probes with bisection refinement locate interval boundaries to width
    <= resolution.  Intervals closer than `resolution` are merged.
    """
    window = _check_window(sys, interval, window)
    if gamma_range is None:
        gamma_range = _default_gamma_range(sys, window)
    lo, hi = map(float, gamma_range)
    if not (0.0 < lo < hi):
        raise ValueError(f"need 0 < gamma_min < gamma_max, got {gamma_range}")
    st = sys.structure
    d = sys.dim
    diag: dict = {}

    if isinstance(st, (Autonomous, Periodic)):
        pts = _floquet_points(_monodromy(sys.coeff, st.period, 0, d), st.period)
        intervals = [(p, p) for p in pts if lo <= p <= hi]
        method = "floquet"
    elif isinstance(st, AsymPeriodic):
        pts_p = _floquet_points(_monodromy(st.limit_plus, st.period_plus, 0, d), st.period_plus)
        pts_m = _floquet_points(_monodromy(st.limit_minus, st.period_minus, 0, d), st.period_minus)
        if interval == "Z_plus":
            pts = pts_p
            intervals = [(p, p) for p in pts if lo <= p <= hi]
            method = "floquet"
        elif interval == "Z_minus":
            pts = pts_m
            intervals = [(p, p) for p in pts if lo <= p <= hi]
            method = "floquet"
        else:
            seeds = sorted(set(pts_p) | set(pts_m))
            intervals = _scan_spectrum(
                sys, interval, window, lo, hi, resolution, tol, scan_points, seeds, diag
            )
            method = "floquet+scan"
    else:
        intervals = _scan_spectrum(
            sys, interval, window, lo, hi, resolution, tol, scan_points, [], diag
        )
        method = "scan"
        diag["heuristic"] = True

    intervals = _merge_intervals(intervals, resolution)
    while len(intervals) > d:
        gaps = [intervals[j + 1][0] - intervals[j][1] for j in range(len(intervals) - 1)]
        j = int(np.argmin(gaps))
        intervals = _merge_intervals(intervals, gaps[j] + 1e-300)
        diag["forced_merge"] = True
    warning = None
    if not intervals:
        warning = f"no spectrum found in gamma range [{lo}, {hi}]"
    return SpectrumReport(interval, intervals, warning, method, diag)


def _scan_spectrum(sys, interval, window, lo, hi, resolution, tol, scan_points, seeds, diag):
    probe_cache: dict[float, bool] = {}

    def probe(g: float) -> bool:
        if g not in probe_cache:
            probe_cache[g] = _has_ed(scale(sys, g), interval, window, tol)
        return probe_cache[g]

    grid = list(np.geomspace(lo, hi, scan_points))
    for s in seeds:
        if lo <= s <= hi:
            # bracket each known point so adjacent intervals are separated
            grid.extend([max(lo, s * (1 - 4 * resolution)), min(hi, s * (1 + 4 * resolution))])
    grid = sorted(set(float(g) for g in grid))
    flags = [probe(g) for g in grid]
    diag["probes"] = len(grid)

    intervals: list[tuple[float, float]] = [(s, s) for s in seeds if lo <= s <= hi]
    j = 0
    n = len(grid)
    while j < n:
        if flags[j]:
            j += 1
            continue
        j0 = j
        while j < n and not flags[j]:
            j += 1
        left = grid[j0]
        if j0 > 0:
            _, left = _refine_boundary(probe, grid[j0 - 1], grid[j0], True, False, resolution / 4)
        right = grid[j - 1]
        if j < n:
            right, _ = _refine_boundary(probe, grid[j - 1], grid[j], False, True, resolution / 4)
        else:
            diag["touches_range_end"] = True
        intervals.append((left, right))
    return intervals


# ---------------------------------------------------------------------------
# Fredholm index


def fredholm_index(
    sys: LinearSystem,
    window: Window | None = None,
    tol: float = DEFAULT_TOL,
) -> tuple[int, tuple[DichotomyReport, DichotomyReport]]:
    """rk P_0^+ - rk P_0^-, from the half-axis dichotomy projectors."""
    if window is None:
        window = default_window(sys, "Z")
    win_p = Window(0, max(window.t_plus, 3))
    win_m = Window(min(window.t_minus, -3), 0)
    rep_p = detect_dichotomy(sys, "Z_plus", win_p, tol=tol)
    if not rep_p.has_ed:
        raise NotFredholmError(
            "Z_plus", "not Fredholm-checkable: no exponential dichotomy on Z_plus"
        )
    rep_m = detect_dichotomy(sys, "Z_minus", win_m, tol=tol)
    if not rep_m.has_ed:
        raise NotFredholmError(
            "Z_minus", "not Fredholm-checkable: no exponential dichotomy on Z_minus"
        )
    return rep_p.projector_rank - rep_m.projector_rank, (rep_p, rep_m)
