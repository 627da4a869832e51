"""Finite-window representations of two-sided sequences with limit zero.

A state of the engine is a sequence of vectors in R^d indexed by the
integers and decaying to zero in both time directions.  Numerically such a
sequence is truncated to a window [t_minus, t_plus]; outside the window the
implied extension is zero.  The fixed vector norm on R^d is the max-norm,
so the sequence norm is simply the largest absolute entry on the window and
the norm of a product pair (phi, lambda) is the larger of the two norms.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = [
    "Window",
    "TruncatedSequence",
    "DecayEnvelope",
    "EnvelopeCheck",
    "sup_norm",
    "shift",
    "check_envelope",
    "zeros",
    "from_values",
    "embed",
    "write_csv",
    "read_csv",
]


@dataclass(frozen=True)
class Window:
    """Discrete interval [t_minus, t_plus], both ends inclusive."""

    t_minus: int
    t_plus: int

    def __post_init__(self):
        if not (int(self.t_minus) == self.t_minus and int(self.t_plus) == self.t_plus):
            raise ValueError("window ends must be integers")
        if self.t_minus >= self.t_plus:
            raise ValueError(f"need t_minus < t_plus, got [{self.t_minus}, {self.t_plus}]")
        if self.length < 3:
            raise ValueError(f"window length must be >= 3, got {self.length}")

    @property
    def length(self) -> int:
        return self.t_plus - self.t_minus + 1

    def indices(self) -> np.ndarray:
        return np.arange(self.t_minus, self.t_plus + 1)

    def contains(self, t: int) -> bool:
        return self.t_minus <= t <= self.t_plus

    def offset(self, t: int) -> int:
        """Array position of time index t."""
        if not self.contains(t):
            raise IndexError(f"time {t} outside window [{self.t_minus}, {self.t_plus}]")
        return t - self.t_minus

    def union(self, other: "Window") -> "Window":
        return Window(min(self.t_minus, other.t_minus), max(self.t_plus, other.t_plus))

    def grow(self, factor: float) -> "Window":
        """Enlarge both half-widths by `factor` (at least one index each side)."""
        lo = -self.t_minus
        hi = self.t_plus
        new_lo = max(int(np.ceil(lo * factor)), lo + 1)
        new_hi = max(int(np.ceil(hi * factor)), hi + 1)
        return Window(-new_lo, new_hi)


@dataclass(frozen=True)
class TruncatedSequence:
    """Block of d-vectors on a window, standing in for a decaying sequence.

    `values` has shape (window.length, d) and is made read-only; entries must
    be finite.
    """

    window: Window
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.ndim != 2 or vals.shape[0] != self.window.length:
            raise ValueError(
                f"values shape {vals.shape} incompatible with window length {self.window.length}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("sequence entries must be finite")
        vals = vals.copy()
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def at(self, t: int) -> np.ndarray:
        """Value at time t; zero outside the window (the implied extension)."""
        if self.window.contains(t):
            return self.values[self.window.offset(t)]
        return np.zeros(self.dim)

    def with_values(self, values: np.ndarray) -> "TruncatedSequence":
        return TruncatedSequence(self.window, values)


class EnvelopeCheck(NamedTuple):
    ok: bool
    first_violation: int | None


@dataclass(frozen=True)
class DecayEnvelope:
    """Geometric envelope t -> constant * rate**|t| with rate in (0, 1)."""

    constant: float
    rate: float

    def __post_init__(self):
        if self.constant < 0:
            raise ValueError("envelope constant must be nonnegative")
        if not (0.0 < self.rate < 1.0):
            raise ValueError("envelope rate must lie in (0, 1)")

    def bound_at(self, t) -> np.ndarray:
        return self.constant * self.rate ** np.abs(np.asarray(t, dtype=float))


def sup_norm(phi: TruncatedSequence) -> float:
    """Largest max-norm of any entry on the window."""
    return float(np.max(np.abs(phi.values)))


def shift(phi: TruncatedSequence, l: int) -> TruncatedSequence:
    """Left shift by l: result at time t holds the old value at t + l.

    The value block is unchanged, only the window moves; the sup-norm is
    therefore preserved exactly.
    """
    return TruncatedSequence(
        Window(phi.window.t_minus - l, phi.window.t_plus - l), phi.values
    )


def check_envelope(phi: TruncatedSequence, env: DecayEnvelope) -> EnvelopeCheck:
    """Check |phi_t| <= constant * rate**|t| on the whole window.

    On failure reports the violating time of smallest |t| (negative index
    first on a tie).
    """
    ts = phi.window.indices()
    mags = np.max(np.abs(phi.values), axis=1)
    bad = mags > env.bound_at(ts)
    if not np.any(bad):
        return EnvelopeCheck(True, None)
    bad_ts = ts[bad]
    order = np.lexsort((bad_ts, np.abs(bad_ts)))
    return EnvelopeCheck(False, int(bad_ts[order[0]]))


def zeros(window: Window, dim: int) -> TruncatedSequence:
    return TruncatedSequence(window, np.zeros((window.length, dim)))


def from_values(t_minus: int, values) -> TruncatedSequence:
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    return TruncatedSequence(Window(t_minus, t_minus + n - 1), values)


def embed(phi: TruncatedSequence, window: Window) -> TruncatedSequence:
    """Re-truncate to `window`, extending by zero where needed."""
    out = np.zeros((window.length, phi.dim))
    lo = max(window.t_minus, phi.window.t_minus)
    hi = min(window.t_plus, phi.window.t_plus)
    if lo <= hi:
        out[lo - window.t_minus : hi - window.t_minus + 1] = phi.values[
            lo - phi.window.t_minus : hi - phi.window.t_minus + 1
        ]
    return TruncatedSequence(window, out)


def product_norm(phi: TruncatedSequence, lam: float) -> float:
    """Max of the sequence sup-norm and |lambda| (product-space convention)."""
    return max(sup_norm(phi), abs(float(lam)))


def product_distance(
    phi_a: TruncatedSequence, lam_a: float, phi_b: TruncatedSequence, lam_b: float
) -> float:
    """Product-norm distance; sequences are compared after zero-extension."""
    w = phi_a.window.union(phi_b.window)
    diff = embed(phi_a, w).values - embed(phi_b, w).values
    d = float(np.max(np.abs(diff))) if diff.size else 0.0
    return max(d, abs(float(lam_a) - float(lam_b)))


def write_csv(phi: TruncatedSequence, path) -> None:
    """Serialize as CSV with header t,x1,...,xd, one row per time index."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"x{i + 1}" for i in range(phi.dim)])
        for t, row in zip(phi.window.indices(), phi.values):
            writer.writerow([int(t)] + [repr(float(v)) for v in row])


def read_csv(path) -> TruncatedSequence:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "t" or len(header) < 2:
            raise ValueError(f"bad sequence CSV header: {header}")
        ts: list[int] = []
        rows: list[list[float]] = []
        for rec in reader:
            if not rec:
                continue
            ts.append(int(rec[0]))
            rows.append([float(v) for v in rec[1:]])
    if len(ts) < 3:
        raise ValueError("sequence CSV needs at least 3 rows")
    if any(b - a != 1 for a, b in zip(ts, ts[1:])):
        raise ValueError("sequence CSV rows must have consecutive, increasing t")
    return from_values(ts[0], np.array(rows))
