"""Sparse local-time fields and their q-norms, truncations and level sets.

A field maps visited sites to visit counts over a time window of length
n (counting positions S(0), ..., S(n-1)), so counts always sum to n.
Fields are immutable once built and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import PathwiseInvariantError
from .lattice import IncrementSequence, positions

# Largest q-norm bound n^q still evaluated in vectorized int64; beyond,
# exact evaluation falls back to Python integers.
_INT64_SAFE = 2**62


def _point_keys(pts: np.ndarray) -> np.ndarray:
    """Injective scalar keys for lattice points (mixed-radix over the bounding box).

    Falls back to Python-int keys when the box exceeds the int64 range;
    exactness is never sacrificed.
    """
    if pts.shape[0] == 0:
        return np.empty(0, dtype=np.int64)
    mins = pts.min(axis=0)
    spans = (pts.max(axis=0) - mins + 1).astype(object)
    cap = 1
    for s in spans:
        cap *= int(s)
    shifted = pts - mins
    d = pts.shape[1]
    if cap < 2**63:
        radix = np.ones(d, dtype=np.int64)
        for j in range(1, d):
            radix[j] = radix[j - 1] * int(spans[j - 1])
        return shifted @ radix
    radix = np.ones(d, dtype=object)
    for j in range(1, d):
        radix[j] = radix[j - 1] * int(spans[j - 1])
    return shifted.astype(object) @ radix


@dataclass(frozen=True, eq=False)
class LocalTimeField:
    """Visit counts of a walk over its time window.

    ``sites`` rows are unique lattice points ordered by an internal
    packing key; ``counts`` are the matching positive visit counts and
    sum to the window length ``n``.
    """

    d: int
    n: int
    sites: np.ndarray  # (m, d) int64
    counts: np.ndarray  # (m,) int64, all >= 1

    def __post_init__(self):
        if self.counts.size and int(self.counts.min()) < 1:
            raise ValueError("zero or negative count stored in field")
        if int(self.counts.sum()) != self.n:
            raise ValueError("field mass does not equal window length")

    @property
    def mass(self) -> int:
        return self.n

    def __len__(self) -> int:
        return int(self.counts.size)

    def as_dict(self) -> dict[tuple[int, ...], int]:
        return {tuple(int(x) for x in s): int(c) for s, c in zip(self.sites, self.counts)}


def field_from_points(pts: np.ndarray, d: int) -> LocalTimeField:
    """Field counting the rows of ``pts`` (one time unit per row)."""
    pts = np.asarray(pts, dtype=np.int64).reshape(-1, d)
    keys = _point_keys(pts)
    _, first, counts = np.unique(keys, return_index=True, return_counts=True)
    return LocalTimeField(d, pts.shape[0], pts[first], counts.astype(np.int64))


def field_from_dict(d: int, mapping: dict) -> LocalTimeField:
    """Build a field from a {site tuple: count} mapping (mainly for tests)."""
    sites = np.array(sorted(mapping), dtype=np.int64).reshape(len(mapping), d)
    counts = np.array([mapping[tuple(s)] for s in sites], dtype=np.int64)
    return LocalTimeField(d, int(counts.sum()), sites, counts)


def accumulate(inc: IncrementSequence) -> LocalTimeField:
    """Local-time field of the walk: counts of S(0), ..., S(n-1)."""
    pos = positions(inc)
    return field_from_points(pos[: inc.n], inc.d)


def visit_counts(inc: IncrementSequence) -> np.ndarray:
    """Just the count multiset of ``accumulate`` (fast path for estimators)."""
    pos = positions(inc)[: inc.n]
    keys = _point_keys(pos)
    _, counts = np.unique(keys, return_counts=True)
    return counts.astype(np.int64)


def _is_integral(q) -> bool:
    return isinstance(q, (int, np.integer)) or (isinstance(q, float) and q.is_integer())


def qnorm_of_counts(counts: np.ndarray, q, exact: bool | None = None):
    """Sum of counts**q; exact Python integer for integral q, float otherwise."""
    if exact is None:
        exact = _is_integral(q)
    if counts.size == 0:
        return 0 if exact else 0.0
    if exact:
        qi = int(q)
        top = int(counts.max())
        if top**qi * counts.size < _INT64_SAFE and counts.dtype == np.int64:
            return int(np.sum(counts**qi))
        return sum(int(c) ** qi for c in counts)
    return math.fsum(np.asarray(counts, dtype=np.float64) ** float(q))


def q_norm(field: LocalTimeField, q):
    """The q-norm sum over sites of count(z)**q.

    Exact (arbitrary-precision integer) when q is a positive integer;
    compensated floating point otherwise.
    """
    if q < 1:
        raise ValueError("q must be >= 1")
    return qnorm_of_counts(field.counts, q)


def truncated_q_norm(field: LocalTimeField, q, M):
    """q-norm with counts above the cutoff M contributing zero."""
    if q < 1:
        raise ValueError("q must be >= 1")
    if M <= 0:
        raise ValueError("truncation level M must be positive")
    kept = field.counts[field.counts <= M]
    return qnorm_of_counts(kept, q)


def restricted_q_norm(field: LocalTimeField, q, predicate):
    """q-norm restricted to sites whose count satisfies ``predicate``.

    ``predicate`` maps an int64 count array to a boolean mask, e.g.
    ``lambda c: c > 5`` or ``lambda c: (3 <= c) & (c < 10)``.
    """
    if q < 1:
        raise ValueError("q must be >= 1")
    mask = np.asarray(predicate(field.counts), dtype=bool)
    return qnorm_of_counts(field.counts[mask], q)


def range_size(field: LocalTimeField) -> int:
    """Number of distinct visited sites |R_n|."""
    return len(field)


@dataclass(frozen=True, eq=False)
class LevelSet:
    """Sites whose count lies in the half-open band [b_lo, b_hi)."""

    sites: np.ndarray  # (k, d) int64
    b_lo: float
    b_hi: float
    field: LocalTimeField

    def __post_init__(self):
        # pathwise mass bound: every member carries at least b_lo of the mass
        if len(self.sites) * max(self.b_lo, 0.0) > self.field.n:
            raise PathwiseInvariantError("level set violates |D| * b_lo <= n")

    def __len__(self) -> int:
        return int(self.sites.shape[0])


def level_set(field: LocalTimeField, b_lo, b_hi) -> LevelSet:
    """Sites with b_lo <= count < b_hi (exact integer-vs-real comparison)."""
    if not 1 <= b_lo < b_hi:
        raise ValueError("need 1 <= b_lo < b_hi")
    mask = (field.counts >= b_lo) & (field.counts < b_hi)
    return LevelSet(field.sites[mask], float(b_lo), float(b_hi), field)


def field_to_csv(field: LocalTimeField, path) -> None:
    """Dump a field as CSV rows x1,...,xd,count (in stored site order)."""
    header = ",".join(f"x{j + 1}" for j in range(field.d)) + ",count"
    lines = [header]
    for s, c in zip(field.sites, field.counts):
        lines.append(",".join(str(int(x)) for x in s) + f",{int(c)}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_field_csv(path, n: int | None = None) -> LocalTimeField:
    """Read back a ``field_to_csv`` dump."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        d = len(header) - 1
        rows = [line.strip().split(",") for line in fh if line.strip()]
    sites = np.array([[int(x) for x in r[:d]] for r in rows], dtype=np.int64).reshape(len(rows), d)
    counts = np.array([int(r[d]) for r in rows], dtype=np.int64)
    return LocalTimeField(d, int(counts.sum()) if n is None else n, sites, counts)


def holder_lower_bound(n: int, r: int, q) -> float:
    """The pathwise Holder floor n**q / r**(q-1) for a walk of range r."""
    if _is_integral(q):
        return n ** int(q) / r ** (int(q) - 1)
    return float(n) ** float(q) / float(r) ** (float(q) - 1.0)


def audit_counts(counts: np.ndarray, n: int, q=2.0, context: str = "") -> None:
    """Assert the pathwise invariants of a count multiset.

    Checks mass, the Holder bound q_norm >= n^q / |R|^(q-1), and for the
    power-of-two ladder the level bounds |D_i| b_i <= n and
    |D_i| b_i^q <= q_norm.  Raises PathwiseInvariantError on violation.
    """
    if n == 0:
        return
    where = f" [{context}]" if context else ""
    if int(counts.sum()) != n:
        raise PathwiseInvariantError(f"mass violated: sum(l) != n{where}")
    r = int(counts.size)
    if _is_integral(q):
        qi = int(q)
        qn = qnorm_of_counts(counts, qi)
        if qn * r ** (qi - 1) < n**qi:
            raise PathwiseInvariantError(f"Holder bound violated{where}")
    else:
        qn = float(np.sum(counts.astype(np.float64) ** float(q)))
        if qn < holder_lower_bound(n, r, q) * (1 - 1e-12):
            raise PathwiseInvariantError(f"Holder bound violated{where}")
    # dyadic level bounds
    lev = np.frexp(counts.astype(np.float64))[1] - 1  # floor(log2 count)
    sizes = np.bincount(lev)
    b = 2.0 ** np.arange(sizes.size)
    if np.any(sizes * b > n):
        raise PathwiseInvariantError(f"level mass bound |D_i| b_i <= n violated{where}")
    if np.any(sizes * b ** float(q) > float(qn) * (1 + 1e-12)):
        raise PathwiseInvariantError(f"level volume bound |D_i| b_i^q <= q_norm violated{where}")
