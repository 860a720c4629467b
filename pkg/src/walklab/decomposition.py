"""Strand decomposition of a walk and pathwise sandwich verification.

A walk of length n is split recursively at quasi-dyadic time points into
2^L strands.  Each strand over window [a, b) split from its parent at
time m is stored in its own origin-centered frame: it counts the values
S(m) - S(k) for k in its window, so both children of a split share the
anchor S(m) and add pointwise to (a translate of) their parent.  The
elementary power inequality then sandwiches the q-norm between the sum
of strand q-norms and that sum plus nonnegative cross-strand
intersection terms, one per split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .analytic import Subdivision
from .errors import CoverageError, SandwichViolation
from .lattice import IncrementSequence, positions
from .local_times import (
    LocalTimeField,
    _is_integral,
    _point_keys,
    accumulate,
    field_from_points,
    qnorm_of_counts,
)

_INT64_SAFE = 2**62


@dataclass(frozen=True, eq=False)
class DyadicSplit:
    """An almost-dyadic split of n into 2^depth near-equal parts."""

    n: int
    depth: int
    parts: np.ndarray  # (2^depth,) int64

    def __post_init__(self):
        p = self.parts
        if int(p.sum()) != self.n:
            raise ValueError("parts must sum to n")
        if int(p.max()) - int(p.min()) > 1:
            raise ValueError("parts must differ by at most 1")
        ratio = self.n / 2**self.depth
        if int(p.min()) < ratio - 1 or int(p.max()) > ratio + 1:
            raise ValueError("parts must lie within n/2^l +- 1")


def quasi_dyadic_split(n: int, depth: int) -> DyadicSplit:
    """Split n into 2^depth parts by the ceil-first rule m -> (ceil(m/2), floor(m/2)).

    The rule preserves nesting: the depth-(l-1) parts are pairwise sums
    of the depth-l parts.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    if 2**depth > n:
        raise ValueError(f"2^depth = {2 ** depth} exceeds n = {n}")
    parts = [n]
    for _ in range(depth):
        parts = [piece for m in parts for piece in ((m + 1) // 2, m // 2)]
    return DyadicSplit(n, depth, np.array(parts, dtype=np.int64))


def split_strands(inc: IncrementSequence, n1: int) -> tuple[LocalTimeField, LocalTimeField]:
    """Split a walk at time n1 into two strands anchored at S(n1).

    Strand 1 counts S(n1) - S(k) for k in [0, n1); strand 2 counts
    S(n1) - S(k) for k in [n1, n).  Pointwise, l_n(z) equals
    strand1(S(n1) - z) + strand2(S(n1) - z) for every site z.
    """
    n = inc.n
    if not 0 < n1 < n:
        raise ValueError("split point must lie strictly inside the window")
    pos = positions(inc)
    anchor = pos[n1]
    s1 = field_from_points(anchor - pos[:n1], inc.d)
    s2 = field_from_points(anchor - pos[n1:n], inc.d)
    return s1, s2


def reconstruction_holds(inc: IncrementSequence, n1: int) -> bool:
    """Exact site-by-site check of the split identity at n1."""
    s1, s2 = split_strands(inc, n1)
    anchor = positions(inc)[n1]
    combined: dict[tuple, int] = {}
    for f in (s1, s2):
        for w, c in f.as_dict().items():
            z = tuple(int(a) - int(x) for a, x in zip(anchor, w))
            combined[z] = combined.get(z, 0) + c
    return combined == accumulate(inc).as_dict()


def _displacement_keys(pos: np.ndarray):
    """Keys g with g[t] - g[k] an injective encoding of S(t) - S(k).

    Uses balanced mixed radix over the path's bounding box; falls back
    to Python-int keys when the box exceeds the int64 range.
    """
    d = pos.shape[1]
    mins = pos.min(axis=0)
    spans = (pos.max(axis=0) - mins).astype(np.int64)
    cap = 1
    for s in spans:
        cap *= 2 * int(s) + 1
    if cap < 2**63:
        radix = np.ones(d, dtype=np.int64)
        for j in range(1, d):
            radix[j] = radix[j - 1] * (2 * int(spans[j - 1]) + 1)
        return (pos - mins) @ radix, spans, False
    radix = np.ones(d, dtype=object)
    for j in range(1, d):
        radix[j] = radix[j - 1] * (2 * int(spans[j - 1]) + 1)
    return (pos - mins).astype(object) @ radix, spans, True


def _decode_displacements(keys: np.ndarray, spans: np.ndarray, d: int) -> np.ndarray:
    out = np.empty((keys.size, d), dtype=np.int64)
    k = keys.copy()
    for j in range(d):
        mod = 2 * int(spans[j]) + 1
        r = (k + spans[j]) % mod - spans[j]  # balanced residue
        out[:, j] = r.astype(np.int64)
        k = (k - r) // mod
    return out


def _match_common(keys_a, counts_a, keys_b, counts_b, is_object: bool):
    """Counts (a, b) on the shared sites of two keyed fields."""
    if is_object:
        lookup = {int(k): int(c) for k, c in zip(keys_a, counts_a)}
        pa, pb = [], []
        for k, c in zip(keys_b, counts_b):
            ca = lookup.get(int(k))
            if ca is not None:
                pa.append(ca)
                pb.append(int(c))
        return np.array(pa, dtype=np.int64), np.array(pb, dtype=np.int64)
    _, ia, ib = np.intersect1d(keys_a, keys_b, assume_unique=True, return_indices=True)
    return counts_a[ia], counts_b[ib]


class StrandTree:
    """The depth-L strand decomposition of one walk.

    Depth j holds 2^j strands; window lengths at each depth follow the
    quasi-dyadic split and sum to n.  Internally strands are kept as
    keyed count arrays; ``fields`` materializes them as LocalTimeFields
    in their own frames (depth 0 is the plain local-time field).
    """

    def __init__(self, inc: IncrementSequence, depth: int):
        n = inc.n
        if depth < 0:
            raise ValueError("depth must be nonnegative")
        if n < 1 or 2**depth > n:
            raise ValueError(f"need 2^L <= n (got L={depth}, n={n})")
        self.inc = inc
        self.depth = depth
        self.d = inc.d
        self.n = n
        self.split = quasi_dyadic_split(n, depth)
        pos = positions(inc)
        self._g, self._spans, self._is_object = _displacement_keys(pos)
        windows = [[(0, n, 0)]]
        for _ in range(depth):
            nxt = []
            for a, b, _anc in windows[-1]:
                m = a + (b - a + 1) // 2
                nxt.append((a, m, m))
                nxt.append((m, b, m))
            windows.append(nxt)
        self._windows = windows
        self._keyed: dict[int, list] = {}
        self._matched: list | None = None

    def windows(self, depth: int):
        return list(self._windows[depth])

    def keyed_fields(self, depth: int):
        """[(sorted keys, counts)] for the strands at ``depth``."""
        if depth not in self._keyed:
            g = self._g
            row = []
            for a, b, anc in self._windows[depth]:
                keys, counts = np.unique(g[anc] - g[a:b], return_counts=True)
                row.append((keys, counts.astype(np.int64)))
            self._keyed[depth] = row
        return self._keyed[depth]

    def fields(self, depth: int) -> list[LocalTimeField]:
        """Strand fields at ``depth`` in their own origin-centered frames."""
        if depth == 0:
            return [accumulate(self.inc)]
        out = []
        for (keys, counts), (a, b, _anc) in zip(self.keyed_fields(depth), self._windows[depth]):
            if self._is_object:
                sites = _decode_displacements(keys.astype(object), self._spans, self.d)
            else:
                sites = _decode_displacements(keys, self._spans, self.d)
            out.append(LocalTimeField(self.d, b - a, sites, counts))
        return out

    def matched_pairs(self):
        """Per split level j=1..depth: [(counts_a, counts_b, max_count)] of sibling pairs."""
        if self._matched is None:
            levels = []
            for j in range(1, self.depth + 1):
                row = self.keyed_fields(j)
                pairs = []
                for p in range(len(row) // 2):
                    ka, ca = row[2 * p]
                    kb, cb = row[2 * p + 1]
                    a, b = _match_common(ka, ca, kb, cb, self._is_object)
                    pairs.append((a, b, np.maximum(a, b)))
                levels.append(pairs)
            self._matched = levels
        return self._matched


def build_strand_tree(inc: IncrementSequence, depth: int) -> StrandTree:
    """Recursively split a walk into 2^depth strands at quasi-dyadic points."""
    return StrandTree(inc, depth)


@dataclass(frozen=True)
class SandwichReport:
    """Result of one sandwich verification.

    ``terms[j-1]`` is the intersection term of split level j; the upper
    bound is ``lower + sum(terms)``.  ``two_sided`` is False only for
    truncated runs with an active cutoff, where the strand sum bounds
    the truncated q-norm from above only.
    """

    q: float
    depth: int
    lower: object
    value: object
    terms: tuple
    upper: object
    label: str | None = None
    mode: str = "float"
    truncation: float | None = None
    two_sided: bool = True

    def holds(self, rtol: float = 1e-9) -> bool:
        if self.mode == "exact":
            upper_ok = self.value <= self.upper
            lower_ok = self.lower <= self.value
        else:
            tol = rtol * max(abs(float(self.value)), abs(float(self.upper)), 1.0)
            upper_ok = float(self.value) <= float(self.upper) + tol
            lower_ok = float(self.lower) <= float(self.value) + tol
        return upper_ok and (lower_ok or not self.two_sided)

    def to_json_dict(self) -> dict:
        return {
            "q": self.q,
            "L": self.depth,
            "lower": float(self.lower),
            "value": float(self.value),
            "terms": [float(t) for t in self.terms],
            "upper": float(self.upper),
            "seed": self.label,
        }


def _qnorm_fast(counts: np.ndarray, q, exact: bool):
    """np.sum-based q-norm for the verifier (exact path identical to qnorm_of_counts)."""
    if exact:
        return qnorm_of_counts(counts, q, exact=True)
    if counts.size == 0:
        return 0.0
    return float(np.sum(counts.astype(np.float64) ** float(q)))


def _pair_term(a, b, mx, sub: Subdivision, q, exact: bool, allow_above: bool):
    """2^q sum_z b_{cell(max)+1}^(q-2) a(z) b(z) over matched sites."""
    if a.size == 0:
        return 0 if exact else 0.0
    levels = sub.levels
    if allow_above:
        keep = mx < levels[-1]
        a, b, mx = a[keep], b[keep], mx[keep]
        if a.size == 0:
            return 0 if exact else 0.0
    cell = np.searchsorted(levels, mx, side="right") - 1
    if cell.min() < 0 or (not allow_above and mx.max() >= levels[-1]):
        raise CoverageError(
            f"subdivision [{levels[0]}, {levels[-1]}) does not cover count {int(mx.max())}"
        )
    if exact:
        qi = int(q)
        bup = sub.int_levels[cell + 1]
        site_bound = 2**qi * int(bup.max()) ** (qi - 2) * int(a.max()) * int(b.max())
        if site_bound * a.size < _INT64_SAFE:
            return 2**qi * int(np.sum(bup ** (qi - 2) * a * b))
        w = bup.astype(object) ** (qi - 2)
        return 2**qi * int(np.sum(w * a.astype(object) * b.astype(object)))
    bup = levels[cell + 1]
    return float(2.0 ** float(q) * np.sum(bup ** (float(q) - 2.0) * (a * b).astype(np.float64)))


def intersection_term(a: LocalTimeField, b: LocalTimeField, sub: Subdivision, q):
    """Cross-strand intersection term of two fields under a level ladder.

    Zero when supports are disjoint; raises CoverageError when a shared
    site's max count falls outside the ladder.
    """
    if q < 1:
        raise ValueError("q must be >= 1")
    joint = np.vstack((a.sites, b.sites))
    keys = _point_keys(joint)
    ka, kb = keys[: len(a)], keys[len(a) :]
    ca, cb = _match_common(ka, a.counts, kb, b.counts, keys.dtype == object)
    exact = _is_integral(q) and int(q) >= 2 and sub.int_levels is not None
    return _pair_term(ca, cb, np.maximum(ca, cb), sub, q, exact, allow_above=False)


def sandwich_profile(
    tree: StrandTree,
    q,
    sub: Subdivision,
    label: str | None = None,
    truncation: float | None = None,
) -> list[SandwichReport]:
    """Sandwich reports for every depth L = 0..tree.depth from one tree.

    With ``truncation`` M, q-norms are truncated at M on the walk and on
    every strand, and the ladder classifies counts in [1, M] only (the
    ladder must cover that range); the lower bound is certified only
    when M >= n.
    """
    if q < 1:
        raise ValueError("q must be >= 1")
    n = tree.n
    top_needed = n if truncation is None else min(int(truncation), n)
    if not sub.covers(1, top_needed):
        raise CoverageError(
            f"subdivision [{sub.bottom}, {sub.top}) must cover [1, {top_needed}]"
        )
    exact = _is_integral(q) and int(q) >= 2 and sub.int_levels is not None
    active_trunc = truncation is not None and truncation < n

    def node_qnorm(counts):
        if truncation is not None:
            counts = counts[counts <= truncation]
        return _qnorm_fast(counts, q, exact)

    sums = []
    for j in range(tree.depth + 1):
        vals = [node_qnorm(c) for _, c in tree.keyed_fields(j)]
        sums.append(sum(vals) if exact else math.fsum(vals))
    value = sums[0]
    terms = []
    for level in tree.matched_pairs():
        t = [_pair_term(a, b, mx, sub, q, exact, allow_above=active_trunc) for a, b, mx in level]
        terms.append(sum(t) if exact else math.fsum(t))
    reports = []
    for L in range(tree.depth + 1):
        lower = sums[L]
        tL = tuple(terms[:L])
        upper = lower + (sum(tL) if exact else math.fsum(tL))
        reports.append(
            SandwichReport(
                q=float(q),
                depth=L,
                lower=lower,
                value=value,
                terms=tL,
                upper=upper,
                label=label,
                mode="exact" if exact else "float",
                truncation=None if truncation is None else float(truncation),
                two_sided=not active_trunc,
            )
        )
    return reports


def _checked(report: SandwichReport, rtol: float) -> SandwichReport:
    if not report.holds(rtol):
        raise SandwichViolation(
            f"sandwich violated at L={report.depth}, q={report.q}, "
            f"label={report.label!r}: lower={report.lower} value={report.value} "
            f"upper={report.upper}",
            report=report,
        )
    return report


def verify_sandwich(
    inc: IncrementSequence,
    L: int,
    q,
    sub: Subdivision,
    label: str | None = None,
    rtol: float = 1e-9,
) -> SandwichReport:
    """Verify lower <= q_norm <= lower + sum of intersection terms at depth L.

    Exact integer arithmetic for integer q >= 2 with an integer ladder;
    relative tolerance ``rtol`` otherwise.  Raises SandwichViolation on
    failure (which indicates an implementation bug, never randomness).
    """
    tree = build_strand_tree(inc, L)
    return _checked(sandwich_profile(tree, q, sub, label=label)[L], rtol)


def verify_truncated_sandwich(
    inc: IncrementSequence,
    L: int,
    q,
    M,
    sub: Subdivision,
    label: str | None = None,
    rtol: float = 1e-9,
) -> SandwichReport:
    """Truncated variant: q-norms cut at M, ladder over [1, M].

    For M >= n this coincides with ``verify_sandwich``.  With an active
    cutoff only the upper inequality is asserted: a site can straddle
    the cutoff (strand counts <= M while their sum exceeds it), so the
    truncated strand sum does not bound the truncated q-norm from below.
    """
    if M <= 0:
        raise ValueError("truncation level M must be positive")
    tree = build_strand_tree(inc, L)
    return _checked(sandwich_profile(tree, q, sub, label=label, truncation=float(M))[L], rtol)


def elementary_inequality_check(l1: int, l2: int, q, sub: Subdivision) -> bool:
    """Check l1^q + l2^q <= (l1+l2)^q <= l1^q + l2^q + 2^q b^(q-2) l1 l2.

    b is the upper level of the ladder cell containing max(l1, l2); the
    ladder must cover [1, max(l1, l2)] when both counts are positive.
    """
    if l1 < 0 or l2 < 0:
        raise ValueError("counts must be nonnegative")
    if q < 1:
        raise ValueError("q must be >= 1")
    exact = _is_integral(q) and int(q) >= 2
    if l1 == 0 or l2 == 0:
        cross = 0.0
    else:
        mx = max(l1, l2)
        if not sub.covers(mx, mx):
            raise CoverageError(f"subdivision does not cover max count {mx}")
        cell = int(np.searchsorted(sub.levels, mx, side="right") - 1)
        if exact and sub.int_levels is not None:
            bup = int(sub.int_levels[cell + 1])
            cross = 2 ** int(q) * bup ** (int(q) - 2) * l1 * l2
        else:
            exact = False
            bup = float(sub.levels[cell + 1])
            cross = 2.0 ** float(q) * bup ** (float(q) - 2.0) * l1 * l2
    if exact:
        qi = int(q)
        s, total = l1**qi + l2**qi, (l1 + l2) ** qi
        return s <= total <= s + cross
    fq = float(q)
    s = l1**fq + l2**fq
    total = float(l1 + l2) ** fq
    tol = 1e-12 * max(total, 1.0)
    return s <= total + tol and total <= s + cross + tol
