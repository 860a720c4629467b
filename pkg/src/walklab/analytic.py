"""Closed-form quantities: critical exponent, correction scales, level
ladders, geometric-law moments and the two large-deviation strategies."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import SubdivisionError


def critical_q(d: int) -> Fraction:
    """The critical exponent d/(d-2) where the optimal strategy switches."""
    if d < 3:
        raise ValueError("critical exponent requires a transient walk (d >= 3)")
    return Fraction(d, d - 2)


def psi(d: int, n: int) -> float:
    """Second-order correction scale: sqrt(n) in d=3, ln(n) in d=4, 1 beyond."""
    if d < 3:
        raise ValueError("correction scale defined for d >= 3")
    if n < 2:
        raise ValueError("n must be >= 2")
    if d == 3:
        return math.sqrt(n)
    if d == 4:
        return math.log(n)
    return 1.0


def alpha0(q: float) -> float:
    """Largest a with a**(q-1) * sum_l 2**(-(q-1) l) <= 1/16.

    Closed form ((1 - 2**(1-q)) / 16)**(1/(q-1)).
    """
    if q <= 1:
        raise ValueError("q must be > 1")
    return ((1.0 - 2.0 ** (1.0 - q)) / 16.0) ** (1.0 / (q - 1.0))


def _exact(x):
    """Fraction when exact arithmetic is possible, else float."""
    if isinstance(x, (int, Fraction, np.integer)):
        return Fraction(x)
    return float(x)


@dataclass(frozen=True)
class StrategyCost:
    """Log-cost exponents of a deviation strategy: cost ~ exp(-c n^a xi^b)."""

    strategy: str  # "A" (pile-up) or "B" (confinement)
    n_exponent: object  # Fraction when inputs are exact
    xi_exponent: object
    description: str


def strategy_costs(q, d: int) -> tuple[StrategyCost, StrategyCost]:
    """Cost exponents of strategy A (pile-up) and B (confinement).

    A: log-cost ~ (xi n)^(1/q); B: log-cost ~ xi^(2/(d(q-1))) n^(1-2/d).
    The strategy with the smaller n-exponent is the cheaper (dominant) one.
    """
    if d < 3:
        raise ValueError("strategies defined for transient walks (d >= 3)")
    qe = _exact(q)
    if not qe > 1:
        raise ValueError("q must be > 1")
    one = Fraction(1) if isinstance(qe, Fraction) else 1.0
    a = StrategyCost(
        "A",
        one / qe,
        one / qe,
        "pile up ~(xi n)^(1/q) visits on finitely many sites",
    )
    b = StrategyCost(
        "B",
        one - Fraction(2, d) if isinstance(qe, Fraction) else 1.0 - 2.0 / d,
        (one * 2) / (d * (qe - 1)),
        "stay time n in a ball of radius << sqrt(n)",
    )
    return a, b


def crossover(d: int) -> Fraction:
    """The q solving 1/q = 1 - 2/d (equal strategy costs); equals critical_q."""
    if d < 3:
        raise ValueError("crossover requires d >= 3")
    return 1 / (1 - Fraction(2, d))


def geometric_moment(rho: float, q, tol: float = 1e-12) -> float:
    """E[X**q] for X geometric on {1, 2, ...} with P(X=k) = rho**(k-1) (1-rho).

    Series is truncated once the analytic tail bound (geometric decay
    adjusted for the polynomial factor) drops below ``tol``.
    """
    if not 0 <= rho < 1:
        raise ValueError("return probability must lie in [0, 1) (transient regime)")
    if q < 1:
        raise ValueError("q must be >= 1")
    if rho == 0.0:
        return 1.0
    q = float(q)
    terms = []
    k = 1
    while True:
        term = k**q * rho ** (k - 1) * (1 - rho)
        terms.append(term)
        # tail <= term_k * sum_j ((k+j)/k)^q rho^j <= term_k * r/(1-r), r = rho e^(q/k)
        r = rho * math.exp(q / k)
        if r < 1 and term * r / (1 - r) < tol:
            break
        k += 1
    return math.fsum(terms)


def kappa_predict(q, d: int, rho: float) -> float:
    """Predicted almost-sure limit of q_norm/n: (1-rho) E[l_inf(0)^q]."""
    if d < 3:
        raise ValueError("limit constant defined for transient walks (d >= 3)")
    return (1.0 - rho) * geometric_moment(rho, q)


@dataclass(frozen=True, eq=False)
class Subdivision:
    """A strictly increasing level ladder b_0 < b_1 < ... < b_last.

    Half-open cells [b_i, b_{i+1}) classify local-time values; within a
    regime consecutive levels have ratio 2.  ``int_levels`` is set when
    every level is an exact integer (enables exact integer arithmetic).
    """

    levels: np.ndarray  # float64, strictly increasing, positive
    kind: str  # "dyadic" | "uniform" | "mixed"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        lv = np.asarray(self.levels, dtype=np.float64)
        object.__setattr__(self, "levels", lv)
        if lv.size < 2:
            raise SubdivisionError("a subdivision needs at least two levels")
        if lv[0] <= 0 or np.any(np.diff(lv) <= 0):
            raise SubdivisionError("levels must be positive and strictly increasing")
        ints = None
        if np.all(lv == np.floor(lv)) and lv[-1] < 2**62:
            ints = lv.astype(np.int64)
        object.__setattr__(self, "int_levels", ints)

    @property
    def bottom(self) -> float:
        return float(self.levels[0])

    @property
    def top(self) -> float:
        return float(self.levels[-1])

    def covers(self, lo, hi) -> bool:
        """Does the ladder classify every value in [lo, hi]?"""
        return self.bottom <= lo and hi < self.top

    def cell_of(self, values):
        """Index i with b_i <= v < b_{i+1}; -1 below, len-1 at/above the top."""
        v = np.asarray(values)
        return np.searchsorted(self.levels, v, side="right") - 1


def dyadic_ladder(top, bottom: int = 1) -> Subdivision:
    """Integer ladder bottom, 2*bottom, 4*bottom, ..., first power > top."""
    if bottom < 1 or bottom & (bottom - 1):
        raise SubdivisionError("bottom must be a power of two >= 1")
    levels = [bottom]
    while levels[-1] <= top:
        levels.append(2 * levels[-1])
    return Subdivision(np.array(levels, dtype=np.float64), "dyadic", {"top": top, "bottom": bottom})


def build_subdivision(kind: str, q, xi, n: int, d: int, with_dyadic_snap: bool = False) -> Subdivision:
    """The level ladders used by the strand decomposition analysis.

    ``uniform``: b_i = xi**(1/(q-1)) * a0 * 2**i, i = i_lo..M with the
    top geometric level the first with a0*2**i >= n**((d-2)/d).
    ``mixed``: exponent 1/(q-1) for i < 0 and 1/q for i >= 0.
    With ``with_dyadic_snap`` a0 is rounded down so a0*xi**(1/(q-1)) is a
    power of two (bookkeeping convenience only; off by default).
    """
    if kind not in ("uniform", "mixed"):
        raise SubdivisionError(f"unknown subdivision kind {kind!r}")
    if xi <= 0:
        raise ValueError("xi must be positive")
    if d < 3:
        raise ValueError("subdivision top level requires d >= 3")
    gamma = 1.0 / (q - 1.0)
    a0 = alpha0(q)
    j0 = 0
    if with_dyadic_snap and a0 * xi**gamma >= 1.0:
        j0 = int(math.floor(math.log2(a0 * xi**gamma)))
        a0 = 2.0**j0 / xi**gamma

    target = float(n) ** ((d - 2) / d)
    M = 0
    while a0 * 2.0**M < target:
        M += 1

    def bot_level(i):
        return xi**gamma * a0 * 2.0**i

    def top_level(i):
        if kind == "uniform":
            return xi**gamma * a0 * 2.0**i
        return xi ** (1.0 / q) * a0 * 2.0**i

    if top_level(M) < 1.0:
        raise SubdivisionError(
            "empty ladder: even the top level is below 1 "
            f"(xi^gamma * a0 * 2^{M} = {top_level(M):.3g})"
        )
    i_lo = 0
    while bot_level(i_lo) > 1.0:
        i_lo -= 1
    levels = [bot_level(i) for i in range(i_lo, 0)] + [top_level(i) for i in range(0, M + 1)]
    params = {"q": q, "xi": xi, "n": n, "d": d, "alpha0": a0, "i_lo": i_lo, "M": M, "snap_j0": j0}
    try:
        return Subdivision(np.array(levels, dtype=np.float64), kind, params)
    except SubdivisionError as exc:
        # mixed regimes cross once xi^(1/(q(q-1))) >= 2
        raise SubdivisionError(f"non-monotone {kind} ladder at xi={xi}: {exc}") from exc
