"""Monte Carlo estimation and statistical verification of the limit laws.

Replica discipline: an estimator with ``samples`` m and base replica r0
dedicates replica indices r0..r0+m-1 (and documented offset blocks for
auxiliary estimates) of the master seed's stream family, one per walk.
Estimates are reduced with math.fsum in replica order, so every record
is bitwise reproducible from (master_seed, params) on any thread count.

Every sampler that builds a local-time field runs the pathwise audit
(mass, Holder floor, dyadic level bounds) on each sampled path and
raises PathwiseInvariantError on any violation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats as _stats

from . import _kernels
from .errors import ConfigError, DegenerateSampleError, InfeasibleConfigError
from .lattice import chunk_spec, increments_for, positions
from .local_times import _point_keys, audit_counts, visit_counts
from .records import EstimateRecord, TailCurve, config_hash

_Z95 = 1.959963984540054  # two-sided 95% normal quantile


def _kern_args(d: int):
    bits, mask, _per, nd = chunk_spec(d)
    return np.uint64(bits), np.uint64(mask), np.uint64(nd)


def _mean_stderr(values) -> tuple[float, float]:
    m = len(values)
    mean = math.fsum(values) / m
    var = math.fsum((v - mean) ** 2 for v in values) / (m - 1)
    return mean, math.sqrt(var / m)


def wilson_interval(successes: int, trials: int, z: float = _Z95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials < 1:
        raise ValueError("trials must be positive")
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def _counts_sample(seed: int, replica: int, d: int, n: int) -> np.ndarray:
    return visit_counts(increments_for(seed, replica, d, n))


def _record(name, *, d, q, n, xi, samples, estimate, stderr, seed, params) -> EstimateRecord:
    return EstimateRecord(
        name=name,
        d=d,
        q=q,
        n=n,
        xi=xi,
        samples=samples,
        estimate=estimate,
        stderr=stderr,
        master_seed=seed,
        config_hash=config_hash(params),
    )


# ---------------------------------------------------------------- gamma


@dataclass(frozen=True)
class GammaResult:
    """Escape-probability estimate with its horizon ladder (powers of 4).

    Finite horizons bias the estimate upward, so the ladder is reported
    for extrapolation instead of a corrected point value.  ``rho_hat``
    is the complementary return probability, ``rho_upper`` its Wilson
    upper confidence bound.
    """

    record: EstimateRecord
    ladder: tuple[EstimateRecord, ...]
    rho_hat: float
    rho_upper: float
    first_return_times: np.ndarray


def estimate_gamma(d: int, horizon: int, samples: int, seed: int, replica0: int = 0) -> GammaResult:
    """Fraction of walks with no return to the origin within ``horizon`` steps."""
    if d < 3:
        raise ConfigError("transience requires d >= 3 (the escape probability vanishes below)")
    if horizon < 1:
        raise ConfigError("horizon must be >= 1")
    if samples < 2:
        raise ConfigError("samples must be >= 2")
    bits, mask, nd = _kern_args(d)
    T = _kernels.first_return_times(
        np.uint64(seed), np.uint64(replica0), samples, d, horizon, bits, mask, nd
    )
    params = {"op": "estimate_gamma", "d": d, "horizon": horizon, "samples": samples, "seed": seed}

    def rec_at(h: int) -> EstimateRecord:
        x = (T > h).astype(np.float64)
        mean, se = _mean_stderr(x)
        return _record(
            f"gamma@{h}", d=d, q=None, n=h, xi=None, samples=samples,
            estimate=mean, stderr=se, seed=seed, params=params,
        )

    ladder_h = []
    h = 4
    while h < horizon:
        ladder_h.append(h)
        h *= 4
    ladder_h.append(horizon)
    ladder = tuple(rec_at(h) for h in ladder_h)
    returned = int(np.sum(T <= horizon))
    _, rho_up = wilson_interval(returned, samples)
    final = ladder[-1]
    record = _record(
        "gamma", d=d, q=None, n=horizon, xi=None, samples=samples,
        estimate=final.estimate, stderr=final.stderr, seed=seed, params=params,
    )
    return GammaResult(record, ladder, 1.0 - final.estimate, rho_up, T)


# ---------------------------------------------------------------- kappa


def estimate_kappa(
    q, d: int, n: int, samples: int, seed: int, replica0: int = 0
) -> tuple[EstimateRecord, EstimateRecord]:
    """Mean of q_norm/n and of range/n across independent walks."""
    if d < 3:
        raise ConfigError("the a.s. limit requires a transient walk (d >= 3)")
    if q < 1:
        raise ConfigError("q must be >= 1")
    qn = np.empty(samples)
    rg = np.empty(samples)
    fq = float(q)
    for i in range(samples):
        counts = _counts_sample(seed, replica0 + i, d, n)
        audit_counts(counts, n, q, context=f"kappa seed={seed} replica={replica0 + i}")
        qn[i] = np.sum(counts.astype(np.float64) ** fq)
        rg[i] = counts.size
    params = {"op": "estimate_kappa", "q": q, "d": d, "n": n, "samples": samples, "seed": seed}
    km, kse = _mean_stderr(qn / n)
    rm, rse = _mean_stderr(rg / n)
    kappa_rec = _record("kappa", d=d, q=float(q), n=n, xi=None, samples=samples,
                        estimate=km, stderr=kse, seed=seed, params=params)
    range_rec = _record("range_mean", d=d, q=None, n=n, xi=None, samples=samples,
                        estimate=rm, stderr=rse, seed=seed, params=params)
    return kappa_rec, range_rec


# ---------------------------------------------------------------- variance


def variance_scan(q, d: int, n_grid, samples, seed: int, replica0: int = 0) -> list[EstimateRecord]:
    """Sample variance of q_norm at each n, normalized per dimension.

    d >= 4: reports var/n (stabilizes); d = 3: reports var/(n ln^2 n)
    (bounded).  ``samples`` may be an int or a per-n sequence.
    """
    if d < 3:
        raise ConfigError("variance scaling requires d >= 3")
    n_grid = list(n_grid)
    if isinstance(samples, int):
        samples = [samples] * len(n_grid)
    out = []
    rep = replica0
    for n, m in zip(n_grid, samples):
        qn = np.empty(m)
        fq = float(q)
        for i in range(m):
            counts = _counts_sample(seed, rep + i, d, n)
            audit_counts(counts, n, q, context=f"variance seed={seed} replica={rep + i}")
            qn[i] = np.sum(counts.astype(np.float64) ** fq)
        rep += m
        mean = math.fsum(qn) / m
        dev2 = (qn - mean) ** 2
        var = math.fsum(dev2) / (m - 1)
        m4 = math.fsum(dev2**2) / m
        se_var = math.sqrt(max(m4 - var**2, 0.0) / m)
        norm = n * math.log(n) ** 2 if d == 3 else n
        name = "var_over_nlog2n" if d == 3 else "var_over_n"
        params = {"op": "variance_scan", "q": q, "d": d, "n": n, "samples": m, "seed": seed}
        out.append(_record(name, d=d, q=float(q), n=n, xi=None, samples=m,
                           estimate=var / norm, stderr=se_var / norm, seed=seed, params=params))
    return out


# ---------------------------------------------------------------- CLT


@dataclass(frozen=True, eq=False)
class CltResult:
    standardized: np.ndarray
    ks_statistic: float
    p_value: float
    kappa_hat: float
    v_hat: float
    kappa_record: EstimateRecord
    v_record: EstimateRecord


def ks_normal(x: np.ndarray) -> tuple[float, float]:
    """Kolmogorov-Smirnov statistic and asymptotic p-value against N(0, 1)."""
    x = np.asarray(x, dtype=np.float64)
    if x.size < 2 or float(np.std(x)) == 0.0:
        raise DegenerateSampleError("KS test needs a non-degenerate sample")
    res = _stats.kstest(x, "norm", mode="asymp")
    return float(res.statistic), float(res.pvalue)


def clt_test(q, d: int, n: int, samples: int, seed: int, replica0: int = 0) -> CltResult:
    """Standardize q_norm with independently estimated mean and variance.

    The centering and scaling come from a disjoint replica block (an
    independent stream family), avoiding standardization bias.  d >= 4
    is the supported regime; d = 3 runs with a warning.
    """
    if d < 3:
        raise ConfigError("the CLT check requires a transient walk (d >= 3)")
    if d == 3:
        warnings.warn("the q-norm CLT is established for d >= 4; d = 3 is exploratory")
    fq = float(q)

    def block(rep0):
        qn = np.empty(samples)
        for i in range(samples):
            counts = _counts_sample(seed, rep0 + i, d, n)
            audit_counts(counts, n, q, context=f"clt seed={seed} replica={rep0 + i}")
            qn[i] = np.sum(counts.astype(np.float64) ** fq)
        return qn

    est = block(replica0 + samples)  # estimation block first replicas after the test block
    kappa_hat = math.fsum(est) / samples / n
    dev2 = (est - kappa_hat * n) ** 2
    v_hat = math.fsum(dev2) / (samples - 1) / n
    if v_hat <= 0:
        raise DegenerateSampleError("estimated variance is zero; cannot standardize")
    test = block(replica0)
    z = (test - n * kappa_hat) / math.sqrt(n * v_hat)
    ks, p = ks_normal(z)
    params = {"op": "clt_test", "q": q, "d": d, "n": n, "samples": samples, "seed": seed}
    m4 = math.fsum(dev2**2) / samples
    se_var = math.sqrt(max(m4 - (v_hat * n) ** 2, 0.0) / samples) / n
    krec = _record("clt_kappa_hat", d=d, q=fq, n=n, xi=None, samples=samples,
                   estimate=kappa_hat, stderr=math.sqrt(v_hat / n) / math.sqrt(samples),
                   seed=seed, params=params)
    vrec = _record("clt_v_hat", d=d, q=fq, n=n, xi=None, samples=samples,
                   estimate=v_hat, stderr=se_var, seed=seed, params=params)
    return CltResult(z, ks, p, kappa_hat, v_hat, krec, vrec)


# ---------------------------------------------------------------- tail


@dataclass(frozen=True)
class TailResult:
    record: EstimateRecord
    certificate: str | None
    wilson: tuple[float, float]
    mean_estimate: float


def tail_estimate(q, d: int, n: int, xi, samples: int, seed: int, replica0: int = 0) -> TailResult:
    """Empirical P(q_norm - mean >= xi n) with a Wilson interval.

    The mean is estimated on a disjoint replica block.  When the event
    is analytically impossible (q_norm <= n^q pathwise) the estimate is
    an exact 0 with a certificate; when it is pathwise certain
    (q_norm >= n) an exact 1.
    """
    if xi <= 0 and not xi < 0:
        raise ConfigError("xi must be nonzero; the tail threshold is mean + xi*n")
    fq = float(q)
    mean_block = np.empty(samples)
    for i in range(samples):
        counts = _counts_sample(seed, replica0 + samples + i, d, n)
        audit_counts(counts, n, q, context=f"tail-mean seed={seed} replica={replica0 + samples + i}")
        mean_block[i] = np.sum(counts.astype(np.float64) ** fq)
    mean_est = math.fsum(mean_block) / samples
    params = {"op": "tail_estimate", "q": q, "d": d, "n": n, "xi": xi,
              "samples": samples, "seed": seed}

    def result(estimate, stderr, cert, wl, wh):
        rec = _record("tail", d=d, q=fq, n=n, xi=float(xi), samples=samples,
                      estimate=estimate, stderr=stderr, seed=seed, params=params)
        return TailResult(rec, cert, (wl, wh), mean_est)

    if xi * n + mean_est > float(n) ** fq:
        return result(0.0, 0.0, "impossible: xi*n + mean > n^q while q_norm <= n^q pathwise",
                      0.0, 0.0)
    if mean_est + xi * n <= n:
        return result(1.0, 0.0, "certain: threshold <= n while q_norm >= n pathwise", 1.0, 1.0)
    hits = 0
    for i in range(samples):
        counts = _counts_sample(seed, replica0 + i, d, n)
        audit_counts(counts, n, q, context=f"tail seed={seed} replica={replica0 + i}")
        qn = float(np.sum(counts.astype(np.float64) ** fq))
        if qn - mean_est >= xi * n:
            hits += 1
    p = hits / samples
    lo, hi = wilson_interval(hits, samples)
    return result(p, math.sqrt(p * (1 - p) / samples), None, lo, hi)


# ---------------------------------------------------------------- pinned tail


@dataclass(frozen=True, eq=False)
class PinnedResult:
    """Tail of the origin's local time against the geometric reference."""

    curve: TailCurve
    slope: float
    slope_se: float
    rho_hat: float
    rho_upper: float
    envelope_ok: bool


def pinned_tail_check(
    d: int,
    n: int,
    k_grid,
    samples: int,
    seed: int,
    replica0: int = 0,
    rho_ref: float | None = None,
    rho_upper: float | None = None,
) -> PinnedResult:
    """Empirical P(l_n(0) >= k) versus the geometric law rho^(k-1).

    ``rho_ref`` (e.g. from estimate_gamma) sets the reference; without
    it the run's own return frequency P(l_n(0) >= 2) is used.  The
    envelope check asserts P_hat(k) <= rho_upper^(k-1) for all k.
    """
    if d < 3:
        raise ConfigError("geometric pile-up requires a transient walk (d >= 3)")
    bits, mask, nd = _kern_args(d)
    visits = _kernels.origin_visit_counts(
        np.uint64(seed), np.uint64(replica0), samples, d, n, bits, mask, nd
    )
    k_grid = np.asarray(list(k_grid), dtype=np.int64)
    phat = np.array([np.mean(visits >= k) for k in k_grid])
    se = np.sqrt(phat * (1 - phat) / samples)
    if rho_ref is None:
        returned = int(np.sum(visits >= 2))
        rho_ref = returned / samples
        _, up = wilson_interval(returned, samples)
        rho_upper = up if rho_upper is None else rho_upper
    elif rho_upper is None:
        rho_upper = rho_ref
    curve = TailCurve("pinned_tail", "probability", k_grid.astype(np.float64), phat, se,
                      reference_slope=math.log(rho_ref))
    # fit over the stochastic points only (log-noise undefined at 0 and 1)
    pos = (phat > 0) & (phat < 1)
    x = k_grid[pos].astype(np.float64)
    y = np.log(phat[pos])
    w = (phat[pos] / se[pos]) ** 2  # weights 1/se(log)^2
    if x.size >= 2:
        xm = np.sum(w * x) / np.sum(w)
        sxx = np.sum(w * (x - xm) ** 2)
        slope = float(np.sum(w * (x - xm) * y) / sxx)
        slope_se = float(1.0 / math.sqrt(sxx))
    else:
        slope, slope_se = float("nan"), float("inf")
    envelope_ok = bool(np.all(phat <= rho_upper ** (k_grid - 1) + 1e-15))
    return PinnedResult(curve, slope, slope_se, rho_ref, rho_upper, envelope_ok)


# ---------------------------------------------------------------- confined


@dataclass(frozen=True)
class ConfinedResult:
    record: EstimateRecord
    pilot_estimate: float
    accepted: int
    cond_qnorm: dict
    cond_range: tuple[float, float]
    holder_checked: int


def confined_sampler(
    d: int,
    n: int,
    radius,
    samples: int,
    seed: int,
    replica0: int = 0,
    qs=(2.0,),
    pilot_attempts: int = 200_000,
) -> ConfinedResult:
    """P(walk stays in the Euclidean ball of given radius for n steps).

    Rejection sampling with a pilot feasibility guard: if the pilot (a
    disjoint replica block) sees no acceptance and so cannot certify an
    acceptance rate >= 1e-6, the configuration is rejected.  Accepted
    paths are regenerated to collect conditional q-norm and range
    statistics; each must satisfy the Holder floor exactly.
    """
    if radius < 1:
        raise ConfigError("radius must be >= 1")
    if samples < 2:
        raise ConfigError("samples must be >= 2")
    r2 = int(math.floor(float(radius) ** 2 + 1e-12))
    bits, mask, nd = _kern_args(d)
    if radius < n:  # for radius >= n the walk cannot exit; skip the guard
        pm = min(pilot_attempts, 4 * samples)
        pilot = _kernels.confined_accepts(
            np.uint64(seed), np.uint64(replica0 + samples), pm, d, n, r2, bits, mask, nd
        )
        pilot_rate = float(np.mean(pilot))
        if pilot.sum() == 0:
            raise InfeasibleConfigError(
                f"no acceptance in {pm} pilot attempts; cannot certify rate >= 1e-6",
                pre_estimate=wilson_interval(0, pm)[1],
            )
    else:
        pilot_rate = 1.0
    acc = _kernels.confined_accepts(
        np.uint64(seed), np.uint64(replica0), samples, d, n, r2, bits, mask, nd
    )
    accepted = int(acc.sum())
    p = accepted / samples
    params = {"op": "confined_sampler", "d": d, "n": n, "radius": radius,
              "samples": samples, "seed": seed}
    rec = _record("confinement_prob", d=d, q=None, n=n, xi=None, samples=samples,
                  estimate=p, stderr=math.sqrt(p * (1 - p) / samples), seed=seed, params=params)
    qstats = {}
    qn_acc = {float(q): [] for q in qs}
    rg_acc = []
    holder_checked = 0
    for i in np.flatnonzero(acc):
        counts = _counts_sample(seed, replica0 + int(i), d, n)
        audit_counts(counts, n, qs[0], context=f"confined seed={seed} replica={replica0 + int(i)}")
        holder_checked += 1
        rg_acc.append(counts.size)
        fc = counts.astype(np.float64)
        for q in qs:
            qn_acc[float(q)].append(float(np.sum(fc ** float(q))))
    for q, vals in qn_acc.items():
        if len(vals) >= 2:
            qstats[q] = _mean_stderr(vals)
        elif vals:
            qstats[q] = (vals[0], float("nan"))
    cond_range = _mean_stderr(rg_acc) if len(rg_acc) >= 2 else (float("nan"), float("nan"))
    return ConfinedResult(rec, pilot_rate, accepted, qstats, cond_range, holder_checked)


# ---------------------------------------------------------------- intersection decay


@dataclass(frozen=True, eq=False)
class DecayScanResult:
    k_curve: TailCurve  # E[l_n(level set of independent walk at > k)] vs k
    x_curve: TailCurve  # tail of X = l_n(D)/|D|^(2/d)
    k_slope: float
    x_slope: float


def intersection_decay_scan(
    d: int, n: int, k_grid, samples: int, seed: int, replica0: int = 0, x_k: int = 1
) -> DecayScanResult:
    """Two independent walks: mass of one on the high-level sets of the other.

    For each k the statistic is l_n(D(k)) with D(k) the sites where the
    independent copy's local time exceeds k.  The scan also estimates
    the tail of X = l_n(D(x_k)) / |D(x_k)|^(2/d) on a quantile grid.
    """
    if d < 3:
        raise ConfigError("intersection decay requires a transient walk (d >= 3)")
    k_grid = np.asarray(list(k_grid), dtype=np.int64)
    vals = np.zeros((samples, k_grid.size))
    xs = []
    for i in range(samples):
        inc1 = increments_for(seed, replica0 + 2 * i, d, n)
        inc2 = increments_for(seed, replica0 + 2 * i + 1, d, n)
        p1 = positions(inc1)[:n]
        p2 = positions(inc2)[:n]
        keys = _point_keys(np.vstack((p1, p2)))
        u1, c1 = np.unique(keys[:n], return_counts=True)
        u2, c2 = np.unique(keys[n:], return_counts=True)
        audit_counts(c1.astype(np.int64), n, 2.0, context=f"decay seed={seed} rep={replica0+2*i}")
        audit_counts(c2.astype(np.int64), n, 2.0, context=f"decay seed={seed} rep={replica0+2*i+1}")
        if keys.dtype == object:
            lk = {int(k): int(c) for k, c in zip(u2, c2)}
            a = np.array([lk.get(int(k), 0) for k in u1], dtype=np.int64)
            b1, lvl = c1, a
        else:
            _, i1, i2 = np.intersect1d(u1, u2, assume_unique=True, return_indices=True)
            b1, lvl = c1[i1], c2[i2]
        for j, k in enumerate(k_grid):
            vals[i, j] = b1[lvl > k].sum()
        dsize = int(np.sum(c2 > x_k))
        if dsize > 0:
            xs.append(float(b1[lvl > x_k].sum()) / dsize ** (2.0 / d))
    means = vals.mean(axis=0)
    ses = vals.std(axis=0, ddof=1) / math.sqrt(samples)
    pos = means > 0
    k_slope = float(np.polyfit(k_grid[pos].astype(float), np.log(means[pos]), 1)[0]) if pos.sum() >= 2 else float("nan")
    k_curve = TailCurve("intersection_decay", "expectation", k_grid.astype(np.float64),
                        means, ses, reference_slope=k_slope)
    xs = np.asarray(xs)
    if xs.size >= 10:
        tgrid = np.quantile(xs, [0.5, 0.7, 0.85, 0.92, 0.96, 0.99])
        tgrid = np.unique(tgrid[tgrid > 0])
        pt = np.array([np.mean(xs > t) for t in tgrid])
        pse = np.sqrt(pt * (1 - pt) / xs.size)
        posx = pt > 0
        x_slope = (
            float(np.polyfit(tgrid[posx], np.log(pt[posx]), 1)[0]) if posx.sum() >= 2 else float("nan")
        )
        x_curve = TailCurve("normalized_mass_tail", "probability", tgrid, pt, pse,
                            reference_slope=x_slope)
    else:
        x_curve = TailCurve("normalized_mass_tail", "probability", np.array([0.0]),
                            np.array([1.0]), np.array([0.0]), reference_slope=None)
        x_slope = float("nan")
    return DecayScanResult(k_curve, x_curve, k_slope, x_slope)


# ---------------------------------------------------------------- level profile


@dataclass(frozen=True, eq=False)
class LevelProfile:
    """Per-level contributions to the q-norm for the ladder b_i = 2^i."""

    q: float
    d: int
    n: int
    samples: int
    top_percent: float | None
    levels: np.ndarray  # level indices i (band [2^i, 2^(i+1)))
    frac_unconditional: np.ndarray
    frac_conditional: np.ndarray | None
    argmax_unconditional: int
    argmax_conditional: int | None


def level_profile(
    q, d: int, n: int, samples: int, seed: int, replica0: int = 0, top_percent: float | None = None
) -> LevelProfile:
    """Fraction of the q-norm contributed by each dyadic count band.

    With ``top_percent`` p, also reports the profile conditioned on the
    top-p% largest q-norm values: the position of the maximal band is
    the shape diagnostic (low bands = confinement, high bands = pile-up).
    """
    if d < 3:
        raise ConfigError("the shape diagnostic requires a transient walk (d >= 3)")
    nlev = int(n).bit_length()
    contrib = np.zeros((samples, nlev))
    totals = np.empty(samples)
    fq = float(q)
    for i in range(samples):
        counts = _counts_sample(seed, replica0 + i, d, n)
        audit_counts(counts, n, q, context=f"level seed={seed} replica={replica0 + i}")
        lev = np.frexp(counts.astype(np.float64))[1] - 1
        x = counts.astype(np.float64) ** fq
        contrib[i, :] = np.bincount(lev, weights=x, minlength=nlev)
        totals[i] = x.sum()
    frac_all = contrib.sum(axis=0) / math.fsum(totals)
    frac_top = None
    argmax_top = None
    if top_percent is not None:
        k = max(1, int(samples * top_percent / 100.0))
        idx = np.argsort(totals, kind="stable")[-k:]
        frac_top = contrib[idx].sum(axis=0) / float(totals[idx].sum())
        argmax_top = int(np.argmax(frac_top))
    return LevelProfile(
        q=fq, d=d, n=n, samples=samples, top_percent=top_percent,
        levels=np.arange(nlev), frac_unconditional=frac_all, frac_conditional=frac_top,
        argmax_unconditional=int(np.argmax(frac_all)), argmax_conditional=argmax_top,
    )
