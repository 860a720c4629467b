"""Experiment configuration, orchestration and the ``walklab`` command.

Configuration is a flat key=value text file overridable by flags; every
run writes, into the output directory: a records CSV and JSON, an
x/y/err plot-data CSV, and a summary JSON.  Outputs carry no timestamps
and reruns of the same configuration are bitwise identical.

Exit status: 0 on success (including resource-limited partial runs,
which are flagged in the summary), 1 when a pathwise invariant
(sandwich, Holder, mass) was violated, 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import montecarlo as mc
from .analytic import critical_q, crossover, dyadic_ladder, kappa_predict, strategy_costs
from .decomposition import build_strand_tree, sandwich_profile
from .errors import (
    CapacityError,
    ConfigError,
    InfeasibleConfigError,
    PathwiseInvariantError,
    SandwichViolation,
)
from .lattice import increments_for
from .local_times import accumulate, field_to_csv, q_norm, range_size
from .records import SCHEMA_VERSION, config_hash, write_plot_data, write_records

ENV_OUTDIR = "WALKLAB_OUTDIR"


@dataclass
class Param:
    kind: str  # int | float | str | ints | floats
    default: object = None
    required: bool = False
    help: str = ""


@dataclass
class ExperimentConfig:
    subcommand: str
    params: dict
    outdir: Path

    @property
    def hash(self) -> str:
        return config_hash({"subcommand": self.subcommand, **self.params})


def _parse_value(kind: str, text: str):
    text = text.strip()
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    if kind == "str":
        return text
    if kind == "ints":
        return [int(t) for t in text.split(",") if t.strip()]
    if kind == "floats":
        return [float(t) for t in text.split(",") if t.strip()]
    raise ValueError(f"unknown param kind {kind}")


def parse_config_file(path) -> dict[str, str]:
    out = {}
    for ln_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{ln_no}: expected 'key = value'")
        key, val = line.split("=", 1)
        out[key.strip()] = val.strip()
    return out


_COMMON = {
    "seed": Param("int", 2024, help="master seed"),
    "samples": Param("int", 1000, help="number of replicas"),
}

SCHEMAS: dict[str, dict[str, Param]] = {
    "simulate": {
        "seed": Param("int", 2024),
        "replica": Param("int", 0),
        "d": Param("int", required=True),
        "n": Param("int", required=True),
        "q_list": Param("floats", [2.0]),
    },
    "verify-sandwich": {
        **_COMMON,
        "d": Param("int", required=True),
        "n": Param("int", required=True),
        "paths": Param("int", 1000),
        "L": Param("int", 4),
        "q_list": Param("floats", [1.5, 2.0, 2.5, 3.0]),
        "M": Param("float", None, help="optional truncation cutoff"),
    },
    "estimate-gamma": {**_COMMON, "d": Param("int", required=True), "horizon": Param("int", 10**6)},
    "estimate-kappa": {
        **_COMMON,
        "d": Param("int", required=True),
        "n": Param("int", required=True),
        "q": Param("float", 2.0),
        "rho_ref": Param("float", None),
    },
    "variance-scan": {
        **_COMMON,
        "d": Param("int", required=True),
        "q": Param("float", 2.0),
        "n_grid": Param("ints", required=True),
    },
    "clt-test": {
        **_COMMON,
        "d": Param("int", required=True),
        "n": Param("int", required=True),
        "q": Param("float", 1.5),
    },
    "tail": {
        **_COMMON,
        "d": Param("int", required=True),
        "n": Param("int", required=True),
        "q": Param("float", 2.0),
        "xi": Param("float", required=True),
    },
    "pinned": {
        **_COMMON,
        "d": Param("int", required=True),
        "n": Param("int", required=True),
        "k_grid": Param("ints", [1, 2, 3, 4, 5, 6]),
        "rho_ref": Param("float", None),
    },
    "confined": {
        **_COMMON,
        "d": Param("int", required=True),
        "n": Param("int", required=True),
        "radius": Param("float", required=True),
    },
    "intersection-scan": {
        **_COMMON,
        "d": Param("int", required=True),
        "n": Param("int", required=True),
        "k_grid": Param("ints", [1, 2, 3, 4, 5]),
    },
    "level-profile": {
        **_COMMON,
        "d": Param("int", required=True),
        "n": Param("int", required=True),
        "q": Param("float", required=True),
        "top_percent": Param("float", None),
    },
    "shape-crossover": {"d_min": Param("int", 3), "d_max": Param("int", 10)},
}

_TRANSIENT = ("estimate-gamma", "estimate-kappa", "variance-scan", "pinned",
              "intersection-scan", "level-profile")


def _validate(sub: str, p: dict) -> None:
    """Check operation preconditions before any sampling starts."""
    if sub in _TRANSIENT and p["d"] < 3:
        raise ConfigError(f"{sub}: transience requires d >= 3 (got d={p['d']})")
    if sub == "clt-test" and p["d"] < 3:
        raise ConfigError("clt-test: requires d >= 3 (d >= 4 is the supported regime)")
    if "q" in p and p.get("q") is not None and p["q"] < 1:
        raise ConfigError(f"{sub}: q must be >= 1 (got {p['q']})")
    if "n" in p and p["n"] < 1:
        raise ConfigError(f"{sub}: n must be >= 1")
    if "samples" in p and p["samples"] < 2:
        raise ConfigError(f"{sub}: samples must be >= 2")
    if sub == "confined" and p["radius"] < 1:
        raise ConfigError("confined: radius must be >= 1")
    if sub == "verify-sandwich" and 2 ** p["L"] > p["n"]:
        raise ConfigError("verify-sandwich: need 2^L <= n")
    if sub == "verify-sandwich" and p.get("M") is not None and p["M"] < 1:
        raise ConfigError("verify-sandwich: truncation cutoff M must be >= 1")
    if sub == "tail" and p["xi"] == 0:
        raise ConfigError("tail: xi must be nonzero")


def load_config(subcommand: str, config_path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Merge file values and flag overrides against the command schema.

    Unknown keys are rejected; all preconditions are validated here,
    before any sampling.
    """
    if subcommand not in SCHEMAS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    schema = SCHEMAS[subcommand]
    raw: dict[str, str] = {}
    if config_path is not None:
        raw.update(parse_config_file(config_path))
    unknown = set(raw) - set(schema) - {"outdir"}
    if unknown:
        raise ConfigError(f"unknown config keys for {subcommand}: {sorted(unknown)}")
    params: dict = {}
    for name, spec in schema.items():
        if name in raw:
            params[name] = _parse_value(spec.kind, raw[name])
        else:
            params[name] = spec.default
    outdir = raw.get("outdir")
    for name, val in (overrides or {}).items():
        if name == "outdir":
            outdir = val
            continue
        if name not in schema:
            raise ConfigError(f"unknown flag for {subcommand}: {name}")
        params[name] = val if not isinstance(val, str) else _parse_value(schema[name].kind, val)
    missing = [k for k, s in schema.items() if s.required and params[k] is None]
    if missing:
        raise ConfigError(f"{subcommand}: missing required parameters {missing}")
    _validate(subcommand, params)
    outdir = Path(outdir or os.environ.get(ENV_OUTDIR, "."))
    return ExperimentConfig(subcommand, params, outdir)


# ------------------------------------------------------------- runners
# each runner returns (records, plot_triplets, summary_extras)


def _run_simulate(p, outdir):
    inc = increments_for(p["seed"], p["replica"], p["d"], p["n"])
    f = accumulate(inc)
    field_to_csv(f, outdir / "simulate_field.csv")
    qn = {str(q): float(q_norm(f, q)) for q in p["q_list"]}
    ranked = np.sort(f.counts)[::-1].astype(float)
    plot = (np.arange(1, ranked.size + 1, dtype=float), ranked, np.zeros(ranked.size))
    return [], plot, {"q_norms": qn, "range_size": range_size(f), "mass": f.mass}


def _run_verify_sandwich(p, outdir):
    M = p.get("M")
    sub = dyadic_ladder(p["n"] if M is None else min(int(M), p["n"]))
    gaps: dict[tuple, list] = {}
    violations = []
    for i in range(p["paths"]):
        inc = increments_for(p["seed"], i, p["d"], p["n"])
        tree = build_strand_tree(inc, p["L"])
        for q in p["q_list"]:
            reports = sandwich_profile(tree, q, sub, truncation=M,
                                       label=f"seed={p['seed']} replica={i}")
            for rep in reports[1:]:
                if not rep.holds():
                    violations.append(rep.to_json_dict())
                rel = (float(rep.upper) - float(rep.lower)) / max(float(rep.value), 1.0)
                gaps.setdefault((q, rep.depth), []).append(rel)
    records, plot_rows = [], []
    h = config_hash({"subcommand": "verify-sandwich", **p})
    for (q, L), vals in sorted(gaps.items()):
        mean, se = mc._mean_stderr(vals)
        records.append(
            mc.EstimateRecord(
                name=f"sandwich_rel_gap_L{L}", d=p["d"], q=float(q), n=p["n"], xi=None,
                samples=len(vals), estimate=mean, stderr=se, master_seed=p["seed"], config_hash=h,
            )
        )
        plot_rows.append((float(L), mean, se))
    if violations:
        raise SandwichViolation(
            f"{len(violations)} sandwich violations (first: {violations[0]})"
        )
    xs, ys, es = zip(*plot_rows)
    return records, (xs, ys, es), {"paths": p["paths"], "violations": 0}


def _run_gamma(p, outdir):
    res = mc.estimate_gamma(p["d"], p["horizon"], p["samples"], p["seed"])
    recs = list(res.ladder) + [res.record]
    xs = [float(r.n) for r in res.ladder]
    ys = [r.estimate for r in res.ladder]
    es = [r.stderr for r in res.ladder]
    return recs, (xs, ys, es), {"rho_hat": res.rho_hat, "rho_upper": res.rho_upper}


def _run_kappa(p, outdir):
    kap, rng = mc.estimate_kappa(p["q"], p["d"], p["n"], p["samples"], p["seed"])
    extras = {}
    if p.get("rho_ref") is not None:
        pred = kappa_predict(p["q"], p["d"], p["rho_ref"])
        extras = {"kappa_predict": pred, "predict_minus_estimate": pred - kap.estimate}
    plot = ([float(p["n"])], [kap.estimate], [kap.stderr])
    return [kap, rng], plot, extras


def _run_variance(p, outdir):
    recs = mc.variance_scan(p["q"], p["d"], p["n_grid"], p["samples"], p["seed"])
    plot = ([float(r.n) for r in recs], [r.estimate for r in recs], [r.stderr for r in recs])
    return recs, plot, {"normalization": recs[0].name}


def _run_clt(p, outdir):
    res = mc.clt_test(p["q"], p["d"], p["n"], p["samples"], p["seed"])
    z = np.sort(res.standardized)
    m = z.size
    from scipy import stats as st

    theo = st.norm.ppf((np.arange(1, m + 1) - 0.5) / m)
    step = max(1, m // 512)
    plot = (theo[::step], z[::step], np.zeros_like(z[::step]))
    return (
        [res.kappa_record, res.v_record],
        plot,
        {"ks_statistic": res.ks_statistic, "p_value": res.p_value,
         "kappa_hat": res.kappa_hat, "v_hat": res.v_hat},
    )


def _run_tail(p, outdir):
    res = mc.tail_estimate(p["q"], p["d"], p["n"], p["xi"], p["samples"], p["seed"])
    plot = ([p["xi"]], [res.record.estimate], [res.record.stderr])
    return [res.record], plot, {
        "certificate": res.certificate,
        "wilson": list(res.wilson),
        "mean_estimate": res.mean_estimate,
    }


def _run_pinned(p, outdir):
    res = mc.pinned_tail_check(
        p["d"], p["n"], p["k_grid"], p["samples"], p["seed"], rho_ref=p.get("rho_ref")
    )
    h = config_hash({"subcommand": "pinned", **p})
    rec = mc.EstimateRecord(
        name="pinned_log_slope", d=p["d"], q=None, n=p["n"], xi=None, samples=p["samples"],
        estimate=res.slope, stderr=res.slope_se, master_seed=p["seed"], config_hash=h,
    )
    plot = (res.curve.x, res.curve.values, res.curve.stderr)
    return [rec], plot, {
        "rho_hat": res.rho_hat, "rho_upper": res.rho_upper,
        "reference_slope": res.curve.reference_slope, "envelope_ok": res.envelope_ok,
    }


def _run_confined(p, outdir):
    res = mc.confined_sampler(p["d"], p["n"], p["radius"], p["samples"], p["seed"])
    pe = res.record.estimate
    logp = math.log(pe) if pe > 0 else float("-inf")
    se_logp = res.record.stderr / pe if pe > 0 else float("inf")
    plot = ([p["n"] / p["radius"] ** 2], [logp], [se_logp])
    return [res.record], plot, {
        "pilot_estimate": res.pilot_estimate,
        "accepted": res.accepted,
        "conditional_qnorm": {str(k): list(v) for k, v in res.cond_qnorm.items()},
        "conditional_range": list(res.cond_range),
        "holder_checked": res.holder_checked,
    }


def _run_intersection(p, outdir):
    res = mc.intersection_decay_scan(p["d"], p["n"], p["k_grid"], p["samples"], p["seed"])
    kc = res.k_curve
    write_plot_data(outdir / "intersection-scan_xtail_plot.csv",
                    res.x_curve.x, res.x_curve.values, res.x_curve.stderr)
    return [], (kc.x, kc.values, kc.stderr), {
        "k_slope": res.k_slope, "x_slope": res.x_slope,
    }


def _run_level_profile(p, outdir):
    res = mc.level_profile(
        p["q"], p["d"], p["n"], p["samples"], p["seed"], top_percent=p.get("top_percent")
    )
    fr = res.frac_conditional if res.frac_conditional is not None else res.frac_unconditional
    plot = (res.levels.astype(float), fr, np.zeros(fr.size))
    return [], plot, {
        "argmax_unconditional": res.argmax_unconditional,
        "argmax_conditional": res.argmax_conditional,
        "frac_unconditional": [float(x) for x in res.frac_unconditional],
        "frac_conditional": None if res.frac_conditional is None
        else [float(x) for x in res.frac_conditional],
    }


def _run_crossover(p, outdir):
    rows = []
    for d in range(p["d_min"], p["d_max"] + 1):
        qc = critical_q(d)
        cx = crossover(d)
        a, b = strategy_costs(qc, d)
        rows.append({
            "d": d, "critical_q": f"{qc.numerator}/{qc.denominator}", "value": float(qc),
            "crossover_equal": cx == qc, "A_n_exponent": float(a.n_exponent),
            "B_n_exponent": float(b.n_exponent),
        })
    xs = [r["d"] for r in rows]
    ys = [r["value"] for r in rows]
    return [], (xs, ys, [0.0] * len(xs)), {"table": rows}


_RUNNERS = {
    "simulate": _run_simulate,
    "verify-sandwich": _run_verify_sandwich,
    "estimate-gamma": _run_gamma,
    "estimate-kappa": _run_kappa,
    "variance-scan": _run_variance,
    "clt-test": _run_clt,
    "tail": _run_tail,
    "pinned": _run_pinned,
    "confined": _run_confined,
    "intersection-scan": _run_intersection,
    "level-profile": _run_level_profile,
    "shape-crossover": _run_crossover,
}


def run_experiment(config: ExperimentConfig) -> int:
    """Dispatch a validated config; write CSV/JSON/plot artifacts.

    Returns the process exit code: nonzero exactly when a pathwise
    invariant (sandwich, Holder, mass, level bounds) was violated.
    """
    outdir = config.outdir
    outdir.mkdir(parents=True, exist_ok=True)
    name = config.subcommand
    summary = {
        "schema_version": SCHEMA_VERSION,
        "subcommand": name,
        "config": {k: v for k, v in config.params.items()},
        "config_hash": config.hash,
        "partial": False,
    }
    code = 0
    records, plot, extras = [], None, {}
    try:
        records, plot, extras = _RUNNERS[name](config.params, outdir)
    except (SandwichViolation, PathwiseInvariantError) as exc:
        summary["invariant_violation"] = str(exc)
        code = 1
    except InfeasibleConfigError as exc:
        summary["infeasible"] = str(exc)
        summary["pre_estimate"] = exc.pre_estimate
    except CapacityError as exc:
        summary["partial"] = True
        summary["resource_limit"] = str(exc)
    summary["results"] = extras
    write_records(records, outdir / f"{name}.csv", "csv")
    write_records(records, outdir / f"{name}.json", "json")
    if plot is not None:
        write_plot_data(outdir / f"{name}_plot.csv", *plot)
    (outdir / f"{name}_summary.json").write_text(
        json.dumps(summary, indent=2, default=str) + "\n", encoding="utf-8", newline="\n"
    )
    return code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="walklab",
        description="Self-intersection local-time laboratory for transient lattice walks",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for cmd, schema in SCHEMAS.items():
        sp = sub.add_parser(cmd)
        sp.add_argument("--config", default=None, help="flat key=value config file")
        sp.add_argument("--outdir", default=None, help=f"output directory (or ${ENV_OUTDIR})")
        for pname, spec in schema.items():
            sp.add_argument(f"--{pname.replace('_', '-')}", dest=pname, default=None, type=str,
                            help=spec.help or spec.kind)
    args = parser.parse_args(argv)
    overrides = {
        k: v
        for k, v in vars(args).items()
        if k not in ("subcommand", "config") and v is not None
    }
    try:
        config = load_config(args.subcommand, args.config, overrides)
        return run_experiment(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
