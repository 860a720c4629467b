"""Estimate records and bit-exact output formats.

CSV schema (fixed column order, UTF-8, LF line endings, full decimal
round-trip precision):

    name,d,q,n,xi,samples,estimate,stderr,seed,config_hash

JSON output mirrors the same fields and adds ``schema_version``.
Writing then reading reproduces every field exactly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1
CSV_COLUMNS = ("name", "d", "q", "n", "xi", "samples", "estimate", "stderr", "seed", "config_hash")


def config_hash(params: dict) -> str:
    """Stable 64-bit hex digest of a parameter mapping (key order irrelevant)."""
    canon = json.dumps(params, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class EstimateRecord:
    """A Monte Carlo point estimate with its reproducibility metadata.

    ``(master_seed, params)`` fully determine a rerun; estimates are
    reduced in fixed order so reruns are bitwise identical.
    """

    name: str
    d: int
    q: float | None
    n: int | None
    xi: float | None
    samples: int
    estimate: float
    stderr: float
    master_seed: int
    config_hash: str

    def __post_init__(self):
        if self.samples < 2:
            raise ValueError("an estimate needs samples >= 2")
        if self.stderr < 0:
            raise ValueError("stderr must be nonnegative")


@dataclass(frozen=True, eq=False)
class TailCurve:
    """A grid of estimates indexed by a threshold (k or t).

    ``kind`` is "probability" for empirical tail probabilities (values
    in [0, 1], nonincreasing up to noise) or "expectation" for level-set
    expectations.  ``reference_slope`` carries the comparison slope.
    """

    name: str
    kind: str
    x: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    reference_slope: float | None = None

    def __post_init__(self):
        if self.kind not in ("probability", "expectation"):
            raise ValueError("kind must be 'probability' or 'expectation'")
        if self.kind == "probability":
            if np.any(self.values < 0) or np.any(self.values > 1):
                raise ValueError("probabilities must lie in [0, 1]")
            slack = 5.0 * (self.stderr[:-1] + self.stderr[1:])
            if np.any(np.diff(self.values) > slack):
                raise ValueError("tail curve increases beyond statistical slack")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def record_row(rec: EstimateRecord) -> str:
    vals = (
        rec.name,
        _fmt(rec.d),
        _fmt(rec.q),
        _fmt(rec.n),
        _fmt(rec.xi),
        _fmt(rec.samples),
        _fmt(rec.estimate),
        _fmt(rec.stderr),
        _fmt(rec.master_seed),
        rec.config_hash,
    )
    return ",".join(vals)


def records_to_csv_text(records) -> str:
    lines = [",".join(CSV_COLUMNS)]
    lines.extend(record_row(r) for r in records)
    return "\n".join(lines) + "\n"


def write_records(records, path, fmt: str = "csv") -> Path:
    """Write records as CSV or JSON; returns the path written."""
    path = Path(path)
    if fmt == "csv":
        path.write_text(records_to_csv_text(records), encoding="utf-8", newline="\n")
    elif fmt == "json":
        payload = {
            "schema_version": SCHEMA_VERSION,
            "records": [
                {
                    "name": r.name,
                    "d": r.d,
                    "q": r.q,
                    "n": r.n,
                    "xi": r.xi,
                    "samples": r.samples,
                    "estimate": r.estimate,
                    "stderr": r.stderr,
                    "seed": r.master_seed,
                    "config_hash": r.config_hash,
                }
                for r in records
            ],
        }
        path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8", newline="\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return path


def _parse_opt_int(s: str):
    return None if s == "" else int(s)


def _parse_opt_float(s: str):
    return None if s == "" else float(s)


def read_records_csv(path) -> list[EstimateRecord]:
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.split("\n") if ln]
    if lines[0] != ",".join(CSV_COLUMNS):
        raise ValueError("unexpected CSV header")
    out = []
    for ln in lines[1:]:
        f = ln.split(",")
        out.append(
            EstimateRecord(
                name=f[0],
                d=int(f[1]),
                q=_parse_opt_float(f[2]),
                n=_parse_opt_int(f[3]),
                xi=_parse_opt_float(f[4]),
                samples=int(f[5]),
                estimate=float(f[6]),
                stderr=float(f[7]),
                master_seed=int(f[8]),
                config_hash=f[9],
            )
        )
    return out


def read_records_json(path) -> list[EstimateRecord]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return [
        EstimateRecord(
            name=r["name"],
            d=r["d"],
            q=r["q"],
            n=r["n"],
            xi=r["xi"],
            samples=r["samples"],
            estimate=r["estimate"],
            stderr=r["stderr"],
            master_seed=r["seed"],
            config_hash=r["config_hash"],
        )
        for r in payload["records"]
    ]


def write_plot_data(path, x, y, err) -> Path:
    """Generic x/y/err plot rows, consumable without transformation."""
    path = Path(path)
    lines = ["x,y,err"]
    for xi_, yi, ei in zip(x, y, err):
        lines.append(f"{_fmt(float(xi_))},{_fmt(float(yi))},{_fmt(float(ei))}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return path
