"""Simulation harness: ground-truth generation, trials, scaling studies, reports."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy import stats

from .engine import CompletionConfig, DenseRule, GeneralRule, LambdaSpec, run
from .sampling import (
    NoiseModel,
    SamplingModel,
    check_rng,
    draw_mask,
    feasibility_check,
    marginals,
    observe,
    weighted_norm_sq,
)
from .probe import USVT_ETA, usvt_baseline

logger = logging.getLogger(__name__)

ESTIMATORS = ("svt", "usvt")
MAX_DIM = 500


def generate_low_rank(m1: int, m2: int, r: int, a: float, rng) -> np.ndarray:
    """Gaussian-factor matrix ``G1 @ G2.T`` of rank r, rescaled so its sup-norm is exactly ``a``."""
    if not 1 <= r <= min(m1, m2):
        raise ValueError(f"need 1 <= r <= min(m1, m2), got r={r}")
    if not a > 0:
        raise ValueError(f"a must be positive, got {a}")
    rng = check_rng(rng)
    M = rng.standard_normal((m1, r)) @ rng.standard_normal((m2, r)).T
    M = (M * a) / np.abs(M).max()
    top = np.abs(M).max()
    while top != a:
        M = M * (a / top)
        top = np.abs(M).max()
    return M


def near_uniform_probs(shape, p: float, mu1: float, mu2: float, rng) -> np.ndarray:
    """Two-level probabilities in ``{mu2 p, mu1 p}`` with mean as close to ``p`` as the grid allows."""
    if not (0 < mu2 <= 1 <= mu1):
        raise ValueError(f"need 0 < mu2 <= 1 <= mu1, got mu1={mu1}, mu2={mu2}")
    if mu1 * p > 1:
        raise ValueError(f"mu1 * p = {mu1 * p} exceeds 1")
    n = shape[0] * shape[1]
    k = round(n * (1 - mu2) / (mu1 - mu2)) if mu1 > mu2 else 0
    probs = np.full(n, mu2 * p)
    probs[rng.permutation(n)[:k]] = mu1 * p
    return probs.reshape(shape)


@dataclass(frozen=True)
class ExperimentSpec:
    dims: tuple = (60, 60)
    rank_grid: tuple = (2,)
    p_grid: tuple = (0.5,)
    noise: NoiseModel = field(default_factory=lambda: NoiseModel.scaled_rademacher(0.01))
    a: float = 1.0
    lambda_rule: LambdaSpec = "dense"
    replicates: int = 20
    seed: int = 0
    estimators: tuple = ("svt",)
    sampling: dict = field(default_factory=lambda: {"kind": "uniform"})
    max_iters: int = 5000

    def __post_init__(self):
        m1, m2 = self.dims
        if m1 < 1 or m2 < 1 or max(m1, m2) > MAX_DIM:
            raise ValueError(f"dims must lie in [1, {MAX_DIM}], got {self.dims}")
        for r in self.rank_grid:
            if not 1 <= r <= min(m1, m2):
                raise ValueError(f"rank {r} outside [1, {min(m1, m2)}]")
        for p in self.p_grid:
            if not 0 < p <= 1:
                raise ValueError(f"p = {p} outside (0, 1]")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        bad = set(self.estimators) - set(ESTIMATORS)
        if bad or not self.estimators:
            raise ValueError(f"estimators must be a non-empty subset of {ESTIMATORS}")
        if self.sampling.get("kind") not in ("uniform", "near_uniform"):
            raise ValueError(f"unknown sampling kind {self.sampling.get('kind')!r}")
        if not self.a > 0:
            raise ValueError("a must be positive")

    def resolved_rule(self) -> LambdaSpec:
        rule = self.lambda_rule
        if rule == "dense":
            return DenseRule(self.noise.b)
        if rule == "general":
            return GeneralRule(self.noise.sigma, self.noise.b)
        if isinstance(rule, (int, float, DenseRule, GeneralRule)):
            return rule
        raise ValueError(f"unknown lambda rule {rule!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        d = dict(d)
        kw = {}
        if "dims" in d:
            kw["dims"] = tuple(int(x) for x in d.pop("dims"))
        for key in ("rank_grid",):
            if key in d:
                kw[key] = tuple(int(x) for x in d.pop(key))
        if "p_grid" in d:
            kw["p_grid"] = tuple(float(x) for x in d.pop("p_grid"))
        if "estimators" in d:
            kw["estimators"] = tuple(d.pop("estimators"))
        if "noise" in d:
            kw["noise"] = NoiseModel.from_dict(d.pop("noise"))
        if "lambda_rule" in d:
            rule = d.pop("lambda_rule")
            if isinstance(rule, dict):
                kind = rule.get("rule")
                if kind == "dense":
                    rule = DenseRule(float(rule["b"])) if "b" in rule else "dense"
                elif kind == "general":
                    rule = GeneralRule(float(rule["sigma"]), float(rule["b"]), float(rule.get("c_star", 3.0)))
                else:
                    raise ValueError(f"unknown lambda rule {kind!r}")
            kw["lambda_rule"] = rule
        for key in ("a",):
            if key in d:
                kw[key] = float(d.pop(key))
        for key in ("replicates", "seed", "max_iters"):
            if key in d:
                kw[key] = int(d.pop(key))
        if "sampling" in d:
            kw["sampling"] = dict(d.pop("sampling"))
        if d:
            raise ValueError(f"unknown spec keys: {sorted(d)}")
        return cls(**kw)

    def to_dict(self) -> dict:
        rule = self.lambda_rule
        if isinstance(rule, DenseRule):
            rule = {"rule": "dense", "b": rule.b}
        elif isinstance(rule, GeneralRule):
            rule = {"rule": "general", "sigma": rule.sigma, "b": rule.b, "c_star": rule.c_star}
        return {
            "dims": list(self.dims),
            "rank_grid": list(self.rank_grid),
            "p_grid": list(self.p_grid),
            "noise": self.noise.to_dict(),
            "a": self.a,
            "lambda_rule": rule,
            "replicates": self.replicates,
            "seed": self.seed,
            "estimators": list(self.estimators),
            "sampling": self.sampling,
            "max_iters": self.max_iters,
        }


@dataclass
class TrialRecord:
    """One estimator on one replicate. ``threshold`` is lambda for svt and the
    hard singular-value cut for usvt."""

    r: int
    p: float
    replicate: int
    estimator: str
    mse: float
    weighted_err: float
    iterations: int
    converged: bool
    threshold: float
    feasible: bool
    error: str = ""
    wall_time: float = 0.0


# wall_time is left out of the CSV so reports are reproducible bit for bit
RECORD_COLUMNS = [f.name for f in fields(TrialRecord) if f.name != "wall_time"]


@dataclass
class SlopeFit:
    estimator: str
    axis: str
    fixed: float
    slope: float
    stderr: float
    n_points: int


@dataclass
class ReportBundle:
    records: list
    slope_fits: list
    medians: list
    spec: dict | None = None


def trial_seed(seed: int, r: int, p: float, replicate: int) -> np.random.SeedSequence:
    """Independent, reproducible stream for one grid point and replicate."""
    return np.random.SeedSequence(entropy=seed, spawn_key=(int(r), int(round(p * 1e9)), int(replicate)))


def _sampling_model(spec: ExperimentSpec, p: float, rng) -> SamplingModel:
    if spec.sampling["kind"] == "uniform":
        return SamplingModel.uniform(p, spec.dims)
    probs = near_uniform_probs(spec.dims, p, float(spec.sampling.get("mu1", 2.0)),
                               float(spec.sampling.get("mu2", 0.5)), rng)
    return SamplingModel.general(probs)


def run_trial(spec: ExperimentSpec, r: int, p: float, replicate: int) -> list:
    """One replicate at grid point (r, p); one record per requested estimator.

    All estimators see the same ground truth and observations.
    """
    rng = np.random.default_rng(trial_seed(spec.seed, r, p, replicate))
    m1, m2 = spec.dims
    M0 = generate_low_rank(m1, m2, r, spec.a, rng)
    model = _sampling_model(spec, p, rng)
    feasible = feasibility_check(r, model).feasible
    mask = draw_mask(model, rng)
    Y = observe(M0, spec.noise, mask, rng)
    summary = marginals(model)

    out = []
    for est in spec.estimators:
        t0 = time.perf_counter()
        try:
            if est == "svt":
                cfg = CompletionConfig(lam=spec.resolved_rule(), a=spec.a, max_iters=spec.max_iters)
                res = run(Y, cfg, summary)
                M_hat, iters, conv, lam = res.estimate, res.iterations, res.converged, res.lam
            else:
                M_hat, iters, conv = usvt_baseline(Y, spec.a), 1, True
                lam = spec.a * USVT_ETA * math.sqrt(max(m1, m2) * len(mask) / (m1 * m2))
        except Exception as exc:
            raise RuntimeError(
                f"{est} failed at r={r}, p={p}, replicate={replicate}, seed={spec.seed}: {exc}"
            ) from exc
        D = M_hat - M0
        out.append(TrialRecord(
            r=r, p=p, replicate=replicate, estimator=est,
            mse=float(np.sum(D * D)) / (m1 * m2),
            weighted_err=weighted_norm_sq(D, model),
            iterations=int(iters), converged=bool(conv), threshold=float(lam), feasible=bool(feasible),
            wall_time=time.perf_counter() - t0,
        ))
    return out


def _failed_records(spec: ExperimentSpec, r: int, p: float, replicate: int, exc: Exception) -> list:
    return [
        TrialRecord(r, p, replicate, est, math.nan, math.nan, 0, False, math.nan, False, error=str(exc))
        for est in spec.estimators
    ]


def median_table(records) -> list:
    groups: dict = {}
    for rec in records:
        if rec.error:
            continue
        groups.setdefault((rec.estimator, rec.r, rec.p), []).append(rec)
    rows = []
    for (est, r, p), recs in sorted(groups.items()):
        rows.append({
            "estimator": est,
            "r": r,
            "p": p,
            "n": len(recs),
            "median_mse": float(np.median([x.mse for x in recs])),
            "median_weighted_err": float(np.median([x.weighted_err for x in recs])),
        })
    return rows


def fit_slopes(medians) -> list:
    """OLS slope of log median mse against log p (each fixed r) and log r (each fixed p)."""
    fits = []
    for est in sorted({m["estimator"] for m in medians}):
        rows = [m for m in medians if m["estimator"] == est]
        for axis, other in (("p", "r"), ("r", "p")):
            for fixed in sorted({m[other] for m in rows}):
                pts = sorted((m[axis], m["median_mse"]) for m in rows if m[other] == fixed)
                if len(pts) < 3:
                    continue
                x = np.log([t[0] for t in pts])
                y = np.log([t[1] for t in pts])
                lr = stats.linregress(x, y)
                fits.append(SlopeFit(est, axis, float(fixed), float(lr.slope), float(lr.stderr), len(pts)))
    return fits


def scaling_study(spec: ExperimentSpec) -> ReportBundle:
    records = []
    for r in spec.rank_grid:
        for p in spec.p_grid:
            for rep in range(spec.replicates):
                try:
                    records.extend(run_trial(spec, r, p, rep))
                except Exception as exc:
                    logger.warning("trial failed: %s", exc)
                    records.extend(_failed_records(spec, r, p, rep, exc))
    records.sort(key=lambda x: (x.r, x.p, x.replicate, ESTIMATORS.index(x.estimator)))
    medians = median_table(records)
    return ReportBundle(records, fit_slopes(medians), medians, spec.to_dict())


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("nan" if math.isnan(v) else repr(v))
    return str(v)


def emit_report(bundle: ReportBundle, out_dir) -> tuple:
    """Write ``records.csv``, ``timings.csv`` and ``summary.json`` into ``out_dir``."""
    if not bundle.records:
        raise ValueError("cannot emit a report with no records")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        rec_path = out / "records.csv"
        with open(rec_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(RECORD_COLUMNS)
            for rec in bundle.records:
                w.writerow([_fmt(getattr(rec, c)) for c in RECORD_COLUMNS])
        with open(out / "timings.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["r", "p", "replicate", "estimator", "wall_time"])
            for rec in bundle.records:
                w.writerow([rec.r, _fmt(rec.p), rec.replicate, rec.estimator, _fmt(rec.wall_time)])
        summary = {
            "protocol": "desk-scale simulation; grids and acceptance bands are this toolkit's own choices",
            "spec": bundle.spec,
            "slope_fits": [asdict(f) for f in bundle.slope_fits],
            "medians": bundle.medians,
        }
        sum_path = out / "summary.json"
        sum_path.write_text(json.dumps(summary, indent=2, sort_keys=True, allow_nan=True) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write report to {out}: {exc}") from exc
    return rec_path, sum_path


def read_records(path) -> list:
    """Parse a ``records.csv`` written by :func:`emit_report`."""
    conv = {
        "r": int, "replicate": int, "iterations": int,
        "p": float, "mse": float, "weighted_err": float, "threshold": float,
        "converged": lambda s: s == "true", "feasible": lambda s: s == "true",
        "estimator": str, "error": str,
    }
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RECORD_COLUMNS:
            raise ValueError(f"unexpected columns {reader.fieldnames}")
        return [TrialRecord(**{k: conv[k](v) for k, v in row.items()}) for row in reader]


def count_inversions(values, increasing: bool) -> int:
    """Adjacent pairs that break the expected monotone direction."""
    v = np.asarray(values, dtype=float)
    d = np.diff(v)
    return int(np.sum(d < 0)) if increasing else int(np.sum(d > 0))
