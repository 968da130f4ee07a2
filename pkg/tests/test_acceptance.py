"""Exit criteria for the toolkit, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary.
"""

import filecmp
import math
import time

import numpy as np
import pytest

from mcsvt import io
from mcsvt.bench import ExperimentSpec, emit_report, generate_low_rank, scaling_study
from mcsvt.engine import CompletionConfig, DenseRule, run
from mcsvt.linalg import IndexSet, numerical_rank, soft_threshold
from mcsvt.probe import build_packing_set, check_packing, check_sigma_bound, estimate_expected_sigma_r
from mcsvt.sampling import NoiseModel, ObservationSet, SamplingModel, draw_mask, marginals, observe

from conftest import ACCEPTANCE_LINES
from oracles import prox_objective, subgradient_prox

SEED = 20240601
# desk-scale protocol for the rate and baseline suites
SCALING_NOISE = NoiseModel.scaled_rademacher(0.01)


def report(num, ok, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {num:>2}: {detail}")
    print(ACCEPTANCE_LINES[-1])


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


def test_c01_non_expansive():
    g = np.random.default_rng(SEED + 1)
    worst = -math.inf
    violations = 0
    with Timer() as t:
        for lam in (0.1, 1.0, 10.0):
            for _ in range(1000):
                W1, W2 = g.standard_normal((8, 6)), g.standard_normal((8, 6))
                lhs = np.linalg.norm(soft_threshold(W1, lam) - soft_threshold(W2, lam))
                gap = lhs - np.linalg.norm(W1 - W2)
                worst = max(worst, gap)
                violations += gap > 1e-9
    ok = violations == 0 and t.elapsed < 10
    report(1, ok, f"non-expansive, {violations} violations / 3000, worst gap {worst:.2e}, {t.elapsed:.1f}s")
    assert violations == 0
    assert t.elapsed < 10


def test_c02_prox_optimality():
    g = np.random.default_rng(SEED + 2)
    fails_oracle = fails_perturb = 0
    worst = -math.inf
    with Timer() as t:
        for _ in range(100):
            W = g.standard_normal((5, 5))
            lam = float(g.uniform(0.1, 2.0))
            S = soft_threshold(W, lam)
            f_star = prox_objective(W, S, lam)
            _, f_oracle = subgradient_prox(W, lam, iters=1500)
            worst = max(worst, f_star - f_oracle)
            fails_oracle += f_star > f_oracle + 1e-6
            for _ in range(200):
                D = g.standard_normal((5, 5))
                D *= 0.1 / np.linalg.norm(D)
                fails_perturb += f_star > prox_objective(W, S + D, lam)
    ok = fails_oracle == 0 and fails_perturb == 0 and t.elapsed < 30
    report(2, ok, f"prox optimal, oracle fails {fails_oracle}, perturbation fails {fails_perturb}, "
                  f"max f(S)-f(oracle) {worst:.2e}, {t.elapsed:.1f}s")
    assert fails_oracle == 0 and fails_perturb == 0
    assert t.elapsed < 30


def test_c03_convergence_monotonicity():
    g = np.random.default_rng(SEED + 3)
    bad_fro = bad_q = bad_final = 0
    worst_fro = worst_q = -math.inf
    max_iter = 0
    with Timer() as t:
        for k in range(50):
            p = (0.3, 0.7)[k % 2]
            M0 = generate_low_rank(60, 60, 2, 1.0, g)
            model = SamplingModel.uniform(p, (60, 60))
            Y = observe(M0, SCALING_NOISE, draw_mask(model, g), g)
            cfg = CompletionConfig(lam=DenseRule(SCALING_NOISE.b), a=1.0, stopping="fixed_point",
                                   fro_tol=1e-6, max_iters=5000)
            res = run(Y, cfg, marginals(model))
            d_fro = np.diff(res.trace.delta_fro)
            d_q = np.diff(res.trace.q_value)
            worst_fro = max(worst_fro, d_fro.max(initial=-math.inf))
            worst_q = max(worst_q, d_q.max(initial=-math.inf))
            bad_fro += bool(np.any(d_fro > 1e-12))
            bad_q += bool(np.any(d_q > 1e-12))
            bad_final += not res.trace.delta_fro[-1] < 1e-6
            max_iter = max(max_iter, res.iterations)
    ok = bad_fro == bad_q == bad_final == 0 and t.elapsed < 300
    report(3, ok, f"monotone traces, fro/q/final failures {bad_fro}/{bad_q}/{bad_final}, "
                  f"max increase fro {worst_fro:.1e} q {worst_q:.1e}, max iters {max_iter}, {t.elapsed:.1f}s")
    assert bad_fro == 0 and bad_q == 0 and bad_final == 0
    assert t.elapsed < 300


def test_c04_exact_recovery():
    g = np.random.default_rng(SEED + 4)
    worst_err, worst_it = 0.0, 0
    with Timer() as t:
        for _ in range(20):
            m1, m2 = (int(x) for x in g.integers(2, 80, size=2))
            r = int(g.integers(1, min(m1, m2) + 1))
            M0 = generate_low_rank(m1, m2, r, 1.0, g)
            Y = ObservationSet.from_dense(M0, IndexSet.full(m1, m2))
            res = run(Y, CompletionConfig(lam=1e-8, a=1.0))
            worst_err = max(worst_err, np.linalg.norm(res.estimate - M0) / np.linalg.norm(M0))
            worst_it = max(worst_it, res.iterations)
    ok = worst_err <= 1e-6 and worst_it <= 2 and t.elapsed < 10
    report(4, ok, f"exact recovery, worst rel err {worst_err:.1e}, worst iters {worst_it}, {t.elapsed:.1f}s")
    assert worst_err <= 1e-6 and worst_it <= 2
    assert t.elapsed < 10


P_SPEC = ExperimentSpec(dims=(60, 60), rank_grid=(2,), p_grid=(0.2, 0.3, 0.45, 0.6, 0.8), noise=SCALING_NOISE,
                        a=1.0, lambda_rule="dense", replicates=20, seed=SEED, estimators=("svt",))
R_SPEC = ExperimentSpec(dims=(60, 60), rank_grid=(1, 2, 4, 8), p_grid=(0.5,), noise=SCALING_NOISE,
                        a=1.0, lambda_rule="dense", replicates=20, seed=SEED, estimators=("svt",))
BASE_SPEC = ExperimentSpec(dims=(60, 60), rank_grid=(2,), p_grid=(0.5,), noise=SCALING_NOISE,
                           a=1.0, lambda_rule="dense", replicates=50, seed=SEED, estimators=("svt", "usvt"))


@pytest.fixture(scope="module")
def outputs(tmp_path_factory):
    """Report directories of criteria 5-10, for the determinism rerun."""
    return {"root": tmp_path_factory.mktemp("acceptance"), "runs": {}}


def _slope(bundle, axis):
    fits = [f for f in bundle.slope_fits if f.axis == axis and f.estimator == "svt"]
    assert len(fits) == 1
    return fits[0]


def test_c05_rate_in_p(outputs):
    with Timer() as t:
        bundle = scaling_study(P_SPEC)
    emit_report(bundle, outputs["root"] / "c05")
    outputs["runs"]["c05"] = lambda d: emit_report(scaling_study(P_SPEC), d)
    fit = _slope(bundle, "p")
    med = [m["median_mse"] for m in bundle.medians]
    ok = -1.35 <= fit.slope <= -0.65 and t.elapsed < 600
    report(5, ok, f"p-slope {fit.slope:.3f} +/- {fit.stderr:.3f} (band [-1.35, -0.65]), medians "
                  + ", ".join(f"{x:.2e}" for x in med) + f", {t.elapsed:.1f}s")
    assert -1.35 <= fit.slope <= -0.65
    assert t.elapsed < 600


def test_c06_rate_in_r(outputs):
    with Timer() as t:
        bundle = scaling_study(R_SPEC)
    emit_report(bundle, outputs["root"] / "c06")
    outputs["runs"]["c06"] = lambda d: emit_report(scaling_study(R_SPEC), d)
    fit = _slope(bundle, "r")
    med = [m["median_mse"] for m in bundle.medians]
    ok = 0.65 <= fit.slope <= 1.35 and t.elapsed < 600
    report(6, ok, f"r-slope {fit.slope:.3f} +/- {fit.stderr:.3f} (band [0.65, 1.35]), medians "
                  + ", ".join(f"{x:.2e}" for x in med) + f", {t.elapsed:.1f}s")
    assert 0.65 <= fit.slope <= 1.35
    assert t.elapsed < 600


def _sigma_probe():
    model = SamplingModel.uniform(0.3, (100, 100))
    noise = NoiseModel.truncated_gaussian(1.0, 2.0)
    return check_sigma_bound(model, noise, math.sqrt(2 * math.log(200)), 3.0, 200, SEED + 7)


def test_c07_sigma_concentration(outputs):
    with Timer() as t:
        rep = _sigma_probe()
    io.write_probe_json(rep, outputs["root"] / "c07.json")
    outputs["runs"]["c07"] = lambda d: io.write_probe_json(_sigma_probe(), d)
    ok = rep.violations <= 2 and t.elapsed < 120
    report(7, ok, f"sigma bound {rep.bound:.2f}, violations {rep.violations}/200, mean opnorm "
                  f"{rep.mean_opnorm:.2f}, calibrated c* {rep.calibrated_constant:.3f}, {t.elapsed:.1f}s")
    assert rep.violations <= 2
    assert t.elapsed < 120


def _sigma_r_grid():
    g = np.random.default_rng(SEED + 8)
    return [(m, p, estimate_expected_sigma_r(SamplingModel.uniform(p, (m, m)), 100, g))
            for m in (50, 100) for p in (0.2, 0.5, 1.0)]


def test_c08_sigma_r_expectation(outputs):
    with Timer() as t:
        grid = _sigma_r_grid()
    (outputs["root"] / "c08").mkdir()
    for m, p, rep in grid:
        io.write_probe_json(rep, outputs["root"] / "c08" / f"m{m}_p{p}.json")

    def rerun(d):
        d.mkdir()
        for m, p, rep in _sigma_r_grid():
            io.write_probe_json(rep, d / f"m{m}_p{p}.json")

    outputs["runs"]["c08"] = rerun
    worst = max(rep.ratio_to_bound for _, _, rep in grid)
    ok = worst <= 4 and t.elapsed < 120
    report(8, ok, "E||Sigma_R|| ratios " + ", ".join(f"({m},{p}):{rep.ratio_to_bound:.2f}" for m, p, rep in grid)
           + f", max {worst:.2f} <= 4, {t.elapsed:.1f}s")
    assert worst <= 4
    assert t.elapsed < 120


def _packing():
    return build_packing_set(16, 16, 2, 0.5, 1.0, 1.0, 1.0, 20, SEED + 9)


def test_c09_packing(outputs):
    with Timer() as t:
        ps = _packing()
        chk = check_packing(ps)
        ranks = [numerical_rank(A) for A in ps.members]
        d = [float(np.sum((A - B) ** 2)) for i, A in enumerate(ps.members) for B in ps.members[i + 1:]]
    io.write_packing_set(ps, outputs["root"] / "c09")
    outputs["runs"]["c09"] = lambda d_: io.write_packing_set(_packing(), d_)
    sep = (1 / 16) * 1.0 * 16 * 16 * 2 / (0.5 * 16)
    ok = (len(ps) == 20 and max(ranks) <= 2 and chk["max_sup"] <= 1.0 and chk["two_valued"]
          and len(d) == 190 and min(d) >= sep and ps.separation == pytest.approx(sep) and t.elapsed < 30)
    report(9, ok, f"packing: {len(ps)} members, max rank {max(ranks)}, max sup {chk['max_sup']:.4f}, "
                  f"min sq dist {min(d):.3f} >= {sep:.3f} over {len(d)} pairs, {t.elapsed:.1f}s")
    assert len(ps) == 20 and len(d) == 190
    assert max(ranks) <= 2 and chk["max_sup"] <= 1.0 and chk["two_valued"] and chk["contains_zero"]
    assert min(d) >= sep
    assert t.elapsed < 30


def test_c10_baseline_dominance(outputs):
    with Timer() as t:
        bundle = scaling_study(BASE_SPEC)
    emit_report(bundle, outputs["root"] / "c10")
    outputs["runs"]["c10"] = lambda d: emit_report(scaling_study(BASE_SPEC), d)
    med = {m["estimator"]: m["median_mse"] for m in bundle.medians}
    ok = med["svt"] < med["usvt"] and t.elapsed < 300
    report(10, ok, f"median mse svt {med['svt']:.3e} vs usvt {med['usvt']:.3e}, {t.elapsed:.1f}s")
    assert med["svt"] < med["usvt"]
    assert t.elapsed < 300


def test_c11_determinism(outputs):
    root = outputs["root"]
    expected = {"c05", "c06", "c07", "c08", "c09", "c10"}
    if set(outputs["runs"]) != expected:
        pytest.skip("criteria 5-10 must run first in the same session")
    rerun_root = root / "rerun"
    rerun_root.mkdir()
    mismatches = []
    for name, fn in sorted(outputs["runs"].items()):
        first = root / (name + ".json" if name == "c07" else name)
        second = rerun_root / (name + ".json" if name == "c07" else name)
        fn(second)
        if first.is_dir():
            files = sorted(p.name for p in first.iterdir() if p.name != "timings.csv")
            match, diff, errs = filecmp.cmpfiles(first, second, files, shallow=False)
            if diff or errs:
                mismatches.append(f"{name}:{diff + errs}")
        elif first.read_bytes() != second.read_bytes():
            mismatches.append(name)
    report(11, not mismatches, f"bit-identical reruns of criteria 5-10, mismatches {mismatches or 'none'}")
    assert not mismatches
