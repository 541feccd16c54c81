"""Acceptance criteria C1-C11, one pass/fail line each (echoed in the terminal summary)."""
import csv
import os
import subprocess
import sys

import numpy as np
import pytest

from bgformula.config import load_config
from bgformula.core import always_treat, never_treat, point_mass, threshold_rule
from bgformula.gformula import contrast, summarize
from bgformula.oracle import plugin_gformula
from bgformula.pipeline import estimate_all
from bgformula.scores import balance_by_score
from bgformula.simulator import MixedDgpConfig, Sim51Config, null_dgp, simulate, true_risk

from conftest import FIXTURES, record, toy_config

LIVE_C1 = os.environ.get("BGFORMULA_LIVE_C1") == "1"
BART_LABELS = ("BART-BS", "BART-Cov", "BART-Cov-BS")


# -- C1: relative bias and RMSE ordering on the sim51 benchmark ------------------------

def _c1_rows(truth):
    if LIVE_C1:
        from bgformula.benchmark import benchmark_csv, run_benchmark
        cfg = load_config(FIXTURES / "c1_benchmark.ini")
        text = benchmark_csv(run_benchmark(cfg, truth["risk"], truth["se"]))
    else:
        text = (FIXTURES / "c1_benchmark.csv").read_text()
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


@pytest.mark.slow
def test_c1_bart_beats_parametric(sim51_truth):
    rows = _c1_rows(sim51_truth)
    get = {(r["estimator"], int(r["t_star"])): r for r in rows}
    assert int(rows[0]["n_reps"]) == 20
    par = {t: get["Parametric", t] for t in range(1, 6)}
    bias_ok = all(abs(float(get[b, 5]["rel_bias"])) < abs(float(par[5]["rel_bias"]))
                  for b in BART_LABELS)
    rmse_ok = all(float(get[b, t]["rmse"]) <= float(par[t]["rmse"])
                  for b in BART_LABELS for t in (3, 4, 5))
    parts = []
    for e in BART_LABELS + ("Parametric",):
        rm = ",".join(f"{float(get[e, t]['rmse']):.3f}" for t in (3, 4, 5))
        parts.append(f"{e}: |rb5|={abs(float(get[e, 5]['rel_bias'])):.3f} rmse3-5={rm}")
    detail = "; ".join(parts)
    record("C1", bias_ok and rmse_ok, ("live " if LIVE_C1 else "frozen ") + detail)
    assert bias_ok and rmse_ok


def test_c1_fixture_matches_its_raw_replicates(sim51_truth):
    from bgformula.benchmark import BenchmarkResult, benchmark_csv
    with open(FIXTURES / "raw_c1_benchmark.csv") as fh:
        raw = list(csv.DictReader(fh))
    labels = tuple(dict.fromkeys(r["estimator"] for r in raw))
    est = np.zeros((20, len(labels), 1, 5))
    for r in raw:
        est[int(r["rep"]), labels.index(r["estimator"]), 0, int(r["t_star"]) - 1] = float(r["estimate"])
    res = BenchmarkResult(labels, ("natural",), np.array([sim51_truth["risk"]]),
                          np.array([sim51_truth["se"]]), est)
    assert benchmark_csv(res) == (FIXTURES / "c1_benchmark.csv").read_text()


# -- C2, C3: sim51 calibration --------------------------------------------------------

def test_c2a_censoring_psi3():
    s = simulate(Sim51Config(n=10_000, psi_c=3, seed=0)).summary()
    ok = 0.17 <= s["censored"] <= 0.23
    record("C2a", ok, f"psi_c=3 censoring {100 * s['censored']:.1f}% (window 17-23%)")
    assert ok


@pytest.mark.xfail(strict=True, reason="censoring decreases in psi_c under the stated hazard")
def test_c2b_censoring_psi5():
    s = simulate(Sim51Config(n=10_000, psi_c=5, seed=0)).summary()
    ok = 0.47 <= s["censored"] <= 0.53
    record("C2b", ok, f"psi_c=5 censoring {100 * s['censored']:.1f}% (window 47-53%), "
                      "unattainable: -psi_c enters the censoring logit")
    assert ok


def test_c3_ever_treated():
    s = simulate(Sim51Config(n=10_000, seed=0)).summary()
    ok = 0.45 <= s["ever_treated"] <= 0.55
    record("C3", ok, f"ever treated {100 * s['ever_treated']:.1f}% (window 45-55%)")
    assert ok


# -- C4, C6, C8: toy DGP with fitted BART components ----------------------------------

TOY_REGIMES = (always_treat(2), never_treat(2), threshold_rule(0, 0.5, name="L-trig"))


@pytest.fixture(scope="module")
def toy_fits():
    data = simulate(toy_config(n=20_000, seed=21, tailoring=True))
    cfg = load_config(text="[estimate]\nspecs = bs, cov, cov-bs\n[bart]\nnum_trees = 50\n"
                           "[mcmc]\nn_iter = 1500\nn_burn = 500\nthin = 5\nseed = 3\n"
                           "[montecarlo]\nR = 100\nK = 2000\nseed = 4\n")
    regimes = TOY_REGIMES + tuple(point_mass(r) for r in TOY_REGIMES)
    draws = estimate_all(data, cfg, regimes=regimes)
    means = {(d.spec, d.regime_id): summarize(d).mean for d in draws}
    return data, means


@pytest.mark.slow
def test_c4_oracle_equivalence(toy_fits):
    data, means = toy_fits
    dgp = toy_config(tailoring=True)
    lines, ok = [], True
    for reg in TOY_REGIMES[:2]:
        plug = plugin_gformula(data, reg, 2)
        truth, _ = true_risk(reg, dgp, 2, M=1_000_000)
        bart = means["BART-Cov", reg.name][-1]
        ok &= abs(bart - plug) <= 0.02 and abs(plug - truth) <= 0.01
        lines.append(f"{reg.name}: bart={bart:.4f} plugin={plug:.4f} truth={truth:.4f}")
    record("C4", ok, "; ".join(lines))
    assert ok


@pytest.mark.slow
def test_c6_specs_agree(toy_fits):
    _, means = toy_fits
    worst = 0.0
    for reg in TOY_REGIMES:
        for i, a in enumerate(BART_LABELS):
            for b in BART_LABELS[i + 1:]:
                worst = max(worst, np.max(np.abs(means[a, reg.name] - means[b, reg.name])))
    ok = worst <= 0.03
    record("C6", ok, f"max pairwise gap {worst:.4f} over 3 regimes x 2 periods (tol 0.03)")
    assert ok


@pytest.mark.slow
def test_c8_point_mass_matches_deterministic(toy_fits):
    _, means = toy_fits
    worst = max(np.max(np.abs(means[s, r.name] - means[s, f"pm-{r.name}"]))
                for s in BART_LABELS for r in TOY_REGIMES)
    ok = worst <= 0.01
    record("C8", ok, f"max |random - deterministic| {worst:.4f} (tol 0.01)")
    assert ok


# -- C5: balance given true scores ----------------------------------------------------

def test_c5_balance_with_true_scores():
    sim = simulate(MixedDgpConfig(n=10_000, T=3, seed=0), return_truth=True)
    d = sim.data
    e = sim.p_treat * sim.p_uncens_treated
    group = (d.a == 1) & (d.c_next == 0)
    smd = balance_by_score(d.covariates, group, e)
    frac = float(np.mean(smd < 0.1))
    per_period = [float(np.mean(balance_by_score(d.covariates[d.t == t], group[d.t == t],
                                                 e[d.t == t]) < 0.1)) for t in range(3)]
    ok = frac >= 0.9
    record("C5", ok, f"{frac:.2f} of decile x confounder cells |SMD|<0.1 (need 0.90); "
                     f"per-period deciles {', '.join(f'{p:.2f}' for p in per_period)}")
    assert ok


# -- C7: g-null guard -------------------------------------------------------------------

@pytest.mark.slow
def test_c7_null_interval_covers_zero():
    # same scale as the sim51 benchmark: 200 trees, 3000/1000 MCMC, K = 2000
    cfg = load_config(text="[estimate]\nspecs = cov\nregimes = always; never\n"
                           "[bart]\nnum_trees = 200\n[mcmc]\nn_iter = 3000\nn_burn = 1000\nthin = 10\n"
                           "[montecarlo]\nR = 100\nK = 2000\n")
    covered = 0
    for rep in range(20):
        data = simulate(null_dgp(n=1000, T=3, seed=100 + rep))
        always, never = estimate_all(data, cfg, mcmc_seed=rep, mc_seed=rep)
        s = summarize(contrast(always, never), 0.95)
        covered += bool(s.lo[-1] <= 0.0 <= s.hi[-1])
    ok = covered >= 18
    record("C7", ok, f"95% interval of always-never at t*=3 covers 0 in {covered}/20 (need 18)")
    assert ok


# -- C9, C10: unit suites ----------------------------------------------------------------

def _suite(expr):
    tests = os.path.join(os.path.dirname(__file__), expr)
    out = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", tests],
                         capture_output=True, text=True)
    return out.returncode == 0, out.stdout.strip().splitlines()[-1]


@pytest.mark.slow
def test_c9_bart_suite():
    ok, tail = _suite("test_bart.py")
    record("C9", ok, f"BART unit suite: {tail}")
    assert ok


def test_c10_glm_suite():
    ok, tail = _suite("test_parametric.py")
    record("C10", ok, f"GLM unit suite: {tail}")
    assert ok


# -- C11: benchmark reproducibility --------------------------------------------------

def test_c11_benchmark_is_byte_reproducible(tmp_path):
    from bgformula.cli import main
    first, second = tmp_path / "a", tmp_path / "b"
    first.mkdir()
    second.mkdir()
    args = ["benchmark", "--dgp", "sim51", "--n", "300", "--n-reps", "2", "--specs", "cov,parametric",
            "--regimes", "natural", "--n-iter", "200", "--n-burn", "100", "--K", "500", "--R", "10",
            "--set", "bart.num_trees=20", "--set", "mcmc.thin=2", "--set", "benchmark.truth_M=20000"]
    assert main(args + ["--out", str(first)]) == 0
    assert main(["benchmark", "--manifest", str(first / "manifest.json"), "--out", str(second)]) == 0
    same = all((first / f).read_bytes() == (second / f).read_bytes()
               for f in ("benchmark.csv", "raw.csv"))
    record("C11", same, "two benchmark runs from one manifest: benchmark.csv and raw.csv "
                        + ("byte-identical" if same else "differ"))
    assert same
