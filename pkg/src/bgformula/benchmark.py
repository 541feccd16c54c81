"""Replication benchmark: relative bias and RMSE of each estimator against simulator truth."""
from __future__ import annotations

import csv
import io
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from typing import NamedTuple

import numpy as np

from .config import PARAMETRIC, RunConfig
from .errors import TruthUnavailable
from .gformula import summarize
from .pipeline import estimate_all
from .simulator import simulate, true_risk_curve

log = logging.getLogger(__name__)
WORKERS_ENV = "BGFORMULA_WORKERS"


class RepSeeds(NamedTuple):
    data: int
    mcmc: int
    montecarlo: int


class BenchmarkResult(NamedTuple):
    estimators: tuple[str, ...]
    regimes: tuple[str, ...]
    truth: np.ndarray       # (n_regimes, T)
    truth_se: np.ndarray    # (n_regimes, T)
    estimates: np.ndarray   # (n_reps, n_estimators, n_regimes, T) posterior means

    @property
    def rel_bias(self) -> np.ndarray:
        return relative_bias(self.estimates, self.truth)

    @property
    def rmse(self) -> np.ndarray:
        return rmse(self.estimates, self.truth)


def relative_bias(estimates, truth) -> np.ndarray:
    """``(mean over replications - truth) / truth``; replications on axis 0."""
    truth = np.asarray(truth, dtype=float)
    return (np.asarray(estimates, dtype=float).mean(axis=0) - truth) / truth


def rmse(estimates, truth) -> np.ndarray:
    """Root mean squared error over replications (axis 0)."""
    est = np.asarray(estimates, dtype=float)
    return np.sqrt(np.mean((est - truth) ** 2, axis=0))


def rep_seeds(base: int, rep: int) -> RepSeeds:
    s = np.random.SeedSequence([int(base), int(rep)]).generate_state(3)
    return RepSeeds(*(int(x) & 0x7FFFFFFF for x in s))


def estimator_names(cfg: RunConfig) -> tuple[str, ...]:
    return tuple("Parametric" if s == PARAMETRIC else s.label for s in cfg.spec_objects())


def n_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def run_replication(cfg: RunConfig, rep: int) -> np.ndarray:
    """Posterior-mean risk curves for one replication: (n_estimators, n_regimes, T)."""
    seeds = rep_seeds(cfg.data.seed, rep)
    data = simulate(cfg.data.dgp(seed=seeds.data))
    draws = estimate_all(data, cfg, mcmc_seed=seeds.mcmc, mc_seed=seeds.montecarlo)
    n_reg = len(cfg.estimate.regimes)
    out = np.array([summarize(d).mean for d in draws])
    log.info("replication %d finished", rep)
    return out.reshape(len(cfg.estimate.specs), n_reg, data.horizon)


def _run_one(args):
    return run_replication(*args)


def run_benchmark(cfg: RunConfig, truth: np.ndarray | None = None,
                  truth_se: np.ndarray | None = None, workers: int | None = None
                  ) -> BenchmarkResult:
    """Run ``cfg.benchmark.n_reps`` independent replications.

    ``truth`` (n_regimes, T) may be supplied, e.g. from a stored fixture;
    otherwise it is computed by large Monte Carlo from the simulator.
    """
    if not cfg.data.synthetic:
        raise TruthUnavailable("benchmark needs a simulator data source")
    regimes = cfg.regime_objects()
    if truth is None:
        curves = [true_risk_curve(cfg.data.dgp(), r, M=cfg.benchmark.truth_M,
                                  seed=cfg.benchmark.truth_seed) for r in regimes]
        truth = np.array([c.risk for c in curves])
        truth_se = np.array([c.se for c in curves])
    truth = np.asarray(truth, dtype=float).reshape(len(regimes), cfg.data.T)
    truth_se = (np.zeros_like(truth) if truth_se is None
                else np.asarray(truth_se, dtype=float).reshape(truth.shape))
    jobs = [(cfg, r) for r in range(cfg.benchmark.n_reps)]
    workers = workers or n_workers()
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            reps = list(ex.map(_run_one, jobs))
    else:
        reps = [_run_one(j) for j in jobs]
    return BenchmarkResult(estimator_names(cfg), tuple(r.name for r in regimes), truth, truth_se,
                           np.array(reps))


def benchmark_csv(res: BenchmarkResult, dest=None) -> str:
    buf = io.StringIO()
    buf.write("# rel_bias = (mean estimate - truth) / truth; rmse over replications\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["estimator", "regime", "t_star", "truth", "truth_se", "mean_estimate",
                "rel_bias", "rmse", "n_reps"])
    mean = res.estimates.mean(axis=0)
    rb, rm = res.rel_bias, res.rmse
    for e, est in enumerate(res.estimators):
        for g, reg in enumerate(res.regimes):
            for t in range(res.truth.shape[1]):
                w.writerow([est, reg, t + 1] + [repr(float(v)) for v in (
                    res.truth[g, t], res.truth_se[g, t], mean[e, g, t], rb[e, g, t],
                    rm[e, g, t])] + [res.estimates.shape[0]])
    return _emit(buf.getvalue(), dest)


def raw_csv(res: BenchmarkResult, dest=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rep", "estimator", "regime", "t_star", "estimate"])
    for r in range(res.estimates.shape[0]):
        for e, est in enumerate(res.estimators):
            for g, reg in enumerate(res.regimes):
                for t in range(res.truth.shape[1]):
                    w.writerow([r, est, reg, t + 1, repr(float(res.estimates[r, e, g, t]))])
    return _emit(buf.getvalue(), dest)


def _emit(text, dest):
    if dest is not None:
        with open(dest, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text
