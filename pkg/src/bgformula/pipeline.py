"""End-to-end estimation on one dataset: scores, component models, forward simulation."""
from __future__ import annotations

import logging
import warnings
from dataclasses import replace

from .config import PARAMETRIC, RunConfig
from .core import LongitudinalDataset
from .errors import BGFormulaError, PositivityWarning
from .gformula import RiskDraws, baseline_pool, estimate, fit_component_models
from .parametric import estimate_parametric
from .scores import build_balancing_series, compute_scores, fit_assignment_models

log = logging.getLogger(__name__)


class StageError(BGFormulaError):
    """Wraps a module error with the pipeline stage it came from."""

    def __init__(self, stage: str, exc: Exception):
        self.stage, self.cause = stage, exc
        super().__init__(f"[{stage}] {type(exc).__name__}: {exc}")


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except BGFormulaError as exc:
        raise StageError(name, exc) from exc


def estimate_all(data: LongitudinalDataset, cfg: RunConfig, mcmc_seed: int | None = None,
                 mc_seed: int | None = None, regimes=None) -> list[RiskDraws]:
    """RiskDraws for every (spec, regime) pair in ``cfg``, specs outermost."""
    specs = cfg.spec_objects()
    regimes = regimes if regimes is not None else cfg.regime_objects(data.schema, data.horizon)
    mcmc = cfg.mcmc if mcmc_seed is None else replace(cfg.mcmc, seed=int(mcmc_seed))
    mc = cfg.montecarlo if mc_seed is None else replace(cfg.montecarlo, seed=int(mc_seed))
    f = cfg.featurizer
    scores = None
    if any(s != PARAMETRIC and s.variant.uses_score for s in specs):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", PositivityWarning)
            am = _stage("scores", fit_assignment_models, data, f, cfg.bart, mcmc,
                        cfg.estimate.link)
            scores = _stage("scores", compute_scores, am, data, cfg.estimate.censoring_at)
        for w in caught:
            log.warning("positivity: %s", w.message)
    out = []
    for spec in specs:
        if spec == PARAMETRIC:
            for reg in regimes:
                out.append(_stage("parametric", estimate_parametric, data, reg, mc,
                                  cfg.estimate.n_boot, cfg.estimate.boot_seed, regime_id=reg.name))
            continue
        dynamic = any(not getattr(r, "static", True) for r in regimes)
        series = _stage("series", build_balancing_series, data, spec, scores, dynamic)
        models = _stage("components", fit_component_models, data, series, None, f, cfg.bart,
                        mcmc, cfg.estimate.link)
        pool = baseline_pool(data, series)
        for reg in regimes:
            out.append(_stage("forward", estimate, models, reg, pool, mc, reg.name))
        log.info("%s done", spec.label)
    return out

