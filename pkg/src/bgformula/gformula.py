"""Bayesian g-formula: component models and forward Monte Carlo.

Component models are duck-typed: anything with ``link``, ``n_draws``,
``sigma`` (per-draw noise SD for identity-link models) and
``predict(r, X)`` works, so the parametric baseline reuses this engine.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import design, links
from .bart import BartHyper, MCMCConfig, fit_binary, fit_continuous
from .core import BINARY, HistoryFeaturizer, LongitudinalDataset
from .errors import InsufficientTransitions, RegimeKindMismatch
from .scores import BalancingScoreSpec, BalancingSeries, ScoreSeries, build_balancing_series


class BaselinePool(NamedTuple):
    static: np.ndarray   # (N, p_static) baseline-only covariates
    b0: np.ndarray       # (N, m) balancing-score vectors at t = 0


@dataclass(frozen=True, eq=False)
class ComponentModels:
    """Outcome model plus one model per ``b_t`` element, in generation order."""

    outcome: object
    bs_models: tuple
    names: tuple[str, ...]
    kinds: tuple[str, ...]
    tailoring: tuple[int, ...]
    order: tuple[int, ...]
    featurizer: HistoryFeaturizer
    horizon: int
    label: str = ""

    @property
    def width(self) -> int:
        return len(self.names)

    @property
    def n_draws(self) -> int:
        return min([self.outcome.n_draws] + [m.n_draws for m in self.bs_models])


@dataclass(frozen=True)
class MonteCarloConfig:
    R: int = 100
    K: int = 10000
    K_b: int = 100
    K_a: int = 100
    seed: int = 0
    analytic_hazard: bool = False

    def __post_init__(self):
        if min(self.R, self.K, self.K_b, self.K_a) < 1:
            raise ValueError("R, K, K_b and K_a must all be >= 1")


@dataclass(frozen=True, eq=False)
class RiskDraws:
    """``risk[r, t* - 1]``: counterfactual risk by period ``t*`` under draw ``r``."""

    risk: np.ndarray
    regime_id: str = ""
    spec: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def R(self) -> int:
        return self.risk.shape[0]

    @property
    def horizon(self) -> int:
        return self.risk.shape[1]

    def to_csv(self, dest=None, header: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(["regime_id", "spec", "t_star", "draw_index", "risk"])
        for t in range(self.horizon):
            for r in range(self.R):
                w.writerow([self.regime_id, self.spec, t + 1, r, repr(float(self.risk[r, t]))])
        return _emit(buf.getvalue(), dest)


def read_risk_draws(source) -> list[RiskDraws]:
    """Parse a risk-draws CSV (one or more regime/spec groups, in file order)."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    groups: dict[tuple[str, str], dict[tuple[int, int], float]] = {}
    for row in csv.DictReader(io.StringIO(text)):
        key = (row["regime_id"], row["spec"])
        groups.setdefault(key, {})[(int(row["draw_index"]), int(row["t_star"]))] = float(row["risk"])
    out = []
    for (reg, spec), cells in groups.items():
        R = max(r for r, _ in cells) + 1
        T = max(t for _, t in cells)
        risk = np.full((R, T), np.nan)
        for (r, t), v in cells.items():
            risk[r, t - 1] = v
        if np.isnan(risk).any():
            raise ValueError(f"risk draws for {reg}/{spec} are incomplete")
        out.append(RiskDraws(risk, reg, spec))
    return out


def _emit(text, dest):
    if dest is not None:
        if hasattr(dest, "write"):
            dest.write(text)
        else:
            with open(dest, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
    return text


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------

def baseline_pool(data: LongitudinalDataset, series: BalancingSeries) -> BaselinePool:
    pan = data.panel()
    base = data.t == 0
    return BaselinePool(pan.static.copy(), series.values[base].copy())


def component_training_sets(data: LongitudinalDataset, series: BalancingSeries,
                            f: HistoryFeaturizer):
    """Yield ``(name, X, y, kind)`` for the outcome model then each element model."""
    f = f.bind(data.horizon)
    pan = data.panel()
    B = series.cube(data)
    at_risk = data.c_next == 0
    subj, t = pan.row_subject[at_risk], pan.row_t[at_risk]
    X = design.outcome_design(f, pan.static, B, pan.A, subj, t)
    yield "outcome", X, data.y_next[at_risk], BINARY
    if data.horizon == 1:
        return
    later = pan.row_t >= 1
    if series.width and not later.any():
        raise InsufficientTransitions("no subject is observed at t >= 1")
    subj, t = pan.row_subject[later], pan.row_t[later]
    bt = B[subj, t]
    for k, e in enumerate(series.order):
        earlier = bt[:, list(series.order[:k])]
        X = design.element_design(f, pan.static, B, pan.A, subj, t, earlier)
        yield series.names[e], X, bt[:, e], series.kinds[e]


def fit_component_models(data: LongitudinalDataset, spec: BalancingScoreSpec | BalancingSeries,
                         scores: ScoreSeries | None = None,
                         f: HistoryFeaturizer = HistoryFeaturizer(),
                         hyper: BartHyper = BartHyper(), mcmc: MCMCConfig = MCMCConfig(),
                         link: str = links.PROBIT, dynamic: bool = False, order=None
                         ) -> ComponentModels:
    """Fit the pooled outcome model and the sequential ``b_t`` element models."""
    series = spec if isinstance(spec, BalancingSeries) else build_balancing_series(
        data, spec, scores, dynamic=dynamic, order=order)
    f = f.bind(data.horizon)
    outcome = None
    bs = []
    for k, (name, X, y, kind) in enumerate(component_training_sets(data, series, f)):
        seed = mcmc.seed + 7919 * (k + 2)
        run = MCMCConfig(mcmc.n_iter, mcmc.n_burn, mcmc.thin, seed)
        if kind == BINARY:
            model = fit_binary(X, y, link, hyper, run)
        else:
            model = fit_continuous(X, y, hyper, run)
        if k == 0:
            outcome = model
        else:
            bs.append(model)
    return ComponentModels(outcome, tuple(bs), series.names, series.kinds, series.tailoring,
                           series.order, f, data.horizon, series.spec.label)


# ---------------------------------------------------------------------------
# forward simulation
# ---------------------------------------------------------------------------

def forward_risk(models: ComponentModels, regime, pool: BaselinePool, r: int, n_baseline: int,
                 rng: np.random.Generator, repeat: int = 1, analytic: bool = False
                 ) -> np.ndarray:
    """Risk curve from ``n_baseline * repeat`` simulated trajectories under draw ``r``.

    Baseline rows are resampled jointly; each is replicated ``repeat`` times
    (independent assignment streams for random regimes).  Uniforms are drawn
    for every trajectory at every step so that RNG consumption does not
    depend on who has had the event.
    """
    f = models.featurizer
    T = models.horizon
    m = models.width
    N = pool.b0.shape[0]
    idx = np.repeat(rng.integers(0, N, size=n_baseline), repeat)
    K = len(idx)
    unit = np.arange(K)
    static = pool.static[idx]
    B = np.zeros((K, T, m))
    A = np.zeros((K, T))
    B[:, 0] = pool.b0[idx]
    tail = list(models.tailoring)
    A[:, 0] = regime.assign_batch(B[:, :1, tail], A[:, :0], rng.random(K))
    event = np.full(K, T + 1)
    surv = np.ones(K)
    risk = np.zeros(T)
    for t in range(1, T + 1):
        X = design.outcome_design(f, static, B, A, unit, t - 1)
        p = models.outcome.predict(r, X)
        u = rng.random(K)
        if analytic:
            surv = surv * (1.0 - p)
            risk[t - 1] = 1.0 - surv.mean()
        else:
            hit = (u < p) & (event > T)
            event[hit] = t
            risk[t - 1] = np.mean(event <= t)
        if t == T:
            break
        for k, e in enumerate(models.order):
            Xe = design.element_design(f, static, B, A, unit, t, B[:, t, list(models.order[:k])])
            mdl = models.bs_models[k]
            if models.kinds[e] == BINARY:
                B[:, t, e] = rng.random(K) < mdl.predict(r, Xe)
            else:
                B[:, t, e] = mdl.predict(r, Xe) + mdl.sigma[r] * rng.standard_normal(K)
        A[:, t] = regime.assign_batch(B[:, :t + 1, tail], A[:, :t], rng.random(K))
    return risk


def draw_indices(n_draws: int, R: int) -> np.ndarray:
    """``R`` posterior draws spread evenly over the ``n_draws`` saved."""
    if R >= n_draws:
        return np.arange(n_draws)
    return np.unique(np.round(np.linspace(0, n_draws - 1, R)).astype(np.int64))


def _estimate(models, regime, pool, cfg, n_baseline, repeat, regime_id):
    draws = draw_indices(models.n_draws, cfg.R)
    risk = np.empty((len(draws), models.horizon))
    for i, r in enumerate(draws):
        rng = np.random.default_rng([cfg.seed, i])
        risk[i] = forward_risk(models, regime, pool, int(r), n_baseline, rng, repeat,
                               cfg.analytic_hazard)
    return RiskDraws(risk, regime_id or getattr(regime, "name", ""), models.label,
                     {"draws": draws.tolist(), "n_baseline": n_baseline, "repeat": repeat,
                      "seed": cfg.seed, "analytic_hazard": cfg.analytic_hazard})


def estimate_deterministic(models: ComponentModels, regime, pool: BaselinePool,
                           cfg: MonteCarloConfig = MonteCarloConfig(), regime_id: str = ""
                           ) -> RiskDraws:
    if not regime.deterministic:
        raise RegimeKindMismatch("estimate_deterministic needs a deterministic regime")
    return _estimate(models, regime, pool, cfg, cfg.K, 1, regime_id)


def estimate_random(models: ComponentModels, regime, pool: BaselinePool,
                    cfg: MonteCarloConfig = MonteCarloConfig(), regime_id: str = ""
                    ) -> RiskDraws:
    if regime.deterministic:
        raise RegimeKindMismatch("estimate_random needs a random regime")
    return _estimate(models, regime, pool, cfg, cfg.K_b, cfg.K_a, regime_id)


def estimate(models, regime, pool, cfg=MonteCarloConfig(), regime_id=""):
    fn = estimate_deterministic if regime.deterministic else estimate_random
    return fn(models, regime, pool, cfg, regime_id)


# ---------------------------------------------------------------------------
# summaries
# ---------------------------------------------------------------------------

class Summary(NamedTuple):
    mean: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    sd: np.ndarray


def summarize(draws: RiskDraws | np.ndarray, level: float = 0.95) -> Summary:
    """Posterior mean, equal-tailed interval (linear-interpolated quantiles) and SD per t*."""
    risk = draws.risk if isinstance(draws, RiskDraws) else np.asarray(draws, dtype=float)
    if risk.ndim == 1:
        risk = risk[:, None]
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    a = (1.0 - level) / 2.0
    lo, hi = np.quantile(risk, [a, 1.0 - a], axis=0)
    sd = risk.std(axis=0, ddof=1) if risk.shape[0] > 1 else np.zeros(risk.shape[1])
    return Summary(risk.mean(axis=0), lo, hi, sd)


def contrast(d1: RiskDraws, d0: RiskDraws) -> RiskDraws:
    """Draw-by-draw difference ``d1 - d0`` (paired on draw index)."""
    if d1.risk.shape != d0.risk.shape:
        raise ValueError("risk draws have different shapes")
    return RiskDraws(d1.risk - d0.risk, f"{d1.regime_id}-{d0.regime_id}", d1.spec,
                     {"contrast": [d1.regime_id, d0.regime_id]})


def summary_csv(items, level: float = 0.95, dest=None, header: bool = True) -> str:
    """Summary table for a list of RiskDraws."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(["regime_id", "spec", "t_star", "mean", "lo", "hi", "sd"])
    for d in items:
        s = summarize(d, level)
        for t in range(d.horizon):
            w.writerow([d.regime_id, d.spec, t + 1] +
                       [repr(float(v[t])) for v in (s.mean, s.lo, s.hi, s.sd)])
    return _emit(buf.getvalue(), dest)
