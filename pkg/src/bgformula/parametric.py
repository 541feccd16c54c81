"""Parametric g-formula baseline: logistic and linear component models.

The GLMs plug into the same forward simulation as the tree ensembles.  A
fitted set of GLMs looks like a one-draw posterior; bootstrap refits supply
further draws.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from . import links
from .core import BINARY, HistoryFeaturizer, LongitudinalDataset
from .errors import EmptyData, SeparationDetected, SingularDesign
from .gformula import (ComponentModels, MonteCarloConfig, RiskDraws,
                       baseline_pool, component_training_sets, estimate)
from .scores import BalancingScoreSpec, Variant, build_balancing_series

COEF_LIMIT = 1e3
SD_FLOOR = 1e-12
PARAMETRIC_FEATURIZER = HistoryFeaturizer(order=1, cumulate=False, include_period_indicator=True)


@dataclass(frozen=True, eq=False)
class GlmFit:
    """Coefficients with the intercept first; ``keep`` selects the design columns used."""

    coefficients: np.ndarray
    family: str
    residual_sd: float | None = None
    keep: np.ndarray | None = None
    n_iter: int = 0
    restrictions: tuple = ()

    def linear_predictor(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self.keep is not None:
            X = X[:, self.keep]
        return self.coefficients[0] + X @ self.coefficients[1:]

    def predict(self, X) -> np.ndarray:
        eta = self.linear_predictor(X)
        if self.family != "logistic":
            return eta
        p = links.inverse_link(eta, links.LOGISTIC)
        X = np.asarray(X, dtype=float)
        for j, v, fixed in self.restrictions:
            p = np.where(X[:, j] == v, fixed, p)
        return p


def _design(X, y):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] == 0:
        raise EmptyData("no rows to fit")
    if X.shape[0] != len(y):
        raise ValueError("X and y have different numbers of rows")
    D = np.column_stack([np.ones(len(y)), X])
    if np.linalg.matrix_rank(D) < D.shape[1]:
        raise SingularDesign(f"design of width {D.shape[1]} is rank deficient")
    return D, y


def fit_logistic(X, y, tol: float = 1e-8, max_iter: int = 100, keep=None) -> GlmFit:
    """Maximum likelihood by iteratively reweighted least squares."""
    D, y = _design(X, y)
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise ValueError("logistic response must be 0/1")
    beta = np.zeros(D.shape[1])
    for it in range(1, max_iter + 1):
        p = expit(D @ beta)
        wt = p * (1.0 - p)
        H = D.T @ (D * wt[:, None])
        try:
            step = np.linalg.solve(H, D.T @ (y - p))
        except np.linalg.LinAlgError:
            raise SeparationDetected("information matrix became singular") from None
        beta = beta + step
        if not np.all(np.isfinite(beta)) or np.linalg.norm(beta) > COEF_LIMIT:
            raise SeparationDetected("coefficients diverge: data appear separable")
        if np.max(np.abs(step)) < tol:
            break
    p = expit(D @ beta)
    if np.max(np.abs(y - p)) < 1e-6:
        raise SeparationDetected("fitted probabilities reproduce the response exactly")
    return GlmFit(beta, "logistic", keep=keep, n_iter=it)


def fit_linear(X, y, keep=None) -> GlmFit:
    """Ordinary least squares; ``residual_sd`` uses denominator ``n - p`` (floored)."""
    D, y = _design(X, y)
    beta, *_ = np.linalg.lstsq(D, y, rcond=None)
    resid = y - D @ beta
    dof = max(len(y) - D.shape[1], 1)
    sd = max(float(np.sqrt(resid @ resid / dof)), SD_FLOOR)
    return GlmFit(beta, "linear", residual_sd=sd, keep=keep)


def information_se(fit: GlmFit, X) -> np.ndarray:
    """Standard errors of a logistic fit from the observed information."""
    X = np.asarray(X, dtype=float)
    if fit.keep is not None:
        X = X[:, fit.keep]
    D = np.column_stack([np.ones(len(X)), X])
    p = expit(D @ fit.coefficients)
    H = D.T @ (D * (p * (1 - p))[:, None])
    return np.sqrt(np.diag(np.linalg.inv(H)))


@dataclass(frozen=True, eq=False)
class GlmDraws:
    """A list of GLM fits exposed through the posterior-draw interface."""

    fits: tuple[GlmFit, ...]

    @property
    def link(self) -> str:
        return links.LOGISTIC if self.fits[0].family == "logistic" else links.IDENTITY

    @property
    def n_draws(self) -> int:
        return len(self.fits)

    @property
    def sigma(self) -> np.ndarray:
        return np.array([f.residual_sd if f.residual_sd is not None else np.nan for f in self.fits])

    def predict(self, r: int, X) -> np.ndarray:
        return self.fits[r].predict(X)


def _usable_columns(X: np.ndarray, period_cols: slice | None) -> np.ndarray:
    keep = np.ptp(X, axis=0) > 0 if len(X) else np.zeros(X.shape[1], dtype=bool)
    if period_cols is not None:
        present = np.flatnonzero(keep[period_cols]) + period_cols.start
        # dummies that cover every row are collinear with the intercept
        if len(present) and np.all(X[:, present].sum(axis=1) == 1):
            keep[present[0]] = False
    return keep


def _period_slice(X_width: int, f: HistoryFeaturizer, name: str, n_elements_before: int):
    if not f.include_period_indicator:
        return None
    stop = X_width if name == "outcome" else X_width - n_elements_before
    return slice(stop - f.period_width(), stop)


def _binary_columns(X: np.ndarray) -> np.ndarray:
    return np.flatnonzero(np.all((X == 0) | (X == 1), axis=0))


def fit_restricted_logistic(X, y, period_cols: slice | None = None) -> GlmFit:
    """Logistic fit after setting aside strata that a binary column determines.

    When ``x_j = v`` implies a constant response (an absorbing state, say)
    the likelihood has no finite maximum.  Such strata are predicted
    exactly and the GLM is fit on the remaining rows.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    rows = np.ones(len(y), dtype=bool)
    restrictions = []
    found = True
    while found:
        found = False
        for j in _binary_columns(X[rows]):
            for v in (1.0, 0.0):
                m = rows & (X[:, j] == v)
                k = m.sum()
                if 0 < k < rows.sum() and np.all(y[m] == y[m][0]):
                    restrictions.append((int(j), v, float(y[m][0])))
                    rows &= ~m
                    found = True
                    break
            if found:
                break
    keep = _usable_columns(X[rows], period_cols)
    fit = fit_logistic(X[rows][:, keep], y[rows], keep=keep)
    return replace(fit, restrictions=tuple(restrictions))


def fit_parametric_models(data: LongitudinalDataset, f: HistoryFeaturizer = PARAMETRIC_FEATURIZER,
                          order=None) -> ComponentModels:
    """One logistic outcome model and one GLM per confounder, each confounder
    conditioned on the confounders generated before it and order-1 history."""
    f = f.bind(data.horizon)
    series = build_balancing_series(data, BalancingScoreSpec(Variant.FULL_CONFOUNDERS),
                                    order=order)
    fits = []
    for k, (name, X, y, kind) in enumerate(component_training_sets(data, series, f)):
        per = _period_slice(X.shape[1], f, name, max(k - 1, 0))
        if kind == BINARY:
            fits.append(GlmDraws((fit_restricted_logistic(X, y, per),)))
        else:
            keep = _usable_columns(X, per)
            fits.append(GlmDraws((fit_linear(X[:, keep], y, keep=keep),)))
    return ComponentModels(fits[0], tuple(fits[1:]), series.names, series.kinds,
                           series.tailoring, series.order, f, data.horizon, "Parametric")


def _stack_models(models: list[ComponentModels]) -> ComponentModels:
    first = models[0]
    outcome = GlmDraws(tuple(m.outcome.fits[0] for m in models))
    bs = tuple(GlmDraws(tuple(m.bs_models[k].fits[0] for m in models))
               for k in range(len(first.bs_models)))
    return ComponentModels(outcome, bs, first.names, first.kinds, first.tailoring, first.order,
                           first.featurizer, first.horizon, first.label)


def estimate_parametric(data: LongitudinalDataset, regime, cfg: MonteCarloConfig = MonteCarloConfig(),
                        n_boot: int = 0, boot_seed: int = 0,
                        f: HistoryFeaturizer = PARAMETRIC_FEATURIZER, regime_id: str = "",
                        order=None) -> RiskDraws:
    """Parametric g-formula risk curve.

    Draw 0 is the point estimate on the full data.  With ``n_boot > 0`` the
    following draws come from subject-level bootstrap refits.
    """
    models = [fit_parametric_models(data, f, order)]
    pools = [baseline_pool(data, build_balancing_series(
        data, BalancingScoreSpec(Variant.FULL_CONFOUNDERS)))]
    rng = np.random.default_rng(boot_seed)
    for _ in range(n_boot):
        sample = data.subset_subjects(rng.integers(0, data.n_subjects, data.n_subjects))
        models.append(fit_parametric_models(sample, f, order))
        pools.append(baseline_pool(sample, build_balancing_series(
            sample, BalancingScoreSpec(Variant.FULL_CONFOUNDERS))))
    stacked = _stack_models(models)
    risk = np.empty((len(models), data.horizon))
    for b, pool in enumerate(pools):
        one = MonteCarloConfig(R=1, K=cfg.K, K_b=cfg.K_b, K_a=cfg.K_a, seed=cfg.seed + b,
                               analytic_hazard=cfg.analytic_hazard)
        sub = ComponentModels(GlmDraws((stacked.outcome.fits[b],)),
                              tuple(GlmDraws((m.fits[b],)) for m in stacked.bs_models),
                              stacked.names, stacked.kinds, stacked.tailoring, stacked.order,
                              stacked.featurizer, stacked.horizon, stacked.label)
        risk[b] = estimate(sub, regime, pool, one, regime_id).risk[0]
    return RiskDraws(risk, regime_id or getattr(regime, "name", ""), "Parametric",
                     {"n_boot": n_boot, "boot_seed": boot_seed, "seed": cfg.seed})
