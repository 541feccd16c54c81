"""Joint treatment-and-censoring scores and balancing-score series.

The joint score of a person-period is ``e_t = P(A_t = 1 | history) *
P(C_{t+1} = 0 | history, A_t)``.  Its logit, optionally with the tailoring
variables or the full confounders, forms the series ``b_t`` that the
g-formula models in place of ``L_t``.
"""
from __future__ import annotations

import csv
import enum
import io
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import design, links
from .bart import BartHyper, BartPosterior, MCMCConfig, fit_binary
from .core import BINARY, CONTINUOUS, HistoryFeaturizer, LongitudinalDataset, RandomRegime
from .errors import EmptyRiskSet, MissingScores, MissingTailoring, PositivityWarning

POSITIVITY_BOUNDS = (0.001, 0.999)
OBSERVED = "observed"
TREATED = "treated"


class Variant(str, enum.Enum):
    JOINT_SCORE_PLUS_TAILORING = "bs"
    FULL_CONFOUNDERS = "cov"
    AUGMENTED = "cov-bs"

    @property
    def uses_score(self) -> bool:
        return self is not Variant.FULL_CONFOUNDERS


@dataclass(frozen=True)
class BalancingScoreSpec:
    variant: Variant

    @classmethod
    def parse(cls, name: str) -> "BalancingScoreSpec":
        key = name.strip().lower()
        aliases = {"bart-bs": "bs", "bart-cov": "cov", "bart-cov-bs": "cov-bs",
                   "joint": "bs", "full": "cov", "augmented": "cov-bs"}
        key = aliases.get(key, key)
        try:
            return cls(Variant(key))
        except ValueError:
            raise ValueError(f"unknown balancing-score spec {name!r}") from None

    @property
    def label(self) -> str:
        return {"bs": "BART-BS", "cov": "BART-Cov", "cov-bs": "BART-Cov-BS"}[self.variant.value]


class AssignmentModels(NamedTuple):
    treatment: BartPosterior
    censoring: BartPosterior
    featurizer: HistoryFeaturizer


@dataclass(frozen=True, eq=False)
class ScoreSeries:
    """Per-record plug-in scores, aligned with the dataset rows.

    ``p_uncens`` is the censoring factor used in ``e`` (evaluated at the
    observed treatment or at ``A_t = 1`` per ``censoring_at``);
    ``p_uncens_observed`` is always at the observed treatment and is what
    inverse-probability-of-censoring weights need.
    """

    ids: np.ndarray
    t: np.ndarray
    p_treat: np.ndarray
    p_uncens: np.ndarray
    p_uncens_observed: np.ndarray
    censoring_at: str = TREATED

    @property
    def e(self) -> np.ndarray:
        return self.p_treat * self.p_uncens

    @property
    def logit_e(self) -> np.ndarray:
        e = self.e
        return np.log(e) - np.log1p(-e)

    def positivity_violations(self, bounds=POSITIVITY_BOUNDS) -> int:
        e = self.e
        return int(np.sum((e < bounds[0]) | (e > bounds[1])))

    def to_csv(self, dest=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "t", "p_treat", "p_uncens", "e", "logit_e"])
        for row in zip(self.ids, self.t, self.p_treat, self.p_uncens, self.e, self.logit_e):
            w.writerow([row[0], int(row[1])] + [repr(float(x)) for x in row[2:]])
        text = buf.getvalue()
        if dest is not None:
            with open(dest, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


def score_designs(data: LongitudinalDataset, f: HistoryFeaturizer):
    """(treatment design, censoring design) over all records."""
    f = f.bind(data.horizon)
    pan = data.panel()
    Xa = design.treatment_design(f, pan.static, pan.L, pan.A, pan.row_subject, pan.row_t)
    Xc = np.column_stack([Xa, data.a.astype(float)])
    return Xa, Xc


def fit_assignment_models(data: LongitudinalDataset, f: HistoryFeaturizer = HistoryFeaturizer(),
                          hyper: BartHyper = BartHyper(), mcmc: MCMCConfig = MCMCConfig(),
                          link: str = links.PROBIT) -> AssignmentModels:
    """Pooled binary models for ``A_t`` and for ``1{C_{t+1} = 0}`` over all at-risk records."""
    if data.n_rows == 0:
        raise EmptyRiskSet("no at-risk person-periods")
    f = f.bind(data.horizon)
    Xa, Xc = score_designs(data, f)
    treat = fit_binary(Xa, data.a.astype(float), link, hyper, mcmc)
    cens = fit_binary(Xc, 1.0 - data.c_next.astype(float), link, hyper,
                      MCMCConfig(mcmc.n_iter, mcmc.n_burn, mcmc.thin, mcmc.seed + 1))
    return AssignmentModels(treat, cens, f)


def combine_scores(ids, t, p_treat, p_uncens, p_uncens_observed=None,
                   censoring_at: str = TREATED, warn: bool = True) -> ScoreSeries:
    s = ScoreSeries(np.asarray(ids), np.asarray(t), np.asarray(p_treat, dtype=float),
                    np.asarray(p_uncens, dtype=float),
                    np.asarray(p_uncens if p_uncens_observed is None else p_uncens_observed,
                               dtype=float), censoring_at)
    bad = s.positivity_violations()
    if warn and bad:
        warnings.warn(f"{bad} of {len(s.e)} records have joint score outside "
                      f"[{POSITIVITY_BOUNDS[0]}, {POSITIVITY_BOUNDS[1]}]", PositivityWarning,
                      stacklevel=2)
    return s


def compute_scores(models: AssignmentModels, data: LongitudinalDataset,
                   censoring_at: str = TREATED) -> ScoreSeries:
    """Posterior-mean scores for every record."""
    if censoring_at not in (OBSERVED, TREATED):
        raise ValueError(f"censoring_at must be {OBSERVED!r} or {TREATED!r}")
    Xa, Xc = score_designs(data, models.featurizer)
    p_treat = models.treatment.predict_mean(Xa)
    p_obs = models.censoring.predict_mean(Xc)
    if censoring_at == TREATED:
        Xc1 = Xc.copy()
        Xc1[:, -1] = 1.0
        p_unc = models.censoring.predict_mean(Xc1)
    else:
        p_unc = p_obs
    return combine_scores(data.ids, data.t, p_treat, p_unc, p_obs, censoring_at)


def natural_course_regime(models: AssignmentModels, schema, name: str = "natural"):
    """Random regime that draws ``A_t`` from the fitted treatment model.

    The regime only sees the tailoring history, so every time-varying
    covariate must be a tailoring variable and there can be no
    baseline-only covariates.  Probabilities are exact posterior means,
    computed once per distinct design row.
    """
    if schema.baseline_only or len(schema.tailoring) != len(schema.time_varying):
        raise MissingTailoring("natural course needs every covariate to be a tailoring variable")
    f = models.featurizer

    def prob(h, a):
        K, t1, m = h.shape
        L = np.zeros((K, f.n_periods, m))
        L[:, :t1] = h
        A = np.zeros((K, f.n_periods))
        A[:, :t1 - 1] = a
        X = design.treatment_design(f, np.zeros((K, 0)), L, A, np.arange(K), t1 - 1)
        rows, inv = np.unique(X, axis=0, return_inverse=True)
        return models.treatment.predict_mean(rows)[inv.ravel()]

    return RandomRegime(prob, name=name, static=False)


# ---------------------------------------------------------------------------
# balancing-score series
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BalancingSeries:
    """``b_t`` values per record with element metadata.

    ``order`` is the generation order of the elements (indices into
    ``names``); ``tailoring`` indexes the elements that carry ``H_t``.
    """

    values: np.ndarray
    names: tuple[str, ...]
    kinds: tuple[str, ...]
    tailoring: tuple[int, ...]
    order: tuple[int, ...]
    spec: BalancingScoreSpec

    @property
    def width(self) -> int:
        return len(self.names)

    def cube(self, data: LongitudinalDataset) -> np.ndarray:
        pan = data.panel()
        out = np.full((data.n_subjects, data.horizon, self.width), np.nan)
        out[pan.row_subject, pan.row_t] = self.values
        return out


def default_order(kinds) -> tuple[int, ...]:
    """Continuous elements first, then binary, stable within each kind."""
    cont = [i for i, k in enumerate(kinds) if k == CONTINUOUS]
    return tuple(cont + [i for i, k in enumerate(kinds) if k != CONTINUOUS])


def build_balancing_series(data: LongitudinalDataset, spec: BalancingScoreSpec,
                           scores: ScoreSeries | None = None, dynamic: bool = False,
                           order=None) -> BalancingSeries:
    """Assemble ``b_t`` for every record.

    ``dynamic`` declares that the series will serve a dynamic regime, which
    requires the tailoring variables to be present.
    """
    schema = data.schema
    tv = schema.time_varying
    tv_vals = data.time_varying()
    if dynamic and not schema.tailoring:
        raise MissingTailoring("dynamic regime needs tailoring variables in the schema")
    cols, names, kinds = [], [], []
    if spec.variant.uses_score:
        if scores is None:
            raise MissingScores(f"spec {spec.label} needs joint scores")
        if len(scores.e) != data.n_rows:
            raise MissingScores("score series does not match the dataset rows")
        cols.append(scores.logit_e)
        names.append("logit_e")
        kinds.append(CONTINUOUS)
    if spec.variant is Variant.JOINT_SCORE_PLUS_TAILORING:
        chosen = [i for i, c in enumerate(tv) if c.tailoring]
    else:
        chosen = list(range(len(tv)))
    for i in chosen:
        cols.append(tv_vals[:, i])
        names.append(tv[i].name)
        kinds.append(tv[i].kind)
    tail = tuple(k for k, nm in enumerate(names) if nm in {c.name for c in schema.tailoring})
    values = np.column_stack(cols) if cols else np.zeros((data.n_rows, 0))
    if order is None:
        order = default_order(kinds)
    order = tuple(int(i) for i in order)
    if sorted(order) != list(range(len(names))):
        raise ValueError(f"element order {order} is not a permutation of {len(names)} elements")
    return BalancingSeries(values, tuple(names), tuple(kinds), tail, order, spec)


# ---------------------------------------------------------------------------
# balance diagnostics
# ---------------------------------------------------------------------------

def standardized_differences(X: np.ndarray, group: np.ndarray) -> np.ndarray:
    """Absolute standardized mean difference of each column between group 1 and group 0
    (pooled-variance denominator); NaN when a group is empty."""
    X = np.asarray(X, dtype=float)
    g = np.asarray(group, dtype=bool)
    if g.all() or (~g).all():
        return np.full(X.shape[1], np.nan)
    m1, m0 = X[g].mean(axis=0), X[~g].mean(axis=0)
    v1, v0 = X[g].var(axis=0), X[~g].var(axis=0)
    sd = np.sqrt(0.5 * (v1 + v0))
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.abs(m1 - m0) / sd
    return np.where(sd > 0, out, 0.0)


def balance_by_score(X: np.ndarray, group: np.ndarray, score: np.ndarray,
                     n_bins: int = 10) -> np.ndarray:
    """(n_bins, p) absolute SMDs within quantile bins of ``score``."""
    edges = np.quantile(score, np.linspace(0, 1, n_bins + 1))
    b = np.clip(np.searchsorted(edges, score, side="right") - 1, 0, n_bins - 1)
    return np.vstack([standardized_differences(X[b == k], group[b == k]) for k in range(n_bins)])
