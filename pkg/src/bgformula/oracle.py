"""Assumption-free cross-checks: plug-in g-formula and weighted cumulative incidence."""
from __future__ import annotations

import numpy as np

from .core import LongitudinalDataset, regime_assign
from .errors import EmptyCell, SchemaMismatch

MAX_STATES = 10_000
MAX_LEVELS = 50


def _states(data: LongitudinalDataset):
    """Joint covariate state cube (subject, period, static then time-varying) and per-column levels."""
    pan = data.panel()
    n_s, T = pan.A.shape
    static = np.repeat(pan.static[:, None, :], T, axis=1)
    full = np.concatenate([static, pan.L], axis=2)
    levels = []
    for j in range(full.shape[2]):
        col = full[:, :, j]
        u = np.unique(col[~np.isnan(col)])
        if len(u) > MAX_LEVELS:
            raise SchemaMismatch("plug-in g-formula needs discrete covariates; "
                                 f"column {j} has {len(u)} distinct values")
        levels.append(u)
    size = int(np.prod([max(len(u), 1) for u in levels])) if levels else 1
    if size > MAX_STATES:
        raise SchemaMismatch(f"covariate state space has {size} cells (limit {MAX_STATES})")
    return full, levels


def plugin_gformula(data: LongitudinalDataset, regime, t_star: int, smooth_alpha: float = 0.0
                    ) -> float:
    """Risk by ``t_star`` under a deterministic regime with empirical conditionals.

    Enumerates every observed covariate history.  A required stratum with
    no subjects raises :class:`EmptyCell` unless ``smooth_alpha > 0``, in
    which case counts get add-``alpha`` smoothing and every joint state seen
    anywhere in the data is enumerated.
    """
    if not regime.deterministic:
        raise TypeError("plug-in g-formula needs a deterministic regime")
    if not 1 <= t_star <= data.horizon:
        raise ValueError(f"t_star must lie in 1..{data.horizon}")
    full, _ = _states(data)
    pan = data.panel()
    n_s, T = pan.A.shape
    present = ~np.isnan(pan.A)
    Y = np.full((n_s, T), np.nan)
    C = np.zeros((n_s, T), dtype=np.int8)
    Y[pan.row_subject, pan.row_t] = data.y_next
    C[pan.row_subject, pan.row_t] = data.c_next
    n_static = pan.static.shape[1]
    tail_cols = [n_static + i for i, c in enumerate(data.schema.time_varying) if c.tailoring]
    A = np.nan_to_num(pan.A).astype(np.int8)
    states = [np.unique(full[present[:, t], t], axis=0) for t in range(T)]
    universe = np.unique(np.concatenate(states), axis=0)
    alpha = float(smooth_alpha)

    def branch_probs(rows, t, hist):
        """Empirical distribution of the period-t state within ``rows``."""
        if len(rows) == 0 and alpha == 0:
            raise EmptyCell(hist, what=f"covariate transition at t={t}")
        vals = full[rows, t]
        cand = universe if alpha > 0 else np.unique(vals, axis=0)
        out = []
        for s in cand:
            match = np.all(vals == s, axis=1)
            p = (match.sum() + alpha) / (len(rows) + alpha * len(cand))
            if p > 0:
                out.append((s, rows[match], p))
        return out

    def walk(t, rows, hist_s, hist_a, mass, surv):
        total = 0.0
        for s, sub, p in branch_probs(rows, t, _describe(hist_s, hist_a)):
            hs = hist_s + [s]
            h = np.asarray([x[tail_cols] for x in hs], dtype=float)
            a = regime_assign(regime, h, hist_a)
            follow = sub[A[sub, t] == a]
            at_risk = follow[C[follow, t] == 0]
            desc = _describe(hs, hist_a + [a])
            if len(at_risk) == 0 and alpha == 0:
                raise EmptyCell(desc, what=f"hazard at t={t}")
            ev = np.nansum(Y[at_risk, t])
            hz = (ev + alpha) / (len(at_risk) + 2 * alpha)
            w = mass * p
            total += w * surv * hz
            if t + 1 < t_star:
                nxt = at_risk[(Y[at_risk, t] == 0) & present[at_risk, t + 1]]
                total += walk(t + 1, nxt, hs, hist_a + [a], w, surv * (1.0 - hz))
        return total

    return float(walk(0, np.arange(n_s), [], [], 1.0, 1.0))


def _describe(hist_s, hist_a):
    """Readable history: per period, the covariate state and (when fixed) the treatment."""
    return tuple((tuple(float(v) for v in s),) + ((int(hist_a[k]),) if k < len(hist_a) else ())
                 for k, s in enumerate(hist_s))


def period_uncensored_probability(data: LongitudinalDataset) -> np.ndarray:
    """Per-record probability of staying uncensored, estimated by period only."""
    out = np.empty(data.n_rows)
    for t in range(data.horizon):
        m = data.t == t
        if m.any():
            out[m] = 1.0 - data.c_next[m].mean()
    return out


def empirical_cuminc(data: LongitudinalDataset, t_star: int, p_uncens=None) -> float:
    """Fraction of subjects with an event by ``t_star``, inverse-probability-of-censoring weighted.

    ``p_uncens`` gives, per record, the probability of remaining uncensored
    through the next period (array aligned with the rows, or an object with
    a ``p_uncens_observed`` attribute).  Without it every weight is 1.
    """
    if not 1 <= t_star <= data.horizon:
        raise ValueError(f"t_star must lie in 1..{data.horizon}")
    if p_uncens is None:
        p = np.ones(data.n_rows)
    else:
        p = np.asarray(getattr(p_uncens, "p_uncens_observed", p_uncens), dtype=float)
        if p.shape != (data.n_rows,):
            raise ValueError("p_uncens must have one entry per record")
    starts = np.flatnonzero(data.t == 0)
    # within-subject running product of p, via log-cumsum minus the value before each start
    cs = np.concatenate([[0.0], np.cumsum(np.log(p))])
    before = np.repeat(cs[starts], np.diff(np.append(starts, data.n_rows)))
    cumw = np.exp(before - cs[1:])
    hit = (data.y_next == 1) & (data.t < t_star)
    return float(np.sum(cumw[hit]) / data.n_subjects)
