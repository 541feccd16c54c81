"""Design matrices shared by model fitting and forward simulation.

Every model sees the same column layout whether it is trained on observed
person-periods or queried on simulated trajectories; both paths go through
the builders below with ``(unit, t)`` index vectors into wide cubes.

Layouts (``st`` = baseline-only block, ``hist`` = featurizer history block,
``per`` = period one-hot):

* treatment at period t:   st | hist(L, t) | hist(A, t-1) | per(t)
* censoring at period t:   treatment layout | A_t
* outcome Y_{t+1}:         st | hist(b, t) | hist(A, t) | per(t)
* element e of b_t (t>=1): st | hist(b, t-1) | hist(A, t-1) | per(t) | earlier elements of b_t
"""
from __future__ import annotations

import numpy as np

from .core import HistoryFeaturizer


def _stack(blocks, n):
    blocks = [b for b in blocks if b.shape[1]]
    if not blocks:
        return np.zeros((n, 0))
    return np.ascontiguousarray(np.concatenate(blocks, axis=1))


def _period(f: HistoryFeaturizer, t, n):
    if not f.include_period_indicator:
        return np.zeros((n, 0))
    return f.period_block(np.broadcast_to(np.asarray(t), (n,)))


def treatment_design(f, static, L, A, unit, t):
    unit = np.asarray(unit)
    t = np.broadcast_to(np.asarray(t), unit.shape)
    n = len(unit)
    return _stack([static[unit], f.history(L, unit, t), f.history(A, unit, t - 1),
                   _period(f, t, n)], n)


def censoring_design(f, static, L, A, unit, t, a_now):
    X = treatment_design(f, static, L, A, unit, t)
    return np.column_stack([X, np.asarray(a_now, dtype=float)])


def outcome_design(f, static, B, A, unit, t):
    unit = np.asarray(unit)
    t = np.broadcast_to(np.asarray(t), unit.shape)
    n = len(unit)
    return _stack([static[unit], f.history(B, unit, t), f.history(A, unit, t),
                   _period(f, t, n)], n)


def element_design(f, static, B, A, unit, t, earlier: np.ndarray):
    """Design for one element of ``b_t``; ``earlier`` holds the values of the
    elements that precede it in generation order (shape ``(n, k)``)."""
    unit = np.asarray(unit)
    t = np.broadcast_to(np.asarray(t), unit.shape)
    n = len(unit)
    return _stack([static[unit], f.history(B, unit, t - 1), f.history(A, unit, t - 1),
                   _period(f, t, n), np.asarray(earlier, dtype=float).reshape(n, -1)], n)

