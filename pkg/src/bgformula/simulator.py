"""Synthetic longitudinal survival data with known counterfactual risks.

Three generators share one engine:

* ``sim51``: three confounders (binary, two continuous with interaction and
  sine terms), an absorbing threshold treatment on ``L2`` and logistic
  event/censoring hazards.
* ``toy``: one binary confounder driven by explicit lookup tables, small
  enough for exact enumeration.
* ``mixed``: one binary and one continuous confounder with a non-absorbing
  logistic treatment.  With the default effects set to zero treatment
  enters no structural equation (a null DGP); true scores are returned.

Every generator can also run under an intervention (treatment set by a
regime, censoring switched off), which is how :func:`true_risk` works.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import expit

from .core import (BINARY, CONTINUOUS, Covariate, LongitudinalDataset, Schema)


class Trajectories(NamedTuple):
    L: np.ndarray          # (n, T, p) covariates
    A: np.ndarray          # (n, T) treatment
    hazard: np.ndarray     # (n, T) P(Y_{t+1}=1 | history through A_t)
    cens: np.ndarray       # (n, T) P(C_{t+1}=1 | history through A_t)
    p_treat: np.ndarray    # (n, T) P(A_t=1 | history), nan when not defined


class RiskEstimate(NamedTuple):
    risk: np.ndarray       # (T,) risk by t* = 1..T
    se: np.ndarray         # (T,) Monte Carlo standard errors


# ---------------------------------------------------------------------------
# DGP definitions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Sim51Config:
    n: int = 1000
    T: int = 5
    psi_c: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.T < 1 or self.psi_c <= 0:
            raise ValueError("Sim51Config needs n >= 1, T >= 1, psi_c > 0")

    name = "sim51"

    @property
    def schema(self) -> Schema:
        return Schema((Covariate("L1", BINARY), Covariate("L2", CONTINUOUS, tailoring=True),
                       Covariate("L3", CONTINUOUS)))

    def natural_rule(self, L_t, a_prev):
        return ((L_t[:, 1] > 0.2) | (a_prev == 1)).astype(float)

    def draw(self, n, rng, regime=None) -> Trajectories:
        T = self.T
        L = np.empty((n, T, 3))
        A = np.empty((n, T))
        haz = np.empty((n, T))
        cens = np.empty((n, T))
        pt = np.full((n, T), np.nan)
        a_prev = np.zeros(n)
        for t in range(T):
            z = rng.standard_normal((n, 2))
            u = rng.random(n)
            if t == 0:
                L[:, 0, 0] = u < 0.5
                L[:, 0, 1:] = 0.1 * z
            else:
                l1, l2, l3 = L[:, t - 1, 0], L[:, t - 1, 1], L[:, t - 1, 2]
                base = -2 * a_prev + 0.2 * l1 + l2 * l3
                L[:, t, 0] = np.where(l1 == 1, 1.0, u < expit(base - l2 * l3))
                L[:, t, 1] = base + np.sin(l2) + 0.1 * z[:, 0]
                L[:, t, 2] = base + np.sin(l3) + 0.1 * z[:, 1]
            ua = rng.random(n)
            A[:, t] = _assign(regime, self.natural_rule(L[:, t], a_prev), L[:, :t + 1, 1:2],
                              A[:, :t], ua)
            pt[:, t] = self.natural_rule(L[:, t], a_prev)
            a_prev = A[:, t]
            l1, l2, l3 = L[:, t, 0], L[:, t, 1], L[:, t, 2]
            haz[:, t] = expit(-2 - 3 * a_prev + l1 - 6 * l2 * l3 + 6 * l1 * l2 ** 2)
            cens[:, t] = expit(-self.psi_c - a_prev + 0.75 * l1 * np.cos(-0.5 * l2) - 0.5 * l2 * l3)
        return Trajectories(L, A, haz, cens, pt)


@dataclass(frozen=True)
class ToyDgpConfig:
    """Single binary confounder ``L`` with lookup-table dynamics.

    Tables (scalars broadcast):

    * ``p_l0``: P(L_0 = 1)
    * ``p_l[l_prev, a_prev]``: P(L_t = 1) for t >= 1
    * ``p_a[l, a_prev]``: P(A_t = 1) (``a_prev = 0`` at t = 0)
    * ``hazard[t, l, a]``: P(Y_{t+1} = 1 | L_t = l, A_t = a, at risk)
    * ``cens[t, l, a]``: P(C_{t+1} = 1 | L_t = l, A_t = a)
    """

    n: int = 1000
    T: int = 2
    p_l0: float = 0.5
    p_l: object = 0.5
    p_a: object = 0.5
    hazard: object = 0.1
    cens: object = 0.0
    tailoring: bool = False
    seed: int = 0

    name = "toy"

    def __post_init__(self):
        if not 1 <= self.T <= 3:
            raise ValueError("toy DGP supports 1 <= T <= 3")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        for nm, shape in self._shapes().items():
            arr = np.broadcast_to(np.asarray(getattr(self, nm), dtype=float), shape).copy()
            if np.any((arr < 0) | (arr > 1)) or np.any(np.isnan(arr)):
                raise ValueError(f"table {nm} must hold probabilities in [0, 1]")
            arr.setflags(write=False)
            object.__setattr__(self, nm, arr)
        object.__setattr__(self, "p_l0", float(self.p_l0))
        if not 0 <= self.p_l0 <= 1:
            raise ValueError("p_l0 must be a probability")

    def _shapes(self):
        return {"p_l": (2, 2), "p_a": (2, 2), "hazard": (self.T, 2, 2), "cens": (self.T, 2, 2)}

    @property
    def schema(self) -> Schema:
        return Schema((Covariate("L", BINARY, tailoring=self.tailoring),))

    def draw(self, n, rng, regime=None) -> Trajectories:
        T = self.T
        L = np.empty((n, T, 1))
        A = np.empty((n, T))
        haz = np.empty((n, T))
        cens = np.empty((n, T))
        pt = np.empty((n, T))
        a_prev = np.zeros(n, dtype=int)
        for t in range(T):
            u = rng.random(n)
            if t == 0:
                l = (u < self.p_l0).astype(int)
            else:
                l = (u < self.p_l[L[:, t - 1, 0].astype(int), a_prev]).astype(int)
            L[:, t, 0] = l
            p = self.p_a[l, a_prev]
            pt[:, t] = p
            ua = rng.random(n)
            a = _assign(regime, (ua < p).astype(float), L[:, :t + 1, :], A[:, :t], ua).astype(int)
            A[:, t] = a
            haz[:, t] = self.hazard[t, l, a]
            cens[:, t] = self.cens[t, l, a]
            a_prev = a
        return Trajectories(L, A, haz, cens, pt)


@dataclass(frozen=True)
class MixedDgpConfig:
    """One binary and one continuous confounder, non-absorbing treatment.

    ``a_on_y`` and ``a_on_l`` add treatment effects on the event hazard and
    on the next-period ``L2`` mean; both zero gives a structural null.
    ``quad`` scales the ``L2**2`` term of the hazard (zero makes every
    equation a GLM).
    """

    n: int = 1000
    T: int = 3
    quad: float = 0.5
    a_on_y: float = 0.0
    a_on_l: float = 0.0
    seed: int = 0

    name = "mixed"

    @property
    def schema(self) -> Schema:
        return Schema((Covariate("L1", BINARY), Covariate("L2", CONTINUOUS, tailoring=True)))

    def draw(self, n, rng, regime=None) -> Trajectories:
        T = self.T
        L = np.empty((n, T, 2))
        A = np.empty((n, T))
        haz = np.empty((n, T))
        cens = np.empty((n, T))
        pt = np.empty((n, T))
        a_prev = np.zeros(n)
        for t in range(T):
            u = rng.random(n)
            z = rng.standard_normal(n)
            if t == 0:
                L[:, 0, 0] = u < 0.5
                L[:, 0, 1] = 0.5 * z
            else:
                l1, l2 = L[:, t - 1, 0], L[:, t - 1, 1]
                L[:, t, 0] = u < expit(-0.5 + l1 + 0.5 * l2)
                L[:, t, 1] = 0.5 * l2 + 0.3 * l1 + self.a_on_l * a_prev + 0.5 * z
            l1, l2 = L[:, t, 0], L[:, t, 1]
            p = expit(-0.3 + 0.8 * l1 + 0.8 * l2)
            pt[:, t] = p
            ua = rng.random(n)
            A[:, t] = _assign(regime, (ua < p).astype(float), L[:, :t + 1, 1:2], A[:, :t], ua)
            a_prev = A[:, t]
            haz[:, t] = expit(-2 + 0.7 * l1 + self.quad * l2 ** 2 + self.a_on_y * a_prev)
            cens[:, t] = expit(-3 + 0.3 * l2)
        return Trajectories(L, A, haz, cens, pt)


def null_dgp(n: int = 1000, T: int = 3, seed: int = 0) -> MixedDgpConfig:
    return MixedDgpConfig(n=n, T=T, seed=seed)


def _assign(regime, natural, h_hist, a_hist, u):
    if regime is None:
        return natural
    return regime.assign_batch(h_hist, a_hist, u).astype(float)


# ---------------------------------------------------------------------------
# observed data
# ---------------------------------------------------------------------------

class SimulatedData(NamedTuple):
    data: LongitudinalDataset
    p_treat: np.ndarray    # per row, true P(A_t = 1 | history)
    p_uncens: np.ndarray   # per row, true P(C_{t+1} = 0 | history, observed A_t)
    p_uncens_treated: np.ndarray  # per row, same with A_t set to 1 (when available)


def simulate(cfg, return_truth: bool = False):
    """Observed-data draw from ``cfg`` (natural course, censoring on)."""
    rng = np.random.default_rng(cfg.seed)
    n, T = cfg.n, cfg.T
    tr = cfg.draw(n, rng)
    uc = rng.random((n, T))
    uy = rng.random((n, T))
    c = uc < tr.cens
    y = (~c) & (uy < tr.hazard)
    terminal = c | y
    stop = np.where(terminal.any(axis=1), terminal.argmax(axis=1), T - 1)
    counts = stop + 1
    subj = np.repeat(np.arange(n), counts)
    t = np.concatenate([np.arange(k) for k in counts])
    c_next = c[subj, t].astype(int)
    y_next = np.where(c_next == 1, np.nan, y[subj, t].astype(float))
    width = len(str(n - 1))
    ids = np.array([f"s{i:0{width}d}" for i in range(n)], dtype=object)[subj]
    data = LongitudinalDataset.from_arrays(ids, t, tr.A[subj, t], c_next, y_next,
                                           tr.L[subj, t], cfg.schema, horizon=T)
    if not return_truth:
        return data
    p_treat = tr.p_treat[subj, t]
    p_unc = 1.0 - tr.cens[subj, t]
    p_unc_treated = _uncens_if_treated(cfg, tr, subj, t)
    return SimulatedData(data, p_treat, p_unc, p_unc_treated)


def _uncens_if_treated(cfg, tr, subj, t):
    if isinstance(cfg, ToyDgpConfig):
        l = tr.L[subj, t, 0].astype(int)
        return 1.0 - cfg.cens[t, l, 1]
    if isinstance(cfg, MixedDgpConfig):
        return 1.0 - tr.cens[subj, t]
    l1, l2, l3 = (tr.L[subj, t, k] for k in range(3))
    return 1.0 - expit(-cfg.psi_c - 1 + 0.75 * l1 * np.cos(-0.5 * l2) - 0.5 * l2 * l3)


def generate_sim51(cfg: Sim51Config) -> LongitudinalDataset:
    return simulate(cfg)


def generate_toy(cfg: ToyDgpConfig) -> LongitudinalDataset:
    return simulate(cfg)


def generate_mixed(cfg: MixedDgpConfig) -> LongitudinalDataset:
    return simulate(cfg)


# ---------------------------------------------------------------------------
# counterfactual truth
# ---------------------------------------------------------------------------

def true_risk_curve(cfg, regime=None, M: int = 1_000_000, seed: int = 0,
                    chunk: int = 200_000) -> RiskEstimate:
    """Counterfactual risk at every t* under ``regime`` with censoring removed.

    ``regime=None`` is the natural course.  Each simulated covariate path
    contributes its conditional event probability ``1 - prod(1 - h_s)``,
    which has the same mean as simulating the event indicator but lower
    variance.
    """
    rng = np.random.default_rng(seed)
    T = cfg.T
    s1 = np.zeros(T)
    s2 = np.zeros(T)
    done = 0
    while done < M:
        m = min(chunk, M - done)
        tr = cfg.draw(m, rng, regime)
        risk = 1.0 - np.cumprod(1.0 - tr.hazard, axis=1)
        s1 += risk.sum(axis=0)
        s2 += (risk ** 2).sum(axis=0)
        done += m
    mean = s1 / M
    var = np.maximum(s2 / M - mean ** 2, 0.0)
    return RiskEstimate(mean, np.sqrt(var / M))


def true_risk(regime, dgp, t_star: int, M: int = 1_000_000, seed: int = 0) -> tuple[float, float]:
    """(risk, Monte Carlo SE) at period ``t_star`` (1-based)."""
    if not 1 <= t_star <= dgp.T:
        raise ValueError(f"t_star must lie in 1..{dgp.T}")
    est = true_risk_curve(dgp, regime, M=M, seed=seed)
    return float(est.risk[t_star - 1]), float(est.se[t_star - 1])


def toy_exact_risk(cfg: ToyDgpConfig, regime=None) -> np.ndarray:
    """Exact counterfactual risk curve for the toy DGP by enumerating histories.

    ``regime`` must be deterministic (or ``None`` for the natural course).
    """
    T = cfg.T
    risk = np.zeros(T)

    def walk(t, l_hist, a_hist, mass, surv):
        # mass: probability of the covariate/treatment path; surv: P(no event before t)
        for l in (0, 1):
            if t == 0:
                pl = cfg.p_l0 if l else 1 - cfg.p_l0
            else:
                p1 = cfg.p_l[l_hist[-1], a_hist[-1]]
                pl = p1 if l else 1 - p1
            if pl == 0:
                continue
            lh = l_hist + [l]
            a_prev = a_hist[-1] if a_hist else 0
            if regime is None:
                pa1 = cfg.p_a[l, a_prev]
                options = [(0, 1 - pa1), (1, pa1)]
            else:
                h = np.asarray(lh, dtype=float).reshape(1, -1, 1)
                ah = np.asarray(a_hist, dtype=float).reshape(1, -1)
                a = int(regime.assign_batch(h, ah, np.zeros(1))[0])
                options = [(a, 1.0)]
            for a, pa in options:
                if pa == 0:
                    continue
                w = mass * pl * pa
                hz = cfg.hazard[t, l, a]
                risk[t:] += w * surv * hz
                if t + 1 < T:
                    walk(t + 1, lh, a_hist + [a], w, surv * (1 - hz))

    walk(0, [], [], 1.0, 1.0)
    return risk


DGPS = {"sim51": Sim51Config, "toy": ToyDgpConfig, "mixed": MixedDgpConfig}
