"""Sum-of-trees regression for continuous and binary responses."""
from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import logit, ndtri
from scipy.stats import chi2

from .. import links
from ..errors import (AllOneClassWarning, DegenerateResponseWarning, DrawOutOfRange, EmptyData,
                      WidthMismatch)
from . import _kernels as K

FORMAT_VERSION = 1
DEFAULT_LEAF_SCALE = {links.IDENTITY: 0.5, links.PROBIT: 3.0, links.LOGISTIC: 6.0}


@dataclass(frozen=True)
class BartHyper:
    """Prior and proposal settings.

    ``leaf_scale`` is ``h`` in the leaf prior ``N(0, h**2 / (w**2 J))``.  It
    defaults to 0.5 for a continuous response on its standardized scale,
    which gives ``1 / (4 w**2 J)``, and to 3 (probit) or 6 (logistic) for
    binary responses on the latent scale.
    """

    tau: float = 0.95
    alpha: float = 2.0
    w: float = 2.0
    num_trees: int = 200
    nu: float = 3.0
    sigma_quantile: float = 0.90
    leaf_scale: float | None = None
    move_probs: tuple[float, float, float, float] = (0.25, 0.25, 0.40, 0.10)
    n_cuts: int = 100
    max_depth: int = 10

    def __post_init__(self):
        if not 0 < self.tau < 1 or self.alpha < 0:
            raise ValueError("split prior needs 0 < tau < 1 and alpha >= 0")
        if self.num_trees < 1 or self.w <= 0:
            raise ValueError("num_trees must be >= 1 and w > 0")
        if not 1 <= self.n_cuts <= 255:
            raise ValueError("n_cuts must lie in 1..255")
        if not 1 <= self.max_depth <= 16:
            raise ValueError("max_depth must lie in 1..16")
        probs = np.asarray(self.move_probs, dtype=float)
        if probs.shape != (4,) or np.any(probs <= 0) or abs(probs.sum() - 1) > 1e-12:
            raise ValueError("move_probs must be four positive numbers summing to 1")
        object.__setattr__(self, "move_probs", tuple(float(p) for p in probs))

    def split_prob(self, depth: int) -> float:
        return self.tau * (1.0 + depth) ** (-self.alpha)

    def leaf_prior_variance(self, link: str = links.IDENTITY) -> float:
        h = self.leaf_scale if self.leaf_scale is not None else DEFAULT_LEAF_SCALE[link]
        return h * h / (self.w * self.w * self.num_trees)


@dataclass(frozen=True)
class MCMCConfig:
    n_iter: int = 15000
    n_burn: int = 10000
    thin: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.n_iter <= self.n_burn or self.n_burn < 0 or self.thin < 1:
            raise ValueError("MCMC needs n_iter > n_burn >= 0 and thin >= 1")

    @property
    def n_draws(self) -> int:
        return (self.n_iter - self.n_burn) // self.thin


def make_grid(X: np.ndarray, n_cuts: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature cutpoints: ``{0.5}`` for 0/1 features, otherwise up to
    ``n_cuts`` quantiles (or midpoints when there are few distinct values)."""
    p = X.shape[1]
    cuts = []
    for q in range(p):
        u = np.unique(X[:, q])
        if len(u) <= 1:
            c = np.empty(0)
        elif len(u) == 2 and u[0] == 0.0 and u[1] == 1.0:
            c = np.array([0.5])
        elif len(u) - 1 <= n_cuts:
            c = 0.5 * (u[1:] + u[:-1])
        else:
            c = np.unique(np.quantile(X[:, q], np.arange(1, n_cuts + 1) / (n_cuts + 1)))
            c = c[c < u[-1]]
        cuts.append(c)
    ncut = np.array([len(c) for c in cuts], dtype=np.int64)
    grid = np.full((p, max(1, ncut.max(initial=0))), np.inf)
    for q, c in enumerate(cuts):
        grid[q, :len(c)] = c
    return grid, ncut


def bin_features(X: np.ndarray, grid: np.ndarray, ncut: np.ndarray) -> np.ndarray:
    Xb = np.empty(X.shape, dtype=np.uint8)
    for q in range(X.shape[1]):
        Xb[:, q] = np.searchsorted(grid[q, :ncut[q]], X[:, q], side="left")
    return Xb


@dataclass(frozen=True, eq=False)
class BartPosterior:
    """Saved ensembles in compact preorder form.

    Draw ``r`` tree ``j`` starts at node ``roots[r, j]``; interior nodes send
    ``x[var] <= cut`` to ``left``.  Leaf values are on the internal scale:
    ``center + scale * sum`` for the identity link, ``link(offset + sum)``
    otherwise.
    """

    link: str
    width: int
    num_trees: int
    node_var: np.ndarray
    node_cut: np.ndarray
    node_value: np.ndarray
    node_left: np.ndarray
    node_right: np.ndarray
    roots: np.ndarray
    sigma: np.ndarray | None = None
    center: float = 0.0
    scale: float = 1.0
    offset: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return self.roots.shape[0]

    def _check(self, X):
        X = np.ascontiguousarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.width:
            raise WidthMismatch(f"expected {self.width} features, got shape {X.shape}")
        return X

    def _arrays(self):
        return self.node_var, self.node_cut, self.node_value, self.node_left, self.node_right

    def _finish(self, s: np.ndarray) -> np.ndarray:
        if self.link == links.IDENTITY:
            return self.center + self.scale * s
        return links.inverse_link(self.offset + s, self.link)

    def predict(self, r: int, X) -> np.ndarray:
        """Mean (identity link) or probability for draw ``r``."""
        if not 0 <= r < self.n_draws:
            raise DrawOutOfRange(f"draw {r} not in 0..{self.n_draws - 1}")
        X = self._check(X)
        return self._finish(K.predict_sum(X, *self._arrays(), self.roots[r]))

    def predict_draws(self, X, draws=None) -> np.ndarray:
        """(n_draws, n_rows) matrix of per-draw predictions."""
        X = self._check(X)
        draws = np.arange(self.n_draws) if draws is None else np.asarray(draws, dtype=np.int64)
        if draws.size and (draws.min() < 0 or draws.max() >= self.n_draws):
            raise DrawOutOfRange("draw index out of range")
        return self._finish(K.predict_sum_many(X, *self._arrays(), self.roots, draws))

    def predict_mean(self, X) -> np.ndarray:
        return self.predict_draws(X).mean(axis=0)

    def depth_counts(self) -> tuple[np.ndarray, np.ndarray]:
        """Per depth: number of nodes present and number that split, over all draws and trees."""
        depth = np.zeros(len(self.node_var), dtype=np.int64)
        # children always follow their parent in preorder
        for k in range(len(self.node_var)):
            if self.node_var[k] >= 0:
                depth[self.node_left[k]] = depth[k] + 1
                depth[self.node_right[k]] = depth[k] + 1
        nmax = depth.max() + 1
        present = np.bincount(depth, minlength=nmax)
        split = np.bincount(depth[self.node_var >= 0], minlength=nmax)
        return present, split

    # -- serialization -------------------------------------------------------

    def save(self, path) -> None:
        meta = {"format_version": FORMAT_VERSION, "link": self.link, "width": self.width,
                "num_trees": self.num_trees, "center": self.center, "scale": self.scale,
                "offset": self.offset, "meta": self.meta}
        arrays = dict(node_var=self.node_var, node_cut=self.node_cut, node_value=self.node_value,
                      node_left=self.node_left, node_right=self.node_right, roots=self.roots)
        if self.sigma is not None:
            arrays["sigma"] = self.sigma
        with open(path, "wb") as fh:
            np.savez(fh, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)

    @classmethod
    def load(cls, path) -> "BartPosterior":
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(z["meta"].tobytes().decode())
            if meta.get("format_version") != FORMAT_VERSION:
                raise ValueError(f"unsupported posterior format {meta.get('format_version')}")
            return cls(link=meta["link"], width=meta["width"], num_trees=meta["num_trees"],
                       node_var=z["node_var"], node_cut=z["node_cut"],
                       node_value=z["node_value"], node_left=z["node_left"],
                       node_right=z["node_right"], roots=z["roots"],
                       sigma=z["sigma"] if "sigma" in z.files else None,
                       center=meta["center"], scale=meta["scale"], offset=meta["offset"],
                       meta=meta["meta"])


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------

def _prepare_X(X) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] == 0:
        raise EmptyData("no rows to fit")
    if not np.all(np.isfinite(X)):
        raise ValueError("feature matrix has missing or infinite values")
    return X


def _sigma_hat(X, z):
    n, p = X.shape
    if n > p + 1:
        D = np.column_stack([np.ones(n), X])
        beta, *_ = np.linalg.lstsq(D, z, rcond=None)
        resid = z - D @ beta
        s = np.sqrt(resid @ resid / (n - np.linalg.matrix_rank(D)))
    else:
        s = np.std(z)
    return max(float(s), 1e-3)


def _run_chain(X, y, kind, link, hyper, mcmc, z, w, state, offset, prior_only=False,
               center=0.0, scale=1.0):
    n, p = X.shape
    grid, ncut = make_grid(X, hyper.n_cuts)
    Xb = bin_features(X, grid, ncut)
    J = hyper.num_trees
    M = 2 ** (hyper.max_depth + 1) - 1
    var = np.full((J, M), K.ABSENT, dtype=np.int32)
    var[:, 0] = K.LEAF
    cut = np.zeros((J, M), dtype=np.int32)
    mu = np.zeros((J, M))
    leaf_of = np.zeros((J, n), dtype=np.int32)
    F = np.zeros(n)
    pmove = np.asarray(hyper.move_probs)
    leafv = hyper.leaf_prior_variance(link)
    args = (var, cut, mu, leaf_of, Xb, ncut, z, w, F, y, kind, state, leafv, hyper.tau,
            hyper.alpha, hyper.max_depth, pmove, prior_only, offset)

    K.seed(mcmc.seed)
    if mcmc.n_burn:
        K.run(mcmc.n_burn, *args, 0)
    D = mcmc.n_draws
    parts = []
    roots = np.empty((D, J), dtype=np.int64)
    sigma = np.empty(D)
    total = 0
    for d in range(D):
        K.run(mcmc.thin, *args, mcmc.n_burn + d * mcmc.thin)
        size = int(K.tree_sizes(var).sum())
        arrs = (np.empty(size, np.int32), np.empty(size), np.empty(size),
                np.empty(size, np.int64), np.empty(size, np.int64))
        K.compact(var, cut, mu, grid, 0, *arrs, roots[d])
        # shift node pointers to their global position
        arrs[3][arrs[3] >= 0] += total
        arrs[4][arrs[4] >= 0] += total
        roots[d] += total
        total += size
        parts.append(arrs)
        sigma[d] = np.sqrt(state[0]) * scale
    cat = [np.concatenate([pt[k] for pt in parts]) for k in range(5)]
    return BartPosterior(
        link=link, width=p, num_trees=J, node_var=cat[0], node_cut=cat[1], node_value=cat[2],
        node_left=cat[3], node_right=cat[4], roots=roots,
        sigma=sigma if kind == K.CONTINUOUS else None, center=center, scale=scale,
        offset=offset, meta={"hyper": asdict(hyper), "mcmc": asdict(mcmc), "n_train": n})


def fit_continuous(X, y, hyper: BartHyper = BartHyper(), mcmc: MCMCConfig = MCMCConfig()
                   ) -> BartPosterior:
    """Gaussian-response ensemble; ``y`` is mapped to [-0.5, 0.5] internally."""
    X = _prepare_X(X)
    y = np.asarray(y, dtype=float).ravel()
    if len(y) != X.shape[0]:
        raise ValueError("X and y have different numbers of rows")
    if not np.all(np.isfinite(y)):
        raise ValueError("response has missing or infinite values")
    lo, hi = float(y.min()), float(y.max())
    center = 0.5 * (lo + hi)
    scale = hi - lo
    if scale == 0:
        warnings.warn("constant response: fit is driven by the prior", DegenerateResponseWarning,
                      stacklevel=2)
        scale = 1.0
    z = (y - center) / scale
    s_hat = _sigma_hat(X, z)
    lam = s_hat ** 2 * chi2.ppf(1.0 - hyper.sigma_quantile, hyper.nu) / hyper.nu
    state = np.array([s_hat ** 2, hyper.nu, lam])
    w = np.full(len(z), 1.0 / s_hat ** 2)
    return _run_chain(X, z.copy(), K.CONTINUOUS, links.IDENTITY, hyper, mcmc, z, w, state, 0.0,
                      center=center, scale=scale)


def fit_binary(X, y, link: str = links.PROBIT, hyper: BartHyper = BartHyper(),
               mcmc: MCMCConfig = MCMCConfig()) -> BartPosterior:
    """Binary-response ensemble with probit (truncated-normal) or logistic
    (Polya-Gamma) data augmentation."""
    X = _prepare_X(X)
    y = np.asarray(y, dtype=float).ravel()
    if len(y) != X.shape[0]:
        raise ValueError("X and y have different numbers of rows")
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise ValueError("binary response must be 0/1")
    if link not in (links.PROBIT, links.LOGISTIC):
        raise ValueError(f"binary link must be probit or logistic, got {link!r}")
    n = len(y)
    ybar = y.mean()
    if ybar in (0.0, 1.0):
        warnings.warn("response has a single class: probabilities shrink toward the prior",
                      AllOneClassWarning, stacklevel=2)
    pbar = float(np.clip(ybar, 1.0 / (n + 1), n / (n + 1.0)))
    if link == links.PROBIT:
        offset = float(ndtri(pbar))
        kind = K.PROBIT
        z = np.where(y > 0.5, 1.0, -1.0) * 0.5
        w = np.ones(n)
    else:
        offset = float(logit(pbar))
        kind = K.LOGISTIC
        w = np.full(n, 0.25)
        z = (y - 0.5) / w - offset
    state = np.array([1.0, 0.0, 0.0])
    return _run_chain(X, y, kind, link, hyper, mcmc, z, w, state, offset)


def sample_prior(X, hyper: BartHyper = BartHyper(), mcmc: MCMCConfig = MCMCConfig()
                 ) -> BartPosterior:
    """Run the tree sampler with the likelihood switched off (prior draws)."""
    X = _prepare_X(X)
    n = X.shape[0]
    state = np.array([1.0, hyper.nu, 1.0])
    return _run_chain(X, np.zeros(n), K.CONTINUOUS, links.IDENTITY, hyper, mcmc, np.zeros(n),
                      np.ones(n), state, 0.0, prior_only=True)
