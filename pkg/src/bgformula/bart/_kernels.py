"""Numba kernels for the sum-of-trees sampler.

Working trees live in heap layout: node ``i`` has children ``2i+1`` (rule
``x <= cut`` true) and ``2i+2``.  ``var[i] >= 0`` marks an interior node,
``LEAF`` a terminal node and ``ABSENT`` an unused slot.  Cuts are indices
into a per-feature grid and the design is pre-binned so that
``x <= grid[v, k]`` iff ``Xb[:, v] <= k``.

The sampler uses numba's global RNG; seed it with :func:`seed` before a
chain.  Interleaving two chains in one thread breaks reproducibility.
"""
import math

import numpy as np
from numba import njit

LEAF = -1
ABSENT = -2
GROW, PRUNE, CHANGE, SWAP = 0, 1, 2, 3

CONTINUOUS, PROBIT, LOGISTIC = 0, 1, 2

_PG_TRUNC = 0.64


@njit(cache=True)
def seed(s):
    np.random.seed(s)


@njit(cache=True)
def depth_of(i):
    d = 0
    while i > 0:
        i = (i - 1) // 2
        d += 1
    return d


@njit(cache=True)
def split_prob(d, tau, alpha):
    return tau * (1.0 + d) ** (-alpha)


@njit(cache=True)
def lml(W, S, v):
    """Log marginal likelihood of a leaf (up to terms shared by all trees)."""
    return -0.5 * math.log1p(W * v) + 0.5 * S * S / (W + 1.0 / v)


@njit(cache=True)
def leaf_posterior(W, S, v):
    """Conditional posterior (mean, variance) of a leaf value with prior N(0, v)."""
    prec = W + 1.0 / v
    return S / prec, 1.0 / prec


# ---------------------------------------------------------------------------
# tree helpers
# ---------------------------------------------------------------------------

@njit(cache=True)
def _bounds(var, cut, node, ncut, lo, hi):
    """Available cut-index range per feature at ``node`` given its ancestors."""
    for q in range(ncut.shape[0]):
        lo[q] = 0
        hi[q] = ncut[q] - 1
    c = node
    while c > 0:
        par = (c - 1) // 2
        q = var[par]
        if c == 2 * par + 1:
            if cut[par] - 1 < hi[q]:
                hi[q] = cut[par] - 1
        else:
            if cut[par] + 1 > lo[q]:
                lo[q] = cut[par] + 1
        c = par
    nv = 0
    for q in range(ncut.shape[0]):
        if hi[q] >= lo[q]:
            nv += 1
    return nv


@njit(cache=True)
def _preorder(var, out, stack):
    """Existing nodes in preorder; returns the count."""
    n = 0
    top = 0
    stack[0] = 0
    while top >= 0:
        q = stack[top]
        top -= 1
        out[n] = q
        n += 1
        if var[q] >= 0:
            top += 1
            stack[top] = 2 * q + 2
            top += 1
            stack[top] = 2 * q + 1
    return n


@njit(cache=True)
def _subtree_preorder(var, root, out, stack):
    n = 0
    top = 0
    stack[0] = root
    while top >= 0:
        q = stack[top]
        top -= 1
        out[n] = q
        n += 1
        if var[q] >= 0:
            top += 1
            stack[top] = 2 * q + 2
            top += 1
            stack[top] = 2 * q + 1
    return n


@njit(cache=True)
def log_prior_subtree(var, cut, root, ncut, tau, alpha, maxdepth, lo, hi, buf, stack):
    """Log prior of the subtree at ``root``: split/stop terms plus uniform rule terms.

    A node with no available rule (or at ``maxdepth``) cannot split.  A rule
    outside its available range has prior zero.
    """
    n = _subtree_preorder(var, root, buf, stack)
    lp = 0.0
    for s in range(n):
        q = buf[s]
        d = depth_of(q)
        nv = _bounds(var, cut, q, ncut, lo, hi)
        if var[q] >= 0:
            v = var[q]
            k = cut[q]
            if d >= maxdepth or k < lo[v] or k > hi[v]:
                return -np.inf
            lp += math.log(split_prob(d, tau, alpha)) - math.log(nv) - math.log(hi[v] - lo[v] + 1)
        elif d < maxdepth and nv > 0:
            lp += math.log1p(-split_prob(d, tau, alpha))
    return lp


@njit(cache=True)
def _count_growable(var, cut, ncut, maxdepth, nodes, nn, lo, hi, cand):
    nb = 0
    for s in range(nn):
        q = nodes[s]
        if var[q] == LEAF and depth_of(q) < maxdepth:
            if _bounds(var, cut, q, ncut, lo, hi) > 0:
                cand[nb] = q
                nb += 1
    return nb


@njit(cache=True)
def _count_nog(var, nodes, nn, cand):
    w = 0
    for s in range(nn):
        q = nodes[s]
        if var[q] >= 0 and var[2 * q + 1] == LEAF and var[2 * q + 2] == LEAF:
            cand[w] = q
            w += 1
    return w


@njit(cache=True)
def _pick_rule(lo, hi, ncut):
    nv = 0
    for q in range(ncut.shape[0]):
        if hi[q] >= lo[q]:
            nv += 1
    pick = np.random.randint(0, nv)
    for q in range(ncut.shape[0]):
        if hi[q] >= lo[q]:
            if pick == 0:
                return q, lo[q] + np.random.randint(0, hi[q] - lo[q] + 1)
            pick -= 1
    return -1, -1


@njit(cache=True)
def _route(var, cut, Xb, i, start):
    q = start
    while var[q] >= 0:
        if Xb[i, var[q]] <= cut[q]:
            q = 2 * q + 1
        else:
            q = 2 * q + 2
    return q


@njit(cache=True)
def _in_subtree(q, p):
    while q > p:
        q = (q - 1) // 2
    return q == p


@njit(cache=True)
def _split_stats(leaf, a, b, Xb, v, k, w, r):
    """Counts and sums on each side of rule (v, k) over rows in leaves ``a`` or ``b``.

    Branch-free in the rule test: the split side is close to random and a
    mispredicted branch per row dominates the cost otherwise.
    """
    nL = 0
    nT = 0
    WL = 0.0
    SL = 0.0
    WT = 0.0
    ST = 0.0
    for i in range(leaf.shape[0]):
        q = leaf[i]
        if q == a or q == b:
            wi = w[i]
            si = wi * r[i]
            g = 1 if Xb[i, v] <= k else 0
            nL += g
            nT += 1
            WL += g * wi
            SL += g * si
            WT += wi
            ST += si
    return nL, nT - nL, WL, SL, WT - WL, ST - SL


# ---------------------------------------------------------------------------
# Metropolis-Hastings ratios (exposed for tests)
# ---------------------------------------------------------------------------

@njit(cache=True)
def grow_log_ratio(var, cut, node, v, k, WL, SL, WR, SR, ncut, leafv, tau, alpha, maxdepth,
                   pmove, prior_only):
    """Log MH ratio for splitting leaf ``node`` on rule (v, k); tree left unchanged."""
    M = var.shape[0]
    p = ncut.shape[0]
    lo = np.empty(p, np.int64)
    hi = np.empty(p, np.int64)
    nodes = np.empty(M, np.int64)
    cand = np.empty(M, np.int64)
    stack = np.empty(2 * maxdepth + 4, np.int64)
    nn = _preorder(var, nodes, stack)
    nint = 0
    for s in range(nn):
        if var[nodes[s]] >= 0:
            nint += 1
    nb = _count_growable(var, cut, ncut, maxdepth, nodes, nn, lo, hi, cand)
    w0 = _count_nog(var, nodes, nn, cand)
    lp0 = log_prior_subtree(var, cut, node, ncut, tau, alpha, maxdepth, lo, hi, cand, stack)
    var[node] = v
    cut[node] = k
    var[2 * node + 1] = LEAF
    var[2 * node + 2] = LEAF
    lp1 = log_prior_subtree(var, cut, node, ncut, tau, alpha, maxdepth, lo, hi, cand, stack)
    var[node] = LEAF
    var[2 * node + 1] = ABSENT
    var[2 * node + 2] = ABSENT
    # the rule is proposed from its prior, so its probability cancels
    nv = _bounds(var, cut, node, ncut, lo, hi)
    lrule = math.log(nv) + math.log(hi[v] - lo[v] + 1)
    wstar = w0 + 1
    if node != 0:
        sib = node + 1 if node % 2 == 1 else node - 1
        if var[sib] == LEAF:
            wstar -= 1
    pg = 1.0 if nint == 0 else pmove[GROW]
    lik = 0.0
    if not prior_only:
        lik = lml(WL, SL, leafv) + lml(WR, SR, leafv) - lml(WL + WR, SL + SR, leafv)
    return (lik + lp1 - lp0 + lrule + math.log(pmove[PRUNE]) - math.log(wstar) - math.log(pg)
            + math.log(nb))


@njit(cache=True)
def prune_log_ratio(var, cut, node, WL, SL, WR, SR, ncut, leafv, tau, alpha, maxdepth,
                    pmove, prior_only):
    """Log MH ratio for collapsing nog node ``node``; tree left unchanged."""
    M = var.shape[0]
    p = ncut.shape[0]
    lo = np.empty(p, np.int64)
    hi = np.empty(p, np.int64)
    nodes = np.empty(M, np.int64)
    cand = np.empty(M, np.int64)
    stack = np.empty(2 * maxdepth + 4, np.int64)
    nn = _preorder(var, nodes, stack)
    wn = _count_nog(var, nodes, nn, cand)
    lp0 = log_prior_subtree(var, cut, node, ncut, tau, alpha, maxdepth, lo, hi, cand, stack)
    v = var[node]
    nv = _bounds(var, cut, node, ncut, lo, hi)
    lrule = math.log(nv) + math.log(hi[v] - lo[v] + 1)
    var[node] = LEAF
    var[2 * node + 1] = ABSENT
    var[2 * node + 2] = ABSENT
    lp1 = log_prior_subtree(var, cut, node, ncut, tau, alpha, maxdepth, lo, hi, cand, stack)
    nn = _preorder(var, nodes, stack)
    bstar = _count_growable(var, cut, ncut, maxdepth, nodes, nn, lo, hi, cand)
    var[node] = v
    var[2 * node + 1] = LEAF
    var[2 * node + 2] = LEAF
    pg = 1.0 if node == 0 else pmove[GROW]
    lik = 0.0
    if not prior_only:
        lik = lml(WL + WR, SL + SR, leafv) - lml(WL, SL, leafv) - lml(WR, SR, leafv)
    return (lik + lp1 - lp0 - lrule + math.log(pg) - math.log(bstar) - math.log(pmove[PRUNE])
            + math.log(wn))


# ---------------------------------------------------------------------------
# one tree update
# ---------------------------------------------------------------------------

@njit(cache=True)
def _update_tree(var, cut, mu, leaf, Xb, ncut, r, w, leafv, tau, alpha, maxdepth, pmove,
                 prior_only, nodes, cand, cand2, stack, buf, lo, hi, ST, cntB, WB, SB,
                 newleaf):
    """One MH move on the tree followed by a draw of its leaf values.

    ``ST[2q]`` and ``ST[2q+1]`` hold the weight sum and weighted residual sum
    of leaf ``q`` of the current tree; they are kept current through the
    move and zeroed on return.
    """
    n = r.shape[0]
    nn = _preorder(var, nodes, stack)
    nint = 0
    for s in range(nn):
        if var[nodes[s]] >= 0:
            nint += 1
    if nint == 0:
        move = GROW
    else:
        u = np.random.random()
        acc = 0.0
        move = SWAP
        for m in range(4):
            acc += pmove[m]
            if u < acc:
                move = m
                break

    if move == GROW:
        nb = _count_growable(var, cut, ncut, maxdepth, nodes, nn, lo, hi, cand)
        if nb > 0:
            ell = cand[np.random.randint(0, nb)]
            _bounds(var, cut, ell, ncut, lo, hi)
            v, k = _pick_rule(lo, hi, ncut)
            nL, nR, WL, SL, WR, SR = _split_stats(leaf, ell, ell, Xb, v, k, w, r)
            if prior_only or (nL > 0 and nR > 0):
                la = grow_log_ratio(var, cut, ell, v, k, WL, SL, WR, SR, ncut, leafv, tau, alpha,
                                    maxdepth, pmove, prior_only)
                if math.log(np.random.random()) < la:
                    var[ell] = v
                    cut[ell] = k
                    var[2 * ell + 1] = LEAF
                    var[2 * ell + 2] = LEAF
                    for i in range(n):
                        if leaf[i] == ell:
                            leaf[i] = 2 * ell + 1 if Xb[i, v] <= k else 2 * ell + 2
                    ST[2 * (2 * ell + 1)] = WL
                    ST[2 * (2 * ell + 1) + 1] = SL
                    ST[2 * (2 * ell + 2)] = WR
                    ST[2 * (2 * ell + 2) + 1] = SR
                    ST[2 * ell] = 0.0
                    ST[2 * ell + 1] = 0.0

    elif move == PRUNE:
        wn = _count_nog(var, nodes, nn, cand)
        eta = cand[np.random.randint(0, wn)]
        lc = 2 * eta + 1
        rc = 2 * eta + 2
        la = prune_log_ratio(var, cut, eta, ST[2 * lc], ST[2 * lc + 1], ST[2 * rc],
                             ST[2 * rc + 1], ncut, leafv, tau, alpha, maxdepth, pmove, prior_only)
        if math.log(np.random.random()) < la:
            var[eta] = LEAF
            var[lc] = ABSENT
            var[rc] = ABSENT
            for i in range(n):
                if leaf[i] == lc or leaf[i] == rc:
                    leaf[i] = eta
            ST[2 * eta] = ST[2 * lc] + ST[2 * rc]
            ST[2 * eta + 1] = ST[2 * lc + 1] + ST[2 * rc + 1]
            ST[2 * lc] = 0.0
            ST[2 * lc + 1] = 0.0
            ST[2 * rc] = 0.0
            ST[2 * rc + 1] = 0.0

    elif move == CHANGE:
        wn = _count_nog(var, nodes, nn, cand)
        eta = cand[np.random.randint(0, wn)]
        lc = 2 * eta + 1
        rc = 2 * eta + 2
        _bounds(var, cut, eta, ncut, lo, hi)
        v, k = _pick_rule(lo, hi, ncut)
        n1L, n1R, W1L, S1L, W1R, S1R = _split_stats(leaf, lc, rc, Xb, v, k, w, r)
        if prior_only or (n1L > 0 and n1R > 0):
            lik = 0.0
            if not prior_only:
                lik = (lml(W1L, S1L, leafv) + lml(W1R, S1R, leafv)
                       - lml(ST[2 * lc], ST[2 * lc + 1], leafv) - lml(ST[2 * rc], ST[2 * rc + 1], leafv))
            lp0 = log_prior_subtree(var, cut, eta, ncut, tau, alpha, maxdepth, lo, hi, buf, stack)
            ov = var[eta]
            ok = cut[eta]
            var[eta] = v
            cut[eta] = k
            lp1 = log_prior_subtree(var, cut, eta, ncut, tau, alpha, maxdepth, lo, hi, buf, stack)
            if math.log(np.random.random()) < lik + lp1 - lp0:
                for i in range(n):
                    if leaf[i] == lc or leaf[i] == rc:
                        leaf[i] = lc if Xb[i, v] <= k else rc
                ST[2 * lc] = W1L
                ST[2 * lc + 1] = S1L
                ST[2 * rc] = W1R
                ST[2 * rc + 1] = S1R
            else:
                var[eta] = ov
                cut[eta] = ok

    else:
        npair = 0
        for s in range(nn):
            q = nodes[s]
            if var[q] >= 0:
                for c in (2 * q + 1, 2 * q + 2):
                    if var[c] >= 0:
                        cand[npair] = q
                        cand2[npair] = c
                        npair += 1
        if npair > 0:
            pick = np.random.randint(0, npair)
            p = cand[pick]
            c = cand2[pick]
            sib = 2 * p + 2 if c == 2 * p + 1 else 2 * p + 1
            both = var[sib] >= 0 and var[sib] == var[c] and cut[sib] == cut[c]
            lp0 = log_prior_subtree(var, cut, p, ncut, tau, alpha, maxdepth, lo, hi, buf, stack)
            pv = var[p]
            pk = cut[p]
            cv = var[c]
            ck = cut[c]
            var[p] = cv
            cut[p] = ck
            var[c] = pv
            cut[c] = pk
            if both:
                var[sib] = pv
                cut[sib] = pk
            lp1 = log_prior_subtree(var, cut, p, ncut, tau, alpha, maxdepth, lo, hi, buf, stack)
            accept = lp1 > -np.inf
            lik = 0.0
            nl = 0
            if accept:
                nl = _subtree_preorder(var, p, buf, stack)
                for i in range(n):
                    if _in_subtree(leaf[i], p):
                        q1 = _route(var, cut, Xb, i, p)
                        newleaf[i] = q1
                        cntB[q1] += 1
                        WB[q1] += w[i]
                        SB[q1] += w[i] * r[i]
                    else:
                        newleaf[i] = leaf[i]
                for s in range(nl):
                    q = buf[s]
                    if var[q] == LEAF:
                        if not prior_only:
                            if cntB[q] == 0:
                                accept = False
                            lik += lml(WB[q], SB[q], leafv) - lml(ST[2 * q], ST[2 * q + 1], leafv)
            if accept and math.log(np.random.random()) < lik + lp1 - lp0:
                for i in range(n):
                    leaf[i] = newleaf[i]
                for s in range(nl):
                    q = buf[s]
                    ST[2 * q] = WB[q]
                    ST[2 * q + 1] = SB[q]
            else:
                var[p] = pv
                cut[p] = pk
                var[c] = cv
                cut[c] = ck
                if both:
                    var[sib] = cv
                    cut[sib] = ck
            for s in range(nl):
                q = buf[s]
                cntB[q] = 0
                WB[q] = 0.0
                SB[q] = 0.0

    # leaf values from their conditional posteriors
    nn = _preorder(var, nodes, stack)
    for s in range(nn):
        q = nodes[s]
        if var[q] == LEAF:
            if prior_only:
                m, s2 = leaf_posterior(0.0, 0.0, leafv)
            else:
                m, s2 = leaf_posterior(ST[2 * q], ST[2 * q + 1], leafv)
            mu[q] = m + math.sqrt(s2) * np.random.standard_normal()
        ST[2 * q] = 0.0
        ST[2 * q + 1] = 0.0


# ---------------------------------------------------------------------------
# latent-variable samplers
# ---------------------------------------------------------------------------

@njit(cache=True)
def tn_above(a):
    """Standard normal truncated to (a, inf)."""
    if a < 0.4:
        while True:
            x = np.random.standard_normal()
            if x > a:
                return x
    lam = 0.5 * (a + math.sqrt(a * a + 4.0))
    while True:
        x = a + np.random.exponential(1.0 / lam)
        if np.random.random() < math.exp(-0.5 * (x - lam) ** 2):
            return x


@njit(cache=True)
def _log_pnorm(x):
    val = 0.5 * math.erfc(-x / math.sqrt(2.0))
    if val <= 0.0:
        return -np.inf
    return math.log(val)


@njit(cache=True)
def _pg_a(n, x):
    K = (n + 0.5) * math.pi
    if x > _PG_TRUNC:
        return K * math.exp(-0.5 * K * K * x)
    if x > 0:
        return math.exp(-1.5 * (math.log(0.5 * math.pi) + math.log(x)) + math.log(K)
                        - 2.0 * (n + 0.5) * (n + 0.5) / x)
    return 0.0


@njit(cache=True)
def _pg_mass_texpon(z):
    t = _PG_TRUNC
    fz = 0.125 * math.pi * math.pi + 0.5 * z * z
    b = math.sqrt(1.0 / t) * (t * z - 1.0)
    a = -math.sqrt(1.0 / t) * (t * z + 1.0)
    x0 = math.log(fz) + fz * t
    xb = x0 - z + _log_pnorm(b)
    xa = x0 + z + _log_pnorm(a)
    qdivp = 4.0 / math.pi * (math.exp(xb) + math.exp(xa))
    return 1.0 / (1.0 + qdivp)


@njit(cache=True)
def _pg_rtigauss(z):
    t = _PG_TRUNC
    x = t + 1.0
    if 1.0 / t > z:
        alpha = 0.0
        while np.random.random() > alpha:
            e1 = np.random.exponential(1.0)
            e2 = np.random.exponential(1.0)
            while e1 * e1 > 2.0 * e2 / t:
                e1 = np.random.exponential(1.0)
                e2 = np.random.exponential(1.0)
            x = 1.0 + e1 * t
            x = t / (x * x)
            alpha = math.exp(-0.5 * z * z * x)
    else:
        mu = 1.0 / z
        while x > t:
            y = np.random.standard_normal()
            y *= y
            half_mu = 0.5 * mu
            mu_y = mu * y
            x = mu + half_mu * mu_y - half_mu * math.sqrt(4.0 * mu_y + mu_y * mu_y)
            if np.random.random() > mu / (mu + x):
                x = mu * mu / x
    return x


@njit(cache=True)
def pg1(c):
    """Draw from the Polya-Gamma PG(1, c) law (Devroye-style alternating series)."""
    z = abs(c) * 0.5
    fz = 0.125 * math.pi * math.pi + 0.5 * z * z
    while True:
        if np.random.random() < _pg_mass_texpon(z):
            x = _PG_TRUNC + np.random.exponential(1.0) / fz
        else:
            x = _pg_rtigauss(z)
        s = _pg_a(0, x)
        y = np.random.random() * s
        n = 0
        while True:
            n += 1
            if n % 2 == 1:
                s -= _pg_a(n, x)
                if y <= s:
                    return 0.25 * x
            else:
                s += _pg_a(n, x)
                if y > s:
                    break


@njit(cache=True)
def pg1_many(c, out):
    for i in range(c.shape[0]):
        out[i] = pg1(c[i])


# ---------------------------------------------------------------------------
# chain driver
# ---------------------------------------------------------------------------

@njit(cache=True)
def run(n_steps, var, cut, mu, leaf_of, Xb, ncut, z, w, F, y, kind, state, leafv, tau, alpha,
        maxdepth, pmove, prior_only, off, sweep0):
    """Advance the chain ``n_steps`` full sweeps.

    ``state`` holds ``[sigma2, nu, lam]`` for the continuous response.  For
    binary responses ``z`` and ``w`` are the working response and weights
    of the augmented Gaussian model.
    """
    J, M = var.shape
    n = z.shape[0]
    p = ncut.shape[0]
    r = np.empty(n)
    nodes = np.empty(M, np.int64)
    cand = np.empty(M, np.int64)
    cand2 = np.empty(M, np.int64)
    buf = np.empty(M, np.int64)
    stack = np.empty(2 * maxdepth + 4, np.int64)
    lo = np.empty(p, np.int64)
    hi = np.empty(p, np.int64)
    ST = np.zeros(2 * M)
    cntB = np.zeros(M, np.int64)
    WB = np.zeros(M)
    SB = np.zeros(M)
    newleaf = np.empty(n, np.int32)
    sweep = sweep0
    for _ in range(n_steps):
        # partial residual excluding tree 0, with tree-0 leaf statistics
        mu0 = mu[0]
        l0 = leaf_of[0]
        for i in range(n):
            r[i] = z[i] - F[i] + mu0[l0[i]]
            q = 2 * l0[i]
            ST[q] += w[i]
            ST[q + 1] += w[i] * r[i]
        for j in range(J):
            muj = mu[j]
            lj = leaf_of[j]
            _update_tree(var[j], cut[j], muj, lj, Xb, ncut, r, w, leafv, tau, alpha, maxdepth,
                         pmove, prior_only, nodes, cand, cand2, stack, buf, lo, hi,
                         ST, cntB, WB, SB, newleaf)
            if j + 1 < J:
                mun = mu[j + 1]
                ln = leaf_of[j + 1]
                for i in range(n):
                    ri = r[i] - muj[lj[i]] + mun[ln[i]]
                    r[i] = ri
                    q = 2 * ln[i]
                    ST[q] += w[i]
                    ST[q + 1] += w[i] * ri
        muj = mu[J - 1]
        lj = leaf_of[J - 1]
        for i in range(n):
            F[i] = z[i] - r[i] + muj[lj[i]]
        sweep += 1
        if sweep % 64 == 0:
            # exact refresh against floating-point drift of the running residual
            for i in range(n):
                F[i] = 0.0
            for j in range(J):
                muj = mu[j]
                lj = leaf_of[j]
                for i in range(n):
                    F[i] += muj[lj[i]]
        if prior_only:
            continue
        if kind == CONTINUOUS:
            ssr = 0.0
            for i in range(n):
                ssr += (z[i] - F[i]) ** 2
            nu = state[1]
            s2 = (nu * state[2] + ssr) / np.random.chisquare(nu + n)
            state[0] = s2
            for i in range(n):
                w[i] = 1.0 / s2
        elif kind == PROBIT:
            for i in range(n):
                eta = off + F[i]
                if y[i] > 0.5:
                    z[i] = eta + tn_above(-eta) - off
                else:
                    z[i] = eta - tn_above(eta) - off
        else:
            for i in range(n):
                om = pg1(off + F[i])
                w[i] = om
                z[i] = (y[i] - 0.5) / om - off


# ---------------------------------------------------------------------------
# compaction and prediction
# ---------------------------------------------------------------------------

@njit(cache=True)
def tree_sizes(var):
    J, M = var.shape
    out = np.zeros(J, np.int64)
    nodes = np.empty(M, np.int64)
    stack = np.empty(M, np.int64)
    for j in range(J):
        out[j] = _preorder(var[j], nodes, stack)
    return out


@njit(cache=True)
def compact(var, cut, mu, grid, offset, nvar, ncut_val, nval, nleft, nright, roots):
    """Write working trees into preorder node arrays starting at ``offset``."""
    J, M = var.shape
    nodes = np.empty(M, np.int64)
    stack = np.empty(M, np.int64)
    pos = np.empty(M, np.int64)
    at = offset
    for j in range(J):
        nn = _preorder(var[j], nodes, stack)
        for s in range(nn):
            pos[nodes[s]] = at + s
        roots[j] = at
        for s in range(nn):
            q = nodes[s]
            k = at + s
            if var[j, q] >= 0:
                nvar[k] = var[j, q]
                ncut_val[k] = grid[var[j, q], cut[j, q]]
                nval[k] = 0.0
                nleft[k] = pos[2 * q + 1]
                nright[k] = pos[2 * q + 2]
            else:
                nvar[k] = -1
                ncut_val[k] = 0.0
                nval[k] = mu[j, q]
                nleft[k] = -1
                nright[k] = -1
        at += nn
    return at


@njit(cache=True)
def predict_sum(X, nvar, ncut_val, nval, nleft, nright, roots):
    n = X.shape[0]
    out = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for j in range(roots.shape[0]):
            k = roots[j]
            while nvar[k] >= 0:
                if X[i, nvar[k]] <= ncut_val[k]:
                    k = nleft[k]
                else:
                    k = nright[k]
            acc += nval[k]
        out[i] = acc
    return out


@njit(cache=True)
def predict_sum_many(X, nvar, ncut_val, nval, nleft, nright, roots, draws):
    out = np.empty((draws.shape[0], X.shape[0]))
    for d in range(draws.shape[0]):
        out[d] = predict_sum(X, nvar, ncut_val, nval, nleft, nright, roots[draws[d]])
    return out
