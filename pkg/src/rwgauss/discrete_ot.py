"""Exact discrete optimal transport for squared Euclidean cost.

General weights go through a transportation (network) simplex over the
dense bipartite graph; equal-size uniform problems use an assignment solver.
No regularization anywhere: the returned cost is the LP optimum up to
floating-point tolerance.
"""

from dataclasses import dataclass

import numba
import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import as_matrix, center_and_norm
from .errors import InputError, SizeError, SolverError

DEFAULT_MAX_ENTRIES = 4_000_000


@dataclass(frozen=True)
class TransportPlan:
    """Sparse coupling: ``mass[k]`` moves from ``rows[k]`` to ``cols[k]``."""

    rows: np.ndarray
    cols: np.ndarray
    mass: np.ndarray
    cost: float

    def dense(self, n, m):
        out = np.zeros((n, m))
        np.add.at(out, (self.rows, self.cols), self.mass)
        return out


def sq_cost_matrix(X, Y):
    """Pairwise squared distances, clipped at zero."""
    C = (X * X).sum(1)[:, None] + (Y * Y).sum(1)[None, :] - 2.0 * X @ Y.T
    np.maximum(C, 0.0, out=C)
    return C


@numba.njit(cache=True)
def _build_tree(n, m, br, bc, C, pot, parent, pedge, depth, child, sib_next, sib_prev):
    """Root the basis tree at row 0 and fill parent, depth, potentials and child lists."""
    nn = n + m
    ne = br.shape[0]
    deg = np.zeros(nn, np.int64)
    for e in range(ne):
        deg[br[e]] += 1
        deg[n + bc[e]] += 1
    off = np.zeros(nn + 1, np.int64)
    for v in range(nn):
        off[v + 1] = off[v] + deg[v]
    fill = off[:-1].copy()
    adj = np.empty(2 * ne, np.int64)
    for e in range(ne):
        r = br[e]
        c = n + bc[e]
        adj[fill[r]] = e
        fill[r] += 1
        adj[fill[c]] = e
        fill[c] += 1
    queue = np.empty(nn, np.int64)
    depth[:] = -1
    child[:] = -1
    sib_next[:] = -1
    sib_prev[:] = -1
    depth[0] = 0
    pot[0] = 0.0
    parent[0] = -1
    pedge[0] = -1
    head = 0
    tail = 1
    queue[0] = 0
    while head < tail:
        v = queue[head]
        head += 1
        for k in range(off[v], off[v + 1]):
            e = adj[k]
            w = n + bc[e] if v < n else br[e]
            if depth[w] >= 0:
                continue
            depth[w] = depth[v] + 1
            parent[w] = v
            pedge[w] = e
            pot[w] = C[br[e], bc[e]] - pot[v]
            _attach(w, v, child, sib_next, sib_prev)
            queue[tail] = w
            tail += 1
    return tail


@numba.njit(cache=True, inline="always")
def _attach(v, p, child, sib_next, sib_prev):
    h = child[p]
    sib_next[v] = h
    sib_prev[v] = -1
    if h >= 0:
        sib_prev[h] = v
    child[p] = v


@numba.njit(cache=True, inline="always")
def _detach(v, p, child, sib_next, sib_prev):
    nx = sib_next[v]
    pv = sib_prev[v]
    if pv >= 0:
        sib_next[pv] = nx
    else:
        child[p] = nx
    if nx >= 0:
        sib_prev[nx] = pv
    sib_next[v] = -1
    sib_prev[v] = -1


@numba.njit(cache=True)
def _transport_simplex(C, br, bc, bf, tol, max_iter):
    """Primal transportation simplex from a given spanning-tree basis.

    ``br, bc, bf`` hold the ``n + m - 1`` basic cells and their flows and are
    updated in place.  Pricing is block search with a persistent cursor;
    the leaving cell is the first blocking cell along the cycle, so runs are
    deterministic.  After each pivot only the re-hung subtree is relabelled.
    Returns (status, iterations); status 0 = optimal, 1 = iteration cap,
    2 = basis is not a spanning tree.
    """
    n, m = C.shape
    nn = n + m
    total = n * m
    block = max(int(np.sqrt(total)), 16)
    pot = np.zeros(nn)
    parent = np.empty(nn, np.int64)
    pedge = np.empty(nn, np.int64)
    depth = np.empty(nn, np.int64)
    child = np.empty(nn, np.int64)
    sib_next = np.empty(nn, np.int64)
    sib_prev = np.empty(nn, np.int64)
    path = np.empty(nn, np.int64)
    side = np.empty(nn, np.int64)
    chain = np.empty(nn, np.int64)
    stack = np.empty(nn, np.int64)
    if _build_tree(n, m, br, bc, C, pot, parent, pedge, depth, child, sib_next, sib_prev) != nn:
        return 2, 0
    ci = 0
    cj = 0
    it = 0
    while it < max_iter:
        best = -tol
        bi = -1
        bj = -1
        scanned = 0
        while scanned < total:
            r = C[ci, cj] - pot[ci] - pot[n + cj]
            if r < best:
                best = r
                bi = ci
                bj = cj
            cj += 1
            if cj == m:
                cj = 0
                ci += 1
                if ci == n:
                    ci = 0
            scanned += 1
            if bi >= 0 and scanned % block == 0:
                break
        if bi < 0:
            return 0, it
        # tree path from column node to row node; even positions lose flow
        a = n + bj
        b = bi
        na = 0
        nb = 0
        while depth[a] > depth[b]:
            path[na] = pedge[a]
            na += 1
            a = parent[a]
        while depth[b] > depth[a]:
            side[nb] = pedge[b]
            nb += 1
            b = parent[b]
        while a != b:
            path[na] = pedge[a]
            na += 1
            a = parent[a]
            side[nb] = pedge[b]
            nb += 1
            b = parent[b]
        for k in range(nb):
            path[na + k] = side[nb - 1 - k]
        plen = na + nb
        theta = np.inf
        leave = -1
        lpos = -1
        for k in range(0, plen, 2):
            fl = bf[path[k]]
            if fl < theta:
                theta = fl
                leave = path[k]
                lpos = k
        for k in range(plen):
            e = path[k]
            if k % 2 == 0:
                bf[e] -= theta
            else:
                bf[e] += theta
        # the detached subtree holds the entering endpoint on the leaving side
        if lpos < na:
            s_in = n + bj
            t_in = bi
        else:
            s_in = bi
            t_in = n + bj
        lr = n + bc[leave]
        lv = br[leave]
        v_out = lr if parent[lr] == lv else lv
        k = 0
        w = s_in
        chain[0] = w
        while w != v_out:
            w = parent[w]
            k += 1
            chain[k] = w
        old_edges = np.empty(k + 1, np.int64)
        for t in range(k + 1):
            old_edges[t] = pedge[chain[t]]
            _detach(chain[t], parent[chain[t]], child, sib_next, sib_prev)
        br[leave] = bi
        bc[leave] = bj
        bf[leave] = theta
        parent[chain[0]] = t_in
        pedge[chain[0]] = leave
        _attach(chain[0], t_in, child, sib_next, sib_prev)
        for t in range(k):
            parent[chain[t + 1]] = chain[t]
            pedge[chain[t + 1]] = old_edges[t]
            _attach(chain[t + 1], chain[t], child, sib_next, sib_prev)
        # relabel depth and potentials on the moved subtree
        top = 0
        stack[0] = s_in
        while top >= 0:
            v = stack[top]
            top -= 1
            p = parent[v]
            e = pedge[v]
            depth[v] = depth[p] + 1
            pot[v] = C[br[e], bc[e]] - pot[p]
            c = child[v]
            while c >= 0:
                top += 1
                stack[top] = c
                c = sib_next[c]
        it += 1
    return 1, it


def _northwest_basis(C, a, b):
    """Northwest-corner basis with columns grouped by their cheapest row."""
    n, m = C.shape
    order = np.argsort(np.argmin(C, axis=0), kind="stable")
    s = a.astype(float).copy()
    d = b[order].astype(float).copy()
    ne = n + m - 1
    br = np.empty(ne, np.int64)
    bc = np.empty(ne, np.int64)
    bf = np.empty(ne)
    i = jj = e = 0
    while True:
        q = max(min(s[i], d[jj]), 0.0)
        br[e], bc[e], bf[e] = i, order[jj], q
        e += 1
        s[i] -= q
        d[jj] -= q
        if i == n - 1 and jj == m - 1:
            break
        if i == n - 1:
            jj += 1
        elif jj == m - 1 or s[i] <= d[jj]:
            i += 1
        else:
            jj += 1
    return br, bc, bf


def _check_weights(w, k, name):
    if w is None:
        return np.full(k, 1.0 / k)
    w = np.asarray(w, dtype=float).ravel()
    if w.shape != (k,):
        raise InputError(f"{name} has length {w.size}, expected {k}")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise InputError(f"{name} must be finite and nonnegative")
    if abs(w.sum() - 1.0) > 1e-12 * max(1, k) ** 0.5 + 1e-12:
        raise InputError(f"{name} must sum to 1 (got {w.sum()!r})")
    return w


@dataclass
class TransportBasis:
    """Spanning-tree basis of a solved problem, reusable as a warm start.

    Flows in a basis depend only on the marginals, so a basis from a problem
    with the same ``(a, b)`` is primal feasible for any new cost matrix.
    """

    rows: np.ndarray
    cols: np.ndarray
    flows: np.ndarray

    def copy(self):
        return TransportBasis(self.rows.copy(), self.cols.copy(), self.flows.copy())


def solve_transport(C, a, b, basis=None, max_iter=None, return_basis=False):
    """Exact transportation LP for a given cost matrix.

    Parameters
    ----------
    C : ndarray, shape (n, m)
    a, b : ndarray
        Marginals, each summing to one.
    basis : TransportBasis, optional
        Warm start from a problem with identical marginals.
    return_basis : bool
        Also return the optimal basis.

    Returns
    -------
    cost : float
    plan : TransportPlan
    basis : TransportBasis
        Only when ``return_basis`` is true.
    """
    C = np.ascontiguousarray(C, dtype=float)
    n, m = C.shape
    final = None
    if n == 1 or m == 1:
        rows, cols = np.nonzero(np.ones((n, m), dtype=bool))
        mass = (a[:, None] * b[None, :]).ravel()
    else:
        if basis is None:
            br, bc, bf = _northwest_basis(C, a, b)
        else:
            br, bc, bf = basis.rows.copy(), basis.cols.copy(), basis.flows.copy()
        scale = max(float(np.abs(C).max()), 1e-300)
        if max_iter is None:
            max_iter = 50 * n * m + 100_000
        status, _ = _transport_simplex(C, br, bc, bf, 1e-12 * scale, max_iter)
        if status != 0:
            raise SolverError(f"transport simplex stopped with status {status}")
        final = TransportBasis(br, bc, bf)
        keep = bf > 0
        order = np.lexsort((bc[keep], br[keep]))
        rows, cols, mass = br[keep][order], bc[keep][order], bf[keep][order]
    cost = float(np.sum(mass * C[rows, cols]))
    plan = TransportPlan(rows, cols, mass, cost)
    if return_basis:
        return cost, plan, final
    return cost, plan


def exact_ot_cost(X, a=None, Y=None, b=None, max_entries=DEFAULT_MAX_ENTRIES):
    """Globally optimal squared-Euclidean transport between two weighted clouds.

    Parameters
    ----------
    X : array_like, shape (n, d)
    a : array_like, shape (n,), optional
        Source weights; uniform when omitted.
    Y : array_like, shape (m, d)
    b : array_like, shape (m,), optional
        Target weights; uniform when omitted.
    max_entries : int
        Cap on ``n * m``.

    Returns
    -------
    cost : float
        ``min sum_ij P_ij ||x_i - y_j||^2``.
    plan : TransportPlan
    """
    if Y is None:
        raise InputError("target samples Y are required")
    X = as_matrix(X)
    Y = as_matrix(Y)
    if X.shape[1] != Y.shape[1]:
        raise InputError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    n, m = X.shape[0], Y.shape[0]
    if n * m > max_entries:
        raise SizeError(f"{n} x {m} cost matrix exceeds cap of {max_entries} entries")
    uniform = a is None and b is None
    a = _check_weights(a, n, "a")
    b = _check_weights(b, m, "b")
    C = sq_cost_matrix(X, Y)
    if n == m and (uniform or (np.all(a == a[0]) and np.all(b == b[0]))):
        r, c = linear_sum_assignment(C)
        mass = np.full(n, 1.0 / n)
        cost = float(C[r, c].sum() / n)
        return cost, TransportPlan(r.astype(np.int64), c.astype(np.int64), mass, cost)
    return solve_transport(C, a, b)


def rw2_discrete(X, Y, a=None, b=None, max_entries=DEFAULT_MAX_ENTRIES):
    """Translation-invariant W2 between two clouds: center both, then solve."""
    cx = center_and_norm(X)
    cy = center_and_norm(Y)
    if cx.d != cy.d:
        raise InputError(f"dimension mismatch: {cx.d} vs {cy.d}")
    if a is not None or b is not None:
        # weighted clouds are centered with their own weights
        xa = _check_weights(a, cx.n, "a")
        yb = _check_weights(b, cy.n, "b")
        Xc = as_matrix(X) - xa @ as_matrix(X)
        Yc = as_matrix(Y) - yb @ as_matrix(Y)
        cost, _ = exact_ot_cost(Xc, xa, Yc, yb, max_entries)
    else:
        cost, _ = exact_ot_cost(cx.data, None, cy.data, None, max_entries)
    return float(np.sqrt(max(cost, 0.0)))


def gaussian_draw(sigma, m, rng):
    """``m`` draws from ``N(0, sigma)`` through a floored eigen square root."""
    sigma = np.asarray(sigma, dtype=float)
    w, V = np.linalg.eigh(0.5 * (sigma + sigma.T))
    root = V * np.sqrt(np.clip(w, 0.0, None))
    return rng.standard_normal((m, sigma.shape[0])) @ root.T


def mc_gaussian_rw2(X, sigma, m=2000, seed=0, max_entries=DEFAULT_MAX_ENTRIES):
    """Monte-Carlo RW2 between a cloud and ``N(0, sigma)`` via exact discrete OT.

    Draws ``m`` points with ``numpy.random.default_rng(seed)``, centers them
    and solves the exact problem against the centered cloud.
    """
    X = as_matrix(X)
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    if sigma.shape != (X.shape[1], X.shape[1]):
        raise InputError(f"sigma has shape {sigma.shape}, expected {(X.shape[1],) * 2}")
    Y = gaussian_draw(sigma, m, np.random.default_rng(seed))
    return rw2_discrete(X, Y, max_entries=max_entries)
