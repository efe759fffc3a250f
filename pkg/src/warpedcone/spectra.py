"""Spectral quantities of warped-cone graphs and of the discretized action.

Conventions
-----------
Edge sums run over unordered edges and pair sums over ordered pairs, so
for real-valued functions and exponent 2 the expansion constant is

    eta = #G * sum_{x~y} |f(x)-f(y)|^2 / sum_{x,y} |f(x)-f(y)|^2 >= lambda_2 / 2

with equality at the Fiedler vector.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import minimize
from scipy.sparse import csgraph

from .warpgraph import WarpedGraph, as_adjacency

log = logging.getLogger(__name__)

DENSE_CUTOFF = 3
SOLVER_RTOL = 1e-8
MC_TOL = 1e-2


class EigensolverError(RuntimeError):
    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class DisconnectedGraphWarning(UserWarning):
    pass


class RowMassWarning(UserWarning):
    pass


def laplacian(adjacency) -> sp.csr_matrix:
    a = sp.csr_matrix(adjacency, dtype=float)
    deg = np.asarray(a.sum(axis=1)).ravel()
    return (sp.diags(deg) - a).tocsr()


def _deflated_extreme(B: sp.spmatrix, q: np.ndarray, which: str, seed: int = 0):
    """Extreme eigenpair of symmetric ``B`` on the complement of unit vector ``q``.

    ``which="low"`` returns the smallest eigenvalue of a positive
    semidefinite ``B`` via shift-invert at -1; ``"LA"``/``"SA"`` run plain
    Lanczos for the largest/smallest algebraic eigenvalue.
    """
    n = B.shape[0]
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(n)
    v0 -= q * (q @ v0)

    def project(x):
        return x - q * (q @ x)

    if which == "low":
        lu = spla.splu(sp.csc_matrix(B + sp.identity(n)))
        op = spla.LinearOperator((n, n), matvec=lambda x: project(lu.solve(project(x))), dtype=float)
        mode = "LA"
    else:
        # park the deflated direction beyond the opposite end of the spectrum
        bound = float(abs(B).sum(axis=1).max()) + 1.0
        park = -bound if which == "LA" else bound
        op = spla.LinearOperator((n, n), matvec=lambda x: project(B @ project(x)) + park * q * (q @ x),
                                 dtype=float)
        mode = which
    try:
        vals, vecs = spla.eigsh(op, k=1, which=mode, v0=v0, tol=0, maxiter=max(1000, 20 * n))
    except spla.ArpackNoConvergence as exc:
        raise EigensolverError(f"eigensolver did not converge on {n} vertices") from exc
    y = project(vecs[:, 0])
    y /= np.linalg.norm(y)
    value = float(y @ (B @ y))
    residual = float(np.linalg.norm(B @ y - value * y - q * (q @ (B @ y))))
    if residual > 1e-6 * max(1.0, abs(value)):
        raise EigensolverError(f"eigenvector residual {residual:.3g} too large", residual)
    return value, y, residual


@dataclass
class EigenResult:
    value: float
    vector: np.ndarray
    residual: float
    connected: bool = True


def fiedler(graph, seed: int = 0) -> EigenResult:
    """Second-smallest Laplacian eigenpair of the simple union graph."""
    a = as_adjacency(graph)
    n = a.shape[0]
    if n <= 1:
        return EigenResult(0.0, np.zeros(n), 0.0, True)
    ncomp = csgraph.connected_components(a, directed=False)[0]
    L = laplacian(a)
    if ncomp > 1:
        warnings.warn(DisconnectedGraphWarning(f"graph has {ncomp} components"), stacklevel=3)
        labels = csgraph.connected_components(a, directed=False)[1]
        v = (labels == labels[0]).astype(float)
        v -= v.mean()
        return EigenResult(0.0, v / np.linalg.norm(v), 0.0, False)
    if n <= DENSE_CUTOFF:
        w, v = np.linalg.eigh(L.toarray())
        return EigenResult(float(w[1]), v[:, 1], 0.0, True)
    q = np.full(n, 1 / math.sqrt(n))
    value, y, res = _deflated_extreme(L, q, "low", seed)
    return EigenResult(value, y, res, True)


def lambda2(graph, seed: int = 0) -> float:
    """Algebraic connectivity of the union graph (0 when disconnected)."""
    return fiedler(graph, seed).value


def lambda2_dense(graph) -> float:
    """Dense eigendecomposition oracle for :func:`lambda2`."""
    L = laplacian(as_adjacency(graph)).toarray()
    if len(L) <= 1:
        return 0.0
    return float(np.linalg.eigvalsh(L)[1])


# Nonlinear expansion constants

def _edges(adjacency) -> np.ndarray:
    upper = sp.triu(adjacency, k=1).tocoo()
    return np.column_stack([upper.row, upper.col]).astype(np.int64)


def _edge_energy(F, edges, p, grad=True):
    diff = F[edges[:, 0]] - F[edges[:, 1]]
    ad = np.abs(diff)
    value = float(np.sum(ad**p))
    if not grad:
        return value, None
    g_edge = p * ad ** (p - 1) * np.sign(diff)
    G = np.zeros_like(F)
    np.add.at(G, edges[:, 0], g_edge)
    np.add.at(G, edges[:, 1], -g_edge)
    return value, G


def _pair_sum_column(a, p, grad=True):
    """``sum_{i,j} |a_i - a_j|^p`` over ordered pairs, with its gradient."""
    n = len(a)
    if p == 1:
        order = np.argsort(a, kind="stable")
        rank = np.empty(n)
        rank[order] = np.arange(n)
        value = 2.0 * float(np.sum(a[order] * (2 * np.arange(n) - n + 1)))
        return value, (2.0 * (2 * rank - n + 1) if grad else None)
    if float(p).is_integer() and int(p) % 2 == 0:
        k = int(p)
        c = a - a.mean()
        S = [float(np.sum(c**j)) for j in range(k + 1)]
        value = sum(math.comb(k, j) * (-1) ** j * S[k - j] * S[j] for j in range(k + 1))
        if not grad:
            return float(value), None
        g = 2 * k * sum(math.comb(k - 1, j) * (-1) ** j * c ** (k - 1 - j) * S[j] for j in range(k))
        return float(value), g
    value = 0.0
    g = np.zeros(n) if grad else None
    for start in range(0, n, 512):
        block = a[start : start + 512, None] - a[None, :]
        ab = np.abs(block)
        value += float(np.sum(ab**p))
        if grad:
            g[start : start + 512] = 2 * p * np.sum(ab ** (p - 1) * np.sign(block), axis=1)
    return value, g


def pair_energy(F, p, grad=True):
    F = np.asarray(F, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    total, G = 0.0, np.zeros_like(F) if grad else None
    for k in range(F.shape[1]):
        v, g = _pair_sum_column(F[:, k], p, grad)
        total += v
        if grad:
            G[:, k] = g
    return total, G


def p_quotient(graph, F, p: float) -> float:
    """``#G * sum_{x~y} ||F(x)-F(y)||_p^p / sum_{x,y} ||F(x)-F(y)||_p^p``."""
    a = as_adjacency(graph)
    F = np.asarray(F, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    num, _ = _edge_energy(F, _edges(a), p, grad=False)
    den, _ = pair_energy(F, p, grad=False)
    if den <= 0:
        return math.inf
    return a.shape[0] * num / den


def _cut_sweep(order, edges, n):
    """Ratio ``n cut / (2 |S| |S^c|)`` of every prefix set of ``order``."""
    pos = np.empty(n, dtype=np.int64)
    pos[order] = np.arange(n)
    lo = np.minimum(pos[edges[:, 0]], pos[edges[:, 1]])
    hi = np.maximum(pos[edges[:, 0]], pos[edges[:, 1]])
    diff = np.zeros(n + 1)
    np.add.at(diff, lo, 1.0)
    np.add.at(diff, hi, -1.0)
    cut = np.cumsum(diff)[: n - 1]
    size = np.arange(1, n)
    return n * cut / (2.0 * size * (n - size))


def _local_search(side, adjacency, max_iter=None):
    """Greedy single-vertex moves on a cut while the p=1 ratio improves."""
    n = len(side)
    x = side.astype(float)
    deg = np.asarray(adjacency.sum(axis=1)).ravel()
    inside_nb = adjacency @ x
    cut = float(np.sum(x * (deg - inside_nb)))
    k = float(x.sum())

    def ratio(c, s):
        return n * c / (2.0 * s * (n - s)) if 0 < s < n else math.inf

    best = ratio(cut, k)
    for _ in range(max_iter or 4 * n):
        # moving v to the other side changes the cut by same-side minus other-side neighbours
        other = np.where(x > 0, deg - inside_nb, inside_nb)
        delta = deg - 2 * other
        new_k = k + np.where(x > 0, -1.0, 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            cand = np.where((new_k > 0) & (new_k < n), n * (cut + delta) / (2.0 * new_k * (n - new_k)), np.inf)
        v = int(np.argmin(cand))
        if not cand[v] < best * (1 - 1e-12):
            break
        sign = -1.0 if x[v] > 0 else 1.0
        x[v] += sign
        cut += delta[v]
        k += sign
        row = adjacency.getrow(v)
        inside_nb[row.indices] += sign * row.data
        best = cand[v]
    return best, x


def eta_p1_bruteforce(graph) -> float:
    """Exhaustive p=1 expansion over all cuts (co-area: optimum is two-level)."""
    a = as_adjacency(graph)
    n = a.shape[0]
    if n <= 1:
        return math.inf
    if n > 22:
        raise ValueError("exhaustive search limited to 22 vertices")
    edges = _edges(a)
    best = math.inf
    # vertex n-1 always outside, enumerate the rest in blocks
    masks = np.arange(1, 2 ** (n - 1), dtype=np.int64)
    for start in range(0, len(masks), 1 << 16):
        m = masks[start : start + (1 << 16)]
        bits = ((m[:, None] >> np.arange(n - 1)) & 1).astype(np.int8)
        bits = np.concatenate([bits, np.zeros((len(m), 1), dtype=np.int8)], axis=1)
        cut = np.sum(bits[:, edges[:, 0]] != bits[:, edges[:, 1]], axis=1)
        size = bits.sum(axis=1)
        best = min(best, float(np.min(n * cut / (2.0 * size * (n - size)))))
    return best


@dataclass
class EtaResult:
    value: float
    p: float
    target_dim: int
    f: np.ndarray | None = None
    restarts: int = 0
    history: list = field(default_factory=list)

    @property
    def is_upper_bound(self) -> bool:
        """Values found by local search bound the infimum from above."""
        return True


def _optimize(F0, edges, n, p, maxiter=4000, gtol=1e-12):
    shape = F0.shape

    def fun(x):
        F = x.reshape(shape)
        num, gn = _edge_energy(F, edges, p)
        den, gd = pair_energy(F, p)
        if num <= 0 or den <= 0:
            return 0.0 if num <= 0 and den > 0 else 50.0, np.zeros_like(x)
        value = math.log(n * num / den)
        return value, (gn / num - gd / den).ravel()

    res = minimize(fun, F0.ravel(), jac=True, method="L-BFGS-B",
                   options={"maxiter": maxiter, "gtol": gtol, "ftol": 1e-15, "maxcor": 30})
    F = res.x.reshape(shape)
    F = F - F.mean(axis=0)
    norm = np.linalg.norm(F)
    return F / norm if norm > 0 else F


def estimate_eta(
    graph,
    p: float = 2.0,
    target_dim: int = 1,
    restarts: int = 8,
    seed: int = 0,
    warm_start: bool = True,
    continuation_max_n: int = 2000,
    continuation_starts: int = 2,
) -> EtaResult:
    """Minimize the p-Poincare quotient of maps into ``l_p^target_dim``.

    Each restart runs L-BFGS on the log-quotient; ``warm_start`` adds one
    start from the Fiedler vector.  For ``p == 1`` the minimizers are
    two-level functions, so the optimizer runs a p-continuation
    (2 -> 1.05) on the first ``continuation_starts`` starts; every
    resulting coordinate is swept into level-set cuts, which are then
    improved by single-vertex moves.  The returned
    value is the best quotient found, an upper bound on the infimum.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    if target_dim < 1:
        raise ValueError("target_dim must be >= 1")
    a = as_adjacency(graph)
    n = a.shape[0]
    if n <= 1:
        return EtaResult(math.inf, p, target_dim)
    edges = _edges(a)
    if len(edges) == 0:
        return EtaResult(0.0, p, target_dim, np.zeros((n, target_dim)))
    rng = np.random.default_rng(seed)
    starts = []
    if warm_start:
        fv = fiedler(a, seed).vector
        F = rng.standard_normal((n, target_dim)) * 1e-3
        F[:, 0] += fv
        starts.append(F)
    while len(starts) < restarts + int(warm_start):
        starts.append(rng.standard_normal((n, target_dim)))

    best, best_f, history = math.inf, None, []
    for i, F0 in enumerate(starts):
        F0 = F0 - F0.mean(axis=0)
        if p == 1:
            if n <= continuation_max_n and i < continuation_starts:
                stages = [2.0, 1.5, 1.2, 1.05]
            else:
                stages = [2.0]
            F = F0
            for q in stages:
                F = _optimize(F, edges, n, q, maxiter=400 if q < 2 else 1500, gtol=1e-9)
            cands = [F[:, k] for k in range(target_dim)] + [F0[:, k] for k in range(target_dim)]
            value, f = math.inf, None
            for col in cands:
                order = np.argsort(col, kind="stable")
                ratios = _cut_sweep(order, edges, n)
                j = int(np.argmin(ratios))
                side = np.zeros(n)
                side[order[: j + 1]] = 1
                r, side = _local_search(side, a)
                if r < value:
                    value, f = r, side - side.mean()
            F = np.zeros((n, target_dim))
            F[:, 0] = f
        else:
            F = _optimize(F0, edges, n, p)
            value = p_quotient(a, F, p)
            for k in range(target_dim):
                if np.ptp(F[:, k]) > 0:
                    value = min(value, p_quotient(a, F[:, k], p))
        history.append(value)
        if value < best:
            best, best_f = value, F
    return EtaResult(float(best), p, target_dim, best_f, len(starts), history)


def eta(graph, p: float = 2.0, target_dim: int = 1, restarts: int = 8, seed: int = 0,
        warm_start: bool = True) -> float:
    """Expansion constant of ``graph`` with respect to ``l_p^target_dim``."""
    return estimate_eta(graph, p, target_dim, restarts, seed, warm_start).value


# Action spectral gap and Markov operator

def _check_measures(graph: WarpedGraph, measures) -> np.ndarray:
    mu = np.asarray(graph.measures if measures is None else measures, dtype=float)
    if mu.shape != (graph.n,):
        raise ValueError(f"expected {graph.n} cell measures, got shape {mu.shape}")
    if np.any(mu <= 0):
        raise ValueError("cell measures must be positive")
    if abs(mu.sum() - 1) > 1e-6:
        raise ValueError(f"cell measures sum to {mu.sum()}, not 1")
    return mu / mu.sum()


def action_laplacian(graph: WarpedGraph) -> sp.csr_matrix:
    """Weighted Laplacian of the symmetrized type-1 weights."""
    W = graph.total_weight()
    W = W - sp.diags(W.diagonal())
    return laplacian(W)


def kappa_hat_pair(graph: WarpedGraph, measures=None, seed: int = 0) -> EigenResult:
    mu = _check_measures(graph, measures)
    n = graph.n
    if n <= 1:
        return EigenResult(0.0, np.zeros(n), 0.0, True)
    L = action_laplacian(graph)
    support = L - sp.diags(L.diagonal())
    ncomp = csgraph.connected_components(support != 0, directed=False)[0]
    if ncomp > 1:
        return EigenResult(0.0, np.zeros(n), 0.0, False)
    s = 1 / np.sqrt(mu)
    B = (sp.diags(s) @ L @ sp.diags(s)).tocsr()
    q = np.sqrt(mu)
    if n <= DENSE_CUTOFF:
        w, v = np.linalg.eigh(B.toarray())
        return EigenResult(float(w[1]), s * v[:, 1], 0.0, True)
    value, y, res = _deflated_extreme(B, q, "low", seed)
    return EigenResult(value, s * y, res, True)


def kappa_hat(graph: WarpedGraph, measures=None, seed: int = 0) -> float:
    """Best constant in the discretized action Poincare inequality.

    Minimizes ``sum_s sum_{z,y} w_s(z,y) |f(z)-f(y)|^2`` over
    ``sum_{z,y} mu_z mu_y |f(z)-f(y)|^2`` for non-constant real ``f``
    (weights symmetrized, pairs ordered).
    """
    return kappa_hat_pair(graph, measures, seed).value


def kappa_hat_dense(graph: WarpedGraph, measures=None) -> float:
    """Dense generalized-eigenproblem oracle on the complement of constants."""
    mu = _check_measures(graph, measures)
    n = graph.n
    if n <= 1:
        return 0.0
    L = action_laplacian(graph).toarray()
    Lmu = np.diag(mu) - np.outer(mu, mu)
    Q = sla.null_space(np.ones((1, n)))
    w = sla.eigh(Q.T @ L @ Q, Q.T @ Lmu @ Q, eigvals_only=True)
    value = float(w[0])
    return max(value, 0.0) if abs(value) < 1e-12 else value


def markov_norm(graph: WarpedGraph, measures=None, lazy: bool = False,
                tol: float | None = None, seed: int = 0) -> float:
    """Norm of the averaged generator operator on zero-average functions.

    ``M = (1/#S) sum_s P_s`` with ``P_s(z, y) = w_s(z, y) / mu(U_z)``,
    built from the symmetrized weights.  Rows whose mass deviates from 1
    by more than ``tol`` trigger a warning (default: the Monte-Carlo noise
    level ``4 / sqrt(n_per_cell)``); rows are always renormalized,
    which makes ``M`` self-adjoint for the stationary measure used in the
    norm.  ``lazy`` uses ``(I + M) / 2``.
    """
    mu = _check_measures(graph, measures)
    if graph.n_generators == 0:
        return 1.0
    W = graph.total_weight()
    row = np.asarray(W.sum(axis=1)).ravel()
    deficit = np.max(np.abs(row / (graph.n_generators * mu) - 1))
    if tol is None:
        npc = getattr(graph, "n_per_cell", 0) or 0
        tol = max(MC_TOL, 4.0 / math.sqrt(npc)) if npc > 0 else MC_TOL
    if deficit > tol:
        warnings.warn(RowMassWarning(f"row mass deficit {deficit:.3g}; renormalizing"), stacklevel=2)
    n = graph.n
    if n <= 1:
        return 0.0
    s = 1 / np.sqrt(row)
    S = (sp.diags(s) @ W @ sp.diags(s)).tocsr()
    q = np.sqrt(row / row.sum())
    if n <= DENSE_CUTOFF + 2:
        P = np.eye(n) - np.outer(q, q)
        w = np.linalg.eigvalsh(P @ S.toarray() @ P)
        # drop the eigenvalue 0 that belongs to the deflated direction
        k = int(np.argmin(np.abs(w)))
        w = np.delete(w, k)
        hi, lo = float(w.max()), float(w.min())
    else:
        hi = _deflated_extreme(S, q, "LA", seed)[0]
        lo = _deflated_extreme(S, q, "SA", seed)[0]
    value = max(abs(1 + hi), abs(1 + lo)) / 2 if lazy else max(abs(hi), abs(lo))
    # rounding can overshoot the contraction bound by a few ulps
    return float(min(value, 1.0)) if value < 1 + 1e-9 else float(value)


def pairwise_form_ratio(measures, f, p: int = 2, norm_ord=2) -> float:
    """``||g|| / ||f||`` for ``g(x, y) = f(x) - f(y)`` in ``L^2(mu x mu; X)``.

    ``X`` is ``R^d`` with the ``norm_ord`` norm.  ``f`` must have zero
    ``mu``-average; ``f = 0`` returns 1.
    """
    if p != 2:
        raise ValueError("only the L^2 forms are compared")
    mu = np.asarray(measures, dtype=float)
    F = np.asarray(f, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    if len(F) != len(mu):
        raise ValueError("measures and f have different lengths")
    mu = mu / mu.sum()
    mean = mu @ F
    scale = np.max(np.abs(F)) if F.size else 0.0
    if np.max(np.abs(mean)) > 1e-9 * max(scale, 1e-300):
        raise ValueError("f must have zero average")
    norm_f2 = float(mu @ np.linalg.norm(F, ord=norm_ord, axis=1) ** 2)
    if norm_f2 == 0:
        return 1.0
    diff = np.linalg.norm(F[:, None, :] - F[None, :, :], ord=norm_ord, axis=2)
    norm_g2 = float(mu @ diff**2 @ mu)
    return math.sqrt(norm_g2 / norm_f2)


# Reports

@dataclass
class SpectralReport:
    t: float
    n_vertices: int
    lambda2: float
    eta: dict
    kappa_hat: float
    markov_norm: float
    K_hat: float
    D_max: int
    n_generators: int
    mu_min: float = float("nan")
    mu_max: float = float("nan")
    lazy_markov_norm: float = float("nan")
    meta: dict = field(default_factory=dict)

    def eta_value(self, p: float, dim: int = 1) -> float:
        return self.eta[(float(p), dim)]


def spectral_report(graph: WarpedGraph, ahlfors, p_list=(1, 2, 4), restarts: int = 8,
                    seed: int = 0, measures=None) -> SpectralReport:
    mu = _check_measures(graph, measures)
    lam = fiedler(graph, seed)
    etas = {}
    meta = {"lambda2_residual": lam.residual, "seed": seed, "restarts": restarts}
    for p in p_list:
        res = estimate_eta(graph, float(p), 1, restarts, seed)
        etas[(float(p), 1)] = res.value
        meta[f"eta_p{p:g}_spread"] = float(np.ptp(res.history)) if res.history else 0.0
    kap = kappa_hat_pair(graph, mu, seed)
    meta["kappa_residual"] = kap.residual
    deg = graph.degrees()
    return SpectralReport(
        t=graph.t,
        n_vertices=graph.n,
        lambda2=lam.value,
        eta=etas,
        kappa_hat=kap.value,
        markov_norm=markov_norm(graph, mu, seed=seed),
        K_hat=ahlfors.K,
        D_max=int(deg.max()) if len(deg) else 0,
        n_generators=graph.n_generators,
        mu_min=float(mu.min()),
        mu_max=float(mu.max()),
        lazy_markov_norm=markov_norm(graph, mu, lazy=True, seed=seed),
        meta=meta,
    )


@dataclass
class GapMargin:
    eta2: float
    forward_bound: float
    forward_margin: float
    strict_bound: float
    strict_margin: float
    empirical_bound: float
    reverse_bound: float
    reverse_margin: float


def gap_margin(report: SpectralReport, action=None) -> GapMargin:
    """Margins of the two Poincare-constant transfers at one level.

    Forward: ``eta(2,1) >= kappa / (2 #S K^3)`` under the unordered-edge /
    ordered-pair convention (``strict_*`` drops the factor 2).  The
    ``empirical_bound`` uses the measured extreme cell measures instead of
    ``K``.  Reverse: the action-energy lower bound ``eta / (2 K^3 D)``
    compared with ``kappa``.
    """
    for name in ("kappa_hat", "K_hat", "D_max"):
        if getattr(report, name, None) is None:
            raise ValueError(f"report is missing {name}")
    if (2.0, 1) not in report.eta:
        raise ValueError("report is missing eta(2, 1)")
    n_gen = action.n_generators if action is not None else report.n_generators
    if n_gen == 0:
        raise ValueError("action has no generators")
    eta2 = report.eta[(2.0, 1)]
    K3 = report.K_hat**3
    fwd = report.kappa_hat / (2 * n_gen * K3)
    strict = report.kappa_hat / (n_gen * K3)
    emp = (report.n_vertices * report.kappa_hat * report.mu_min**2 / (2 * n_gen * report.mu_max)
           if np.isfinite(report.mu_min) else float("nan"))
    rev = eta2 / (2 * K3 * max(report.D_max, 1))
    return GapMargin(eta2, fwd, eta2 - fwd, strict, eta2 - strict, emp, rev,
                     report.kappa_hat - rev)
