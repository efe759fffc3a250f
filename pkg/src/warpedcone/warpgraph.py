"""Graphs G(t) approximating the levels tY of a warped cone.

Vertices are net points.  A type-1 edge ``y ~_s z`` is recorded when a
sample ``u`` in the cell ``U_z`` has ``s u`` in ``U_y``; every such sample
contributes ``mu(U_z) / n_per_cell`` to the weight ``w_s(z, y)``, an
estimate of ``mu(U_z & s^-1 U_y)``.  Type-2 edges join net points at
distance at most ``3/t``.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph
from scipy.spatial import cKDTree

from .net import Net, assign_cell, estimate_cell_measures
from .spaces import Action, FlatTorus

log = logging.getLogger(__name__)

VARIANTS = ("full", "type1_only")


class EmptySampleWarning(UserWarning):
    pass


def _offdiag(m: sp.spmatrix) -> sp.csr_matrix:
    m = sp.csr_matrix(m, copy=True)
    m.setdiag(0)
    m.eliminate_zeros()
    return m


def _pattern(m: sp.spmatrix) -> sp.csr_matrix:
    m = sp.csr_matrix(m, copy=True)
    m.eliminate_zeros()
    m.data = np.ones_like(m.data)
    return m


@dataclass(eq=False)
class WarpedGraph:
    """Typed edges and measure weights of G(t) (or of G'(t))."""

    t: float
    measures: np.ndarray
    weights: list = field(default_factory=list)
    inverse_index: tuple = ()
    type2: sp.csr_matrix | None = None
    variant: str = "full"
    n_per_cell: int = 0
    seed: int = 0
    points: np.ndarray | None = None
    empty_cells: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        self.measures = np.asarray(self.measures, dtype=float)
        n = len(self.measures)
        self.weights = [sp.csr_matrix(w, dtype=float) for w in self.weights]
        for w in self.weights:
            if w.shape != (n, n):
                raise ValueError(f"weight matrix of shape {w.shape} for {n} vertices")
        if not self.inverse_index:
            self.inverse_index = tuple(range(len(self.weights)))
        if self.type2 is None:
            self.type2 = sp.csr_matrix((n, n))
        else:
            self.type2 = _offdiag(_pattern(self.type2))
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")

    @classmethod
    def from_weights(cls, weights, measures=None, inverse_index=None, type2=None, t=1.0):
        """Wrap explicit per-generator weights (rows sum to the cell measures)."""
        weights = [sp.csr_matrix(np.asarray(w, dtype=float)) for w in weights]
        if measures is None:
            measures = np.asarray(weights[0].sum(axis=1)).ravel()
        return cls(t=t, measures=measures, weights=weights,
                   inverse_index=tuple(inverse_index or range(len(weights))), type2=type2)

    @property
    def n(self) -> int:
        return len(self.measures)

    @property
    def n_generators(self) -> int:
        return len(self.weights)

    def symmetrized(self, s: int) -> sp.csr_matrix:
        """``(w_s(z, y) + w_{s^-1}(y, z)) / 2``."""
        return ((self.weights[s] + self.weights[self.inverse_index[s]].T) * 0.5).tocsr()

    def total_weight(self) -> sp.csr_matrix:
        """Symmetric ``W = sum_s`` of the symmetrized weights, diagonal included."""
        if not self.weights:
            return sp.csr_matrix((self.n, self.n))
        raw = self.weights[0].copy()
        for w in self.weights[1:]:
            raw = raw + w
        return ((raw + raw.T) * 0.5).tocsr()

    def generator_adjacency(self, s: int) -> sp.csr_matrix:
        """0/1 matrix of witnessed ``y ~_s z`` relations, rows indexed by z."""
        return _offdiag(_pattern(self.weights[s]))

    def type1_adjacency(self) -> sp.csr_matrix:
        w = self.total_weight()
        return _offdiag(_pattern(w))

    def adjacency(self) -> sp.csr_matrix:
        """Simple undirected union graph; an edge of both types counts once."""
        a = self.type1_adjacency()
        if self.variant == "full":
            a = a + self.type2
        return _pattern(a)

    def degrees(self) -> np.ndarray:
        return np.asarray(self.adjacency().sum(axis=1)).ravel().astype(int)

    def is_connected(self) -> bool:
        return csgraph.connected_components(self.adjacency(), directed=False)[0] <= 1


def as_adjacency(graph) -> sp.csr_matrix:
    """Simple symmetric 0/1 adjacency of a WarpedGraph, networkx graph or matrix."""
    if isinstance(graph, WarpedGraph):
        return graph.adjacency()
    if hasattr(graph, "adj") and hasattr(graph, "nodes"):
        import networkx as nx

        a = nx.to_scipy_sparse_array(graph, nodelist=sorted(graph.nodes), format="csr")
        return _offdiag(_pattern(sp.csr_matrix(a) + sp.csr_matrix(a).T))
    a = sp.csr_matrix(graph)
    return _offdiag(_pattern(a + a.T))


def _sample_cells(net: Net, n_per_cell: int, rng, max_rounds: int = 60):
    """``n_per_cell`` uniform samples from every Voronoi cell (rejection)."""
    n, d = net.n, net.space.dim
    r = min(net.radius, 0.5)
    out = np.empty((n, n_per_cell, d))
    have = np.zeros(n, dtype=np.int64)
    for _ in range(max_rounds):
        need = np.flatnonzero(have < n_per_cell)
        if need.size == 0:
            break
        per = int(2 * n_per_cell)
        cand = net.points[need, None, :] + rng.uniform(-r, r, size=(need.size, per, d))
        cand = net.space.wrap(cand).reshape(-1, d)
        owner = assign_cell(net, cand).reshape(need.size, per)
        ok = owner == need[:, None]
        for row, z in enumerate(need):
            hits = cand.reshape(need.size, per, d)[row][ok[row]]
            take = min(len(hits), n_per_cell - have[z])
            out[z, have[z] : have[z] + take] = hits[:take]
            have[z] += take
    return out, have


def build_graph(
    net: Net,
    action: Action,
    n_per_cell: int,
    seed: int,
    variant: str = "full",
    measure_samples: int | None = None,
) -> WarpedGraph:
    """Construct G(t) (``variant="full"``) or G'(t) (``"type1_only"``)."""
    if net.space.dim != action.space.dim:
        raise ValueError("net and action live on different spaces")
    if n_per_cell < 30:
        raise ValueError(f"n_per_cell must be >= 30, got {n_per_cell}")
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    if net.cell_measure is None:
        estimate_cell_measures(net, measure_samples or max(10**5, 100 * net.n), seed)
    rng = np.random.default_rng(seed)
    n = net.n
    samples, have = _sample_cells(net, n_per_cell, rng)
    empty = np.flatnonzero(have < n_per_cell)
    if empty.size:
        warnings.warn(
            EmptySampleWarning(f"{empty.size} cells could not be sampled; type-1 edges dropped"),
            stacklevel=2,
        )
    good = np.flatnonzero(have == n_per_cell)
    flat = samples[good].reshape(-1, net.space.dim)
    rows = np.repeat(good, n_per_cell)
    scale = sp.diags(net.cell_measure / n_per_cell)
    weights = []
    for g in action.generators:
        cols = assign_cell(net, g(flat))
        counts = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n)).tocsr()
        counts.sum_duplicates()
        weights.append((scale @ counts).tocsr())

    type2 = None
    if variant == "full":
        type2 = rips_adjacency(net.points, net.space, 3.0 / net.t)
    return WarpedGraph(
        t=net.t,
        measures=net.cell_measure.copy(),
        weights=weights,
        inverse_index=action.inverse_index,
        type2=type2,
        variant=variant,
        n_per_cell=n_per_cell,
        seed=seed,
        points=net.points,
        empty_cells=empty,
    )


def rips_adjacency(points: np.ndarray, space: FlatTorus, radius: float) -> sp.csr_matrix:
    """Pairs at distance ``<= radius``, filtered with the exact metric."""
    n = len(points)
    tree = cKDTree(points, boxsize=space.box_size)
    pairs = tree.query_pairs(radius * (1 + 1e-9), output_type="ndarray")
    if len(pairs):
        d = space.distance(points[pairs[:, 0]], points[pairs[:, 1]])
        pairs = pairs[d <= radius]
    a = sp.coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    return _pattern(a + a.T)


@dataclass
class DegreeReport:
    max_degree: int
    mean_degree: float
    max_type2: int
    mean_type2: float
    max_type1: np.ndarray
    mean_type1: np.ndarray
    bound_type2: float
    bound_type1: float
    bound_total: float

    @property
    def violation(self) -> bool:
        return bool(
            self.max_type2 > self.bound_type2
            or np.any(self.max_type1 > self.bound_type1)
            or self.max_degree > self.bound_total
        )


def degree_bound(ahlfors, n_generators: int, lipschitz: float) -> tuple[float, float, float]:
    """``(C 8^m, C (2L+4)^m, C 8^m + #S C (2L+4)^m)``."""
    b2 = ahlfors.C * 8.0**ahlfors.m
    b1 = ahlfors.C * (2 * lipschitz + 4) ** ahlfors.m
    return b2, b1, b2 + n_generators * b1


def degree_report(graph: WarpedGraph, ahlfors, action: Action) -> DegreeReport:
    deg = graph.degrees()
    t2 = np.asarray(graph.type2.sum(axis=1)).ravel() if graph.variant == "full" else np.zeros(graph.n)
    per_gen = [np.asarray(graph.generator_adjacency(s).sum(axis=1)).ravel()
               for s in range(graph.n_generators)]
    max1 = np.array([p.max() if len(p) else 0 for p in per_gen])
    mean1 = np.array([p.mean() if len(p) else 0 for p in per_gen])
    b2, b1, total = degree_bound(ahlfors, action.n_generators, action.L)
    return DegreeReport(
        max_degree=int(deg.max()) if len(deg) else 0,
        mean_degree=float(deg.mean()) if len(deg) else 0.0,
        max_type2=int(t2.max()) if len(t2) else 0,
        mean_type2=float(t2.mean()) if len(t2) else 0.0,
        max_type1=max1.astype(int),
        mean_type1=mean1,
        bound_type2=b2,
        bound_type1=b1,
        bound_total=total,
    )


# Warped metric on an auxiliary fine grid

def _stencil(dim: int) -> np.ndarray:
    reach = 2 if dim <= 2 else 1
    rng = range(-reach, reach + 1)
    offsets = np.array(np.meshgrid(*[rng] * dim, indexing="ij")).reshape(dim, -1).T
    keep = [o for o in offsets if np.any(o) and math.gcd(*map(int, np.abs(o))) == 1]
    return np.array(keep)


def _min_coo(rows, cols, vals, n) -> sp.csr_matrix:
    """Sparse matrix keeping the smallest value of duplicated entries."""
    key = rows.astype(np.int64) * n + cols
    order = np.lexsort((vals, key))
    key, vals = key[order], vals[order]
    first = np.concatenate([[True], key[1:] != key[:-1]])
    key, vals = key[first], vals[first]
    return sp.csr_matrix((vals, (key // n, key % n)), shape=(n, n))


@dataclass(eq=False)
class WarpedDistanceField:
    """Shortest-path model of ``d_Gamma`` at level ``t``.

    Nodes form a regular grid of spacing at most ``1/(rho t)``.  Metric
    edges between stencil neighbours cost ``t d(x, y)``; warp edges from
    ``x`` to the node nearest ``s x`` cost 1.
    """

    space: FlatTorus
    t: float
    rho: float
    side: int
    graph: sp.csr_matrix

    @property
    def spacing(self) -> float:
        return 1.0 / self.side

    @property
    def slack(self) -> float:
        """Snapping error of one endpoint, in units of the scaled metric."""
        return self.t * self.spacing * math.sqrt(self.space.dim) / 2

    def owner(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        idx = np.mod(np.rint(x * self.side).astype(np.int64), self.side)
        flat = np.zeros(len(x), dtype=np.int64)
        for k in range(self.space.dim):
            flat = flat * self.side + idx[:, k]
        return flat

    def distances_from(self, sources) -> np.ndarray:
        """Rows of warped distances from grid nodes ``sources`` to every node."""
        return csgraph.dijkstra(self.graph, directed=True, indices=np.atleast_1d(sources))


def build_distance_field(space: FlatTorus, action: Action | None, t: float, rho: float = 8) -> WarpedDistanceField:
    if rho < 4:
        raise ValueError("rho must be at least 4")
    side = int(math.ceil(rho * t))
    dim = space.dim
    grid = np.array(np.meshgrid(*[np.arange(side)] * dim, indexing="ij")).reshape(dim, -1).T
    n = len(grid)

    def flat(idx):
        idx = np.mod(idx, side)
        out = np.zeros(len(idx), dtype=np.int64)
        for k in range(dim):
            out = out * side + idx[:, k]
        return out

    src = flat(grid)
    rows, cols, vals = [], [], []
    for off in _stencil(dim):
        rows.append(src)
        cols.append(flat(grid + off))
        vals.append(np.full(n, t * np.linalg.norm(off) / side))
    field = WarpedDistanceField(space, float(t), float(rho), side, sp.csr_matrix((n, n)))
    if action is not None:
        pts = grid / side
        for g in action.generators:
            if g.kind == "identity":
                continue
            tgt = field.owner(g(pts))
            keep = tgt != src
            rows.append(src[keep])
            cols.append(tgt[keep])
            vals.append(np.ones(int(keep.sum())))
    field.graph = _min_coo(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), n)
    return field


def warped_distance(field: WarpedDistanceField, x, y) -> float:
    """Estimate of ``d_Gamma(tx, ty)``."""
    a, b = field.owner(x)[0], field.owner(y)[0]
    d = csgraph.dijkstra(field.graph, directed=True, indices=a)[b]
    if not np.isfinite(d):
        raise RuntimeError("auxiliary graph is disconnected")
    return float(d)


@dataclass
class BiLipschitzReport:
    pairs: np.ndarray
    graph_distance: np.ndarray
    warped_distance: np.ndarray
    slack: float
    violations: np.ndarray

    @property
    def n_violations(self) -> int:
        return int(len(self.violations))

    @property
    def worst_upper_ratio(self) -> float:
        """Largest ``d_Gamma / d_G`` over pairs at positive graph distance."""
        pos = self.graph_distance > 0
        return float(np.max(self.warped_distance[pos] / self.graph_distance[pos])) if pos.any() else 0.0

    @property
    def worst_lower_ratio(self) -> float:
        """Largest ``d_G / ceil(d_Gamma)`` over pairs with positive warped distance."""
        pos = self.warped_distance > 0
        if not pos.any():
            return 0.0
        return float(np.max(self.graph_distance[pos] / np.ceil(self.warped_distance[pos])))


def bilipschitz_check(graph: WarpedGraph, field: WarpedDistanceField, n_pairs: int, seed: int,
                      slack: float = 2.0) -> BiLipschitzReport:
    """Compare graph distance with the warped distance on random vertex pairs.

    A pair violates the check when ``d_Gamma > 3 d_G + slack`` or
    ``d_G > 2 ceil(d_Gamma) + slack``.
    """
    if graph.points is None:
        raise ValueError("graph has no vertex coordinates")
    rng = np.random.default_rng(seed)
    pairs = rng.integers(0, graph.n, size=(n_pairs, 2))
    sources = np.unique(pairs[:, 0])
    dg = csgraph.shortest_path(graph.adjacency(), unweighted=True, directed=False, indices=sources)
    nodes = field.owner(graph.points)
    dw = field.distances_from(nodes[sources])
    row = np.searchsorted(sources, pairs[:, 0])
    d_graph = dg[row, pairs[:, 1]]
    d_warp = dw[row, nodes[pairs[:, 1]]]
    bad = (d_warp > 3 * d_graph + slack) | (d_graph > 2 * np.ceil(d_warp) + slack)
    return BiLipschitzReport(pairs, d_graph, d_warp, slack, np.flatnonzero(bad))


# Edge-list and DOT export

def save_graph(graph: WarpedGraph, path) -> None:
    """Tab-separated ``src dst type gen_id weight``.

    Type-1 rows carry the raw per-generator weights, diagonal entries
    included (they hold the mass that stays in its own cell and are not
    edges).  Type-2 rows list each undirected edge once with ``gen_id -1``.
    """
    inv = ",".join(str(i) for i in graph.inverse_index)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# t={graph.t!r} n={graph.n} variant={graph.variant} "
                 f"n_per_cell={graph.n_per_cell} seed={graph.seed} inverse={inv}\n")
        fh.write("src\tdst\ttype\tgen_id\tweight\n")
        for s, w in enumerate(graph.weights):
            coo = w.tocoo()
            order = np.lexsort((coo.col, coo.row))
            for i, j, v in zip(coo.row[order], coo.col[order], coo.data[order]):
                fh.write(f"{i}\t{j}\t1\t{s}\t{float(v)!r}\n")
        if graph.variant == "full":
            upper = sp.triu(graph.type2, k=1).tocoo()
            order = np.lexsort((upper.col, upper.row))
            for i, j in zip(upper.row[order], upper.col[order]):
                fh.write(f"{i}\t{j}\t2\t-1\t1.0\n")


def load_graph(path, measures=None, points=None) -> WarpedGraph:
    meta = {}
    t1, t2 = [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                for item in line[1:].split():
                    key, _, value = item.partition("=")
                    meta[key] = value
            elif line.startswith("src") or not line.strip():
                continue
            else:
                src, dst, typ, gen, w = line.split("\t")
                if typ == "1":
                    t1.append((int(src), int(dst), int(gen), float(w)))
                else:
                    t2.append((int(src), int(dst)))
    n = int(meta["n"])
    inverse = tuple(int(v) for v in meta.get("inverse", "").split(",") if v != "")
    weights = []
    for s in range(len(inverse)):
        rows = [(i, j, w) for i, j, g, w in t1 if g == s]
        i, j, w = (np.array(v) for v in zip(*rows)) if rows else ([], [], [])
        weights.append(sp.csr_matrix((w, (i, j)), shape=(n, n)))
    if measures is None:
        measures = (np.asarray(weights[0].sum(axis=1)).ravel() if weights else np.full(n, 1.0 / n))
    type2 = None
    if t2:
        e = np.array(t2)
        type2 = sp.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
        type2 = type2 + type2.T
    return WarpedGraph(
        t=float(meta.get("t", 1.0)),
        measures=measures,
        weights=weights,
        inverse_index=inverse,
        type2=type2,
        variant=meta.get("variant", "full"),
        n_per_cell=int(meta.get("n_per_cell", 0)),
        seed=int(meta.get("seed", 0)),
        points=points,
    )


def write_dot(graph: WarpedGraph, path) -> None:
    t1 = sp.triu(graph.type1_adjacency(), k=1).tocoo()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("graph G {\n")
        for i in range(graph.n):
            fh.write(f'  {i} [label="{i}"];\n')
        for i, j in sorted(zip(t1.row.tolist(), t1.col.tolist())):
            fh.write(f"  {i} -- {j} [type=1];\n")
        if graph.variant == "full":
            t2 = sp.triu(graph.type2, k=1).tocoo()
            for i, j in sorted(zip(t2.row.tolist(), t2.col.tolist())):
                fh.write(f"  {i} -- {j} [type=2, style=dashed];\n")
        fh.write("}\n")
