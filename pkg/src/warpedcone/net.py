"""1/t-separated nets, their Voronoi partitions and Ahlfors constants."""
from __future__ import annotations

import itertools
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import QhullError, Voronoi, cKDTree

from .spaces import FlatTorus, Space, space_from_name

log = logging.getLogger(__name__)

_CHUNK = 1 << 17


class NetConstructionWarning(UserWarning):
    """The rejection streak was not reached within the candidate budget."""

    def __init__(self, message, achieved_density):
        super().__init__(message)
        self.achieved_density = achieved_density


class EmptyCellWarning(UserWarning):
    pass


@dataclass(frozen=True)
class AhlforsEstimate:
    """Constants with ``c r^m <= mu(B(y, r)) <= c C r^m`` on the sampled balls."""

    c: float
    m: float
    C: float
    radii: np.ndarray
    residual: float
    c_fit: float = float("nan")

    @property
    def K(self) -> float:
        """Cell-measure uniformity constant ``C 2^m``."""
        return self.C * 2.0**self.m


@dataclass(eq=False)
class Net:
    """A maximal 1/t-separated set with its Voronoi cells."""

    space: Space
    t: float
    points: np.ndarray
    seed: int = 0
    cell_measure: np.ndarray | None = None
    n_samples: int = 0
    achieved_density: float = float("nan")
    n_candidates: int = 0
    _tree: cKDTree | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def radius(self) -> float:
        return 1.0 / self.t

    @property
    def tree(self) -> cKDTree:
        if self._tree is None:
            self._tree = cKDTree(self.points, boxsize=self.space.box_size)
        return self._tree

    def min_separation(self) -> float:
        """Smallest pairwise distance between distinct net points."""
        if self.n < 2:
            return float("inf")
        d, _ = self.tree.query(self.points, k=2)
        return float(d[:, 1].min())

    def covering_radius(self, n: int, seed: int) -> float:
        """Largest distance from ``n`` uniform samples to the net."""
        rng = np.random.default_rng(seed)
        x = self.space.sample(rng, n)
        d, _ = self.tree.query(x, k=1)
        return float(d.max())


def _nearest_distance(points: list, x: np.ndarray, space: Space) -> np.ndarray:
    if not points:
        return np.full(len(x), np.inf)
    tree = cKDTree(np.asarray(points), boxsize=space.box_size)
    d, _ = tree.query(x, k=1)
    return d


def _hole_candidates(points: np.ndarray, space: Space) -> np.ndarray | None:
    """Local maximizers of the distance to ``points``.

    In dimension 1 these are gap midpoints; otherwise the Voronoi vertices
    of the periodically replicated set.  ``None`` when Qhull cannot run.
    """
    n, dim = points.shape
    if dim == 1:
        x = np.sort(points[:, 0])
        gaps = np.diff(np.append(x, x[0] + 1.0))
        return space.wrap((x + gaps / 2)[:, None])
    if n < dim + 2 or dim > 3:
        return None
    shifts = np.array(list(itertools.product((-1.0, 0.0, 1.0), repeat=dim)))
    tiled = (points[None, :, :] + shifts[:, None, :]).reshape(-1, dim)
    try:
        vertices = Voronoi(tiled).vertices
    except QhullError:
        return None
    inside = np.all((vertices >= -1e-12) & (vertices < 1 + 1e-12), axis=1)
    return space.wrap(vertices[inside])


def _fill_holes(points: list, space: Space, sep: float, max_rounds: int = 100):
    """Add points at uncovered local maxima until the covering radius is below ``sep``.

    Returns the exact covering radius, or ``None`` when it cannot be
    computed (tiny nets, dimension above 3).
    """
    for _ in range(max_rounds):
        arr = np.asarray(points)
        cand = _hole_candidates(arr, space)
        if cand is None:
            return None
        d = _nearest_distance(points, cand, space)
        order = np.argsort(-d, kind="stable")
        if d[order[0]] < sep:
            return float(d[order[0]])
        added = []
        for idx in order:
            if d[idx] < sep:
                break
            x = cand[idx]
            if added and np.min(space.distance(np.asarray(added), x)) < sep:
                continue
            added.append(x)
        points.extend(added)
        log.debug("filled %d holes", len(added))
    return None


def build_net(
    space: Space,
    t: float,
    seed: int,
    streak_factor: int = 200,
    max_candidates: int | None = None,
    check_samples: int | None = None,
) -> Net:
    """Greedy random maximal 1/t-separated set.

    Uniform candidates are kept iff they lie at distance ``>= 1/t`` from
    every kept point.  Construction stops once ``streak_factor * #Z``
    consecutive candidates have been rejected.  A final round pushes
    ``check_samples`` more candidates through the same rule.  Remaining
    holes are then located exactly (gap midpoints on the circle, Voronoi
    vertices of the periodic point set in dimensions 2 and 3) and filled,
    so ``achieved_density`` is the exact covering radius there.
    """
    if t < 1:
        raise ValueError(f"levels must satisfy t >= 1, got {t}")
    rng = np.random.default_rng(seed)
    sep = 1.0 / t
    points: list[np.ndarray] = []
    streak = 0
    used = 0
    if max_candidates is None:
        max_candidates = int(2e8)
    done = False
    while not done:
        if used >= max_candidates:
            break
        required = streak_factor * max(len(points), 1)
        batch = int(min(max(256, 4 * len(points), (required - streak) // 2), 1 << 16))
        batch = min(batch, max_candidates - used)
        cand = space.sample(rng, batch)
        d = _nearest_distance(points, cand, space)
        survivors = np.flatnonzero(d >= sep)
        pos = 0
        fresh: list[np.ndarray] = []
        for idx in survivors:
            x = cand[idx]
            if fresh and np.min(space.distance(np.asarray(fresh), x)) < sep:
                continue
            if streak + (idx - pos) >= streak_factor * max(len(points), 1) and points:
                used += idx - pos
                done = True
                break
            streak = 0
            points.append(x)
            fresh.append(x)
            pos = idx + 1
        if done:
            break
        streak += batch - pos
        used += batch
        if streak >= streak_factor * max(len(points), 1):
            done = True

    if check_samples is None:
        check_samples = max(20000, 50 * len(points))
    # density certification: more greedy candidates, checked in bulk
    density = np.inf
    for _ in range(20):
        cand = space.sample(rng, check_samples)
        d = _nearest_distance(points, cand, space)
        density = float(d.max())
        added = 0
        for idx in np.flatnonzero(d >= sep):
            x = cand[idx]
            if np.min(space.distance(np.asarray(points), x)) >= sep:
                points.append(x)
                added += 1
        used += check_samples
        if added == 0:
            break
        log.debug("density round added %d points at t=%g", added, t)

    if points and done:
        # every uncovered point is a valid greedy candidate; certify exactly
        exact = _fill_holes(points, space, sep)
        if exact is not None:
            density = exact

    if not done:
        warnings.warn(
            NetConstructionWarning(
                f"candidate budget {max_candidates} exhausted before a rejection streak "
                f"of {streak_factor}*#Z; covering radius {density:.4g} (target {sep:.4g})",
                density,
            ),
            stacklevel=2,
        )
    net = Net(space, float(t), np.asarray(points, dtype=float).reshape(-1, space.dim), seed=seed)
    net.achieved_density = density
    net.n_candidates = used
    return net


def assign_cell(net: Net, x) -> np.ndarray | int:
    """Index of the nearest net point; exact ties go to the lowest index."""
    x = net.space.check_points(x)
    single = x.ndim == 1
    x = net.space.wrap(np.atleast_2d(x))
    k = min(4, net.n)
    _, idx = net.tree.query(x, k=k)
    idx = np.asarray(idx).reshape(len(x), k)
    d = net.space.distance(net.points[idx], x[:, None, :]).reshape(len(x), k)
    dmin = d.min(axis=1, keepdims=True)
    owner = np.where(d == dmin, idx, np.iinfo(np.int64).max).min(axis=1)
    return int(owner[0]) if single else owner


def _count_chunk(net: Net, seed_seq: np.random.SeedSequence, n: int) -> np.ndarray:
    rng = np.random.default_rng(seed_seq)
    counts = np.zeros(net.n, dtype=np.int64)
    left = n
    while left > 0:
        m = min(left, _CHUNK)
        owner = assign_cell(net, net.space.sample(rng, m))
        counts += np.bincount(owner, minlength=net.n)
        left -= m
    return counts


def estimate_cell_measures(net: Net, n: int, seed: int, workers: int = 1) -> np.ndarray:
    """Empirical Voronoi-cell frequencies of ``n`` uniform samples.

    The sample budget is split into ``workers`` independently seeded
    streams whose counts are summed, so the result depends only on
    ``(seed, workers)``.  Cells that receive no sample trigger additive
    smoothing ``(count + 1) / (n + #Z)`` over all cells.
    """
    if n < 10 * net.n:
        raise ValueError(f"need n >= 10 * #Z = {10 * net.n}, got {n}")
    if net.n == 1:
        net.cell_measure = np.ones(1)
        net.n_samples = n
        return net.cell_measure
    streams = np.random.SeedSequence(seed).spawn(workers)
    sizes = [n // workers + (i < n % workers) for i in range(workers)]
    if workers == 1:
        parts = [_count_chunk(net, streams[0], sizes[0])]
    else:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda a: _count_chunk(net, *a), zip(streams, sizes)))
    counts = np.sum(parts, axis=0)
    if np.any(counts == 0):
        warnings.warn(
            EmptyCellWarning(f"{int(np.sum(counts == 0))} cells received no sample; smoothing"),
            stacklevel=2,
        )
        measure = (counts + 1.0) / (n + net.n)
    else:
        measure = counts / float(n)
    net.cell_measure = measure
    net.n_samples = n
    return measure


def default_radii(space: Space, n: int = 12, r_min: float | None = None) -> np.ndarray:
    r_min = r_min or space.diameter / 40
    return np.geomspace(r_min, space.diameter, n)


def verify_ahlfors(space: Space, n_centers: int, radii, n: int, seed: int) -> AhlforsEstimate:
    """Monte-Carlo Ahlfors-regularity constants.

    ``m`` is the least-squares slope of ``log mu(B(y, r))`` against
    ``log r``; ``c`` is then the smallest observed ratio ``mu / r^m`` so
    the lower bound holds on every sample, and ``C`` the largest ratio
    divided by ``c``.
    """
    radii = np.asarray(radii, dtype=float)
    if radii.size < 2:
        raise ValueError("need at least two radii")
    if np.any(radii <= 0) or np.any(radii > space.diameter * (1 + 1e-12)):
        raise ValueError(f"radii must lie in (0, {space.diameter}]")
    rng = np.random.default_rng(seed)
    centers = space.sample(rng, n_centers)
    counts = np.zeros((n_centers, radii.size))
    left = n
    while left > 0:
        m = min(left, _CHUNK // max(1, n_centers // 8))
        x = space.sample(rng, m)
        for i, y in enumerate(centers):
            d = np.sort(space.distance(x, y))
            counts[i] += np.searchsorted(d, radii, side="right")
        left -= m
    mu = counts / n
    rr = np.broadcast_to(radii, mu.shape)
    ok = mu > 0
    logr, logmu = np.log(rr[ok]), np.log(mu[ok])
    A = np.column_stack([np.ones_like(logr), logr])
    coef, res, *_ = np.linalg.lstsq(A, logmu, rcond=None)
    c_fit, m = float(np.exp(coef[0])), float(coef[1])
    ratio = mu[ok] / rr[ok] ** m
    c = float(ratio.min())
    C = max(1.0, float(ratio.max() / c))
    residual = float(np.sqrt(np.mean((A @ coef - logmu) ** 2)))
    return AhlforsEstimate(c=c, m=m, C=C, radii=radii, residual=residual, c_fit=c_fit)


# TSV export

def save_net(net: Net, path) -> None:
    """One line per vertex: id, coordinates, estimated measure."""
    name = getattr(net.space, "name", "t2")
    measure = net.cell_measure if net.cell_measure is not None else np.full(net.n, np.nan)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# space={name} t={net.t!r} seed={net.seed} samples={net.n_samples}\n")
        cols = "\t".join(f"x{i}" for i in range(net.space.dim))
        fh.write(f"id\t{cols}\tmeasure\n")
        for i, (p, w) in enumerate(zip(net.points, measure)):
            coords = "\t".join(repr(float(v)) for v in p)
            fh.write(f"{i}\t{coords}\t{float(w)!r}\n")


def load_net(path) -> Net:
    meta = {}
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                for item in line[1:].split():
                    key, _, value = item.partition("=")
                    meta[key] = value
            elif line.startswith("id"):
                continue
            elif line.strip():
                rows.append([float(v) for v in line.split("\t")])
    space = space_from_name(meta.get("space", "t2"))
    data = np.asarray(rows).reshape(-1, space.dim + 2)
    order = np.argsort(data[:, 0], kind="stable")
    data = data[order]
    net = Net(space, float(meta.get("t", "1")), data[:, 1 : 1 + space.dim].copy(),
              seed=int(meta.get("seed", 0)))
    measure = data[:, -1]
    if not np.all(np.isnan(measure)):
        net.cell_measure = measure
    net.n_samples = int(meta.get("samples", 0))
    return net


__all__ = [
    "AhlforsEstimate",
    "EmptyCellWarning",
    "FlatTorus",
    "Net",
    "NetConstructionWarning",
    "assign_cell",
    "build_net",
    "default_radii",
    "estimate_cell_measures",
    "load_net",
    "save_net",
    "verify_ahlfors",
]
