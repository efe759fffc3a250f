"""Transfer of p=1 expansion constants along quasi-isometries."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .spectra import estimate_eta
from .warpgraph import as_adjacency


def ball_size_bound(radius: float, degree: int) -> int:
    """Largest possible number of vertices in a closed ``radius``-ball of a
    graph with maximum degree ``degree`` (the degree-regular tree count)."""
    r = math.ceil(radius) if radius > 0 else 0
    if r == 0 or degree == 0:
        return 1
    if degree == 1:
        return 2
    if degree == 2:
        return 1 + 2 * r
    return 1 + degree * ((degree - 1) ** r - 1) // (degree - 2)


@dataclass(frozen=True)
class QIParams:
    """Constants of a quasi-isometry ``i: G -> H`` between graph families.

    ``C^-1 d(g,g') - A <= d(i g, i g') <= C d(g,g') + A`` and every vertex of
    ``H`` lies within ``B`` of the image; ``D`` bounds all vertex degrees.
    """

    C: float
    A: float
    B: float
    D: int

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.C, self.A, self.B, self.D)):
            raise ValueError("QI constants must be finite")
        if self.C < 1 or self.A < 0 or self.B < 0 or self.D < 0:
            raise ValueError("need C >= 1 and A, B, D >= 0")

    @property
    def K_A(self) -> int:
        return ball_size_bound(self.A, self.D)

    @property
    def K_B(self) -> int:
        return ball_size_bound(self.B, self.D)

    @property
    def K_CA(self) -> int:
        return ball_size_bound(self.C + self.A, self.D)


def transfer_bound(eta_G: float, params: QIParams) -> float:
    """p=1 expansion constant guaranteed for H given ``eta_G`` for G.

    ``1 / (K_A^3 K_B^2 K_{C+A}^2 / eta_G + 2 K_B^2)``
    """
    if not eta_G > 0:
        raise ValueError(f"eta_G must be positive, got {eta_G}")
    ka, kb, kca = params.K_A, params.K_B, params.K_CA
    return 1.0 / (ka**3 * kb**2 * kca**2 / eta_G + 2.0 * kb**2)


def subdivide(graph, k: int = 1):
    """Replace every edge by a path with ``k`` interior vertices.

    Returns the subdivided adjacency and the constants of the inclusion of
    the original vertices (which keep their indices ``0..n-1``).
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    a = as_adjacency(graph)
    n = a.shape[0]
    upper = sp.triu(a, k=1).tocoo()
    order = np.lexsort((upper.col, upper.row))
    u, v = upper.row[order], upper.col[order]
    m = len(u)
    interior = n + np.arange(m * k).reshape(m, k)
    chain = np.column_stack([u, interior, v])
    src = chain[:, :-1].ravel()
    dst = chain[:, 1:].ravel()
    size = n + m * k
    h = sp.coo_matrix((np.ones(len(src)), (src, dst)), shape=(size, size))
    h = (h + h.T).tocsr()
    deg = np.asarray(a.sum(axis=1)).ravel()
    D = int(max(deg.max() if n else 0, 2 if m else 0))
    return h, QIParams(C=k + 1, A=0, B=math.ceil(k / 2), D=D)


@dataclass
class QIReport:
    eta_G: np.ndarray
    eta_H: np.ndarray
    params: QIParams
    bound: float
    margins: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def violations(self) -> np.ndarray:
        return np.flatnonzero(self.margins < 0)

    @property
    def ok(self) -> bool:
        return len(self.violations) == 0


def qi_invariance_check(family, k: int = 1, restarts: int = 8, seed: int = 0,
                        eta_fn=None) -> QIReport:
    """Measure p=1 expansion before and after subdivision.

    Every subdivided member must satisfy ``eta_H >= transfer_bound(min
    eta_G)``, with QI constants shared by the whole family (``D`` is the
    largest degree over both families).  ``eta_fn(adjacency)`` overrides
    the p=1 estimator, e.g. with an exhaustive oracle on tiny graphs.
    """
    if eta_fn is None:
        def eta_fn(adj):
            return estimate_eta(adj, 1.0, 1, restarts, seed).value

    originals = [as_adjacency(g) for g in family]
    subdivided = [subdivide(g, k) for g in originals]
    D = max(p.D for _, p in subdivided) if subdivided else 2
    first = subdivided[0][1]
    params = QIParams(C=first.C, A=first.A, B=first.B, D=D)
    eta_G = np.array([eta_fn(g) for g in originals])
    eta_H = np.array([eta_fn(h) for h, _ in subdivided])
    bound = transfer_bound(float(eta_G.min()), params)
    return QIReport(eta_G, eta_H, params, bound, eta_H - bound)
