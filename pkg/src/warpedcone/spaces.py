"""Compact metric measure spaces and Lipschitz group actions on them.

Points are stored as float arrays with coordinates in ``[0, 1)``.  Every
function accepts a single point of shape ``(d,)`` or a batch of shape
``(n, d)``.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class Space:
    """Interface for a compact geodesic metric probability space."""

    kind: str
    dim: int

    @property
    def diameter(self) -> float:
        raise NotImplementedError

    @property
    def total_measure(self) -> float:
        return 1.0

    def wrap(self, x):
        raise NotImplementedError

    def distance(self, x, y):
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def check_points(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 0 or x.shape[-1] != self.dim:
            raise ValueError(
                f"expected points of dimension {self.dim}, got shape {x.shape}"
            )
        return x


@dataclass(frozen=True)
class FlatTorus(Space):
    """The flat torus ``R^d / Z^d`` with Lebesgue probability measure.

    ``FlatTorus(1)`` is the circle of circumference 1.
    """

    dim: int = 2

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.dim}")

    @property
    def kind(self) -> str:
        return "circle" if self.dim == 1 else "torus"

    @property
    def name(self) -> str:
        return "circle" if self.dim == 1 else f"t{self.dim}"

    @property
    def diameter(self) -> float:
        return float(np.sqrt(self.dim) / 2)

    # periodic box length, used by spatial indices
    box_size = 1.0

    def wrap(self, x):
        x = np.mod(np.asarray(x, dtype=float), 1.0)
        # mod can return exactly 1.0 for tiny negative inputs
        return np.where(x >= 1.0, 0.0, x)

    def displacement(self, x, y):
        """Coordinatewise wrapped difference ``y - x`` in ``[-1/2, 1/2)``."""
        delta = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
        return delta - np.floor(delta + 0.5)

    def distance(self, x, y):
        x = self.check_points(x)
        y = self.check_points(y)
        delta = np.abs(x - y) % 1.0
        delta = np.minimum(delta, 1.0 - delta)
        d = np.sqrt(np.sum(delta * delta, axis=-1))
        return float(d) if d.ndim == 0 else d

    def sample(self, rng, n):
        return rng.random((n, self.dim))


def circle() -> FlatTorus:
    return FlatTorus(1)


def space_from_name(name: str) -> FlatTorus:
    """Parse ``circle``, ``t1``, ``t2``, ``t3`` ... into a space."""
    name = name.strip().lower()
    if name in ("circle", "s1"):
        return FlatTorus(1)
    if name.startswith("t") and name[1:].isdigit():
        return FlatTorus(int(name[1:]))
    raise ValueError(f"unknown space {name!r}")


def distance(space: Space, x, y):
    """Metric distance between points (or batches of points) of ``space``."""
    return space.distance(x, y)


def _integer_inverse(a: np.ndarray) -> np.ndarray:
    det = int(round(np.linalg.det(a)))
    if det not in (1, -1):
        raise ValueError(f"matrix {a.tolist()} has determinant {det}, not +-1")
    inv = np.rint(np.linalg.inv(a)).astype(np.int64)
    if not np.array_equal(a @ inv, np.eye(len(a), dtype=np.int64)):
        raise ValueError(f"matrix {a.tolist()} is not invertible over the integers")
    return inv


@dataclass(frozen=True, eq=False)
class Generator:
    """A measure-preserving self-map of a flat torus.

    ``kind`` is one of ``"matrix"`` (toral automorphism), ``"rotation"``
    (translation by ``shift``) or ``"identity"``.
    """

    kind: str
    dim: int
    matrix: np.ndarray | None = None
    shift: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        if self.kind == "matrix":
            a = np.asarray(self.matrix)
            if a.shape != (self.dim, self.dim):
                raise ValueError(f"matrix must be {self.dim}x{self.dim}")
            if not np.all(a == np.rint(a)):
                raise ValueError("toral automorphisms need integer matrices")
            a = np.rint(a).astype(np.int64)
            _integer_inverse(a)
            object.__setattr__(self, "matrix", a)
        elif self.kind == "rotation":
            v = np.mod(np.asarray(self.shift, dtype=float).reshape(-1), 1.0)
            if v.shape != (self.dim,):
                raise ValueError(f"rotation vector must have length {self.dim}")
            object.__setattr__(self, "shift", v)
        elif self.kind != "identity":
            raise ValueError(f"unknown generator kind {self.kind!r}")

    @classmethod
    def from_matrix(cls, matrix, name=""):
        a = np.asarray(matrix)
        return cls("matrix", a.shape[0], matrix=a, name=name)

    @classmethod
    def rotation(cls, shift, name=""):
        v = np.atleast_1d(np.asarray(shift, dtype=float))
        return cls("rotation", len(v), shift=v, name=name)

    @classmethod
    def identity(cls, dim, name="id"):
        return cls("identity", dim, name=name)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "matrix":
            y = x @ self.matrix.T.astype(float)
        elif self.kind == "rotation":
            y = x + self.shift
        else:
            y = x.copy()
        y = np.mod(y, 1.0)
        return np.where(y >= 1.0, 0.0, y)

    def inverse(self) -> "Generator":
        name = self.name[:-3] if self.name.endswith("^-1") else self.name + "^-1"
        if self.kind == "matrix":
            return Generator("matrix", self.dim, matrix=_integer_inverse(self.matrix), name=name)
        if self.kind == "rotation":
            return Generator("rotation", self.dim, shift=-self.shift, name=name)
        return Generator("identity", self.dim, name=self.name)

    def same_map(self, other: "Generator", tol: float = 1e-12) -> bool:
        if self.kind != other.kind or self.dim != other.dim:
            return False
        if self.kind == "matrix":
            return bool(np.array_equal(self.matrix, other.matrix))
        if self.kind == "rotation":
            diff = np.abs(self.shift - other.shift) % 1.0
            return bool(np.all(np.minimum(diff, 1.0 - diff) <= tol))
        return True

    @property
    def lipschitz(self) -> float:
        """Largest singular value for matrices, 1 for isometries."""
        if self.kind == "matrix":
            return float(np.linalg.norm(self.matrix.astype(float), 2))
        return 1.0

    def to_config(self) -> dict[str, str]:
        if self.kind == "matrix":
            rows = "; ".join(" ".join(str(int(v)) for v in row) for row in self.matrix)
            return {"kind": "matrix", "matrix": rows}
        if self.kind == "rotation":
            return {"kind": "rotation", "shift": " ".join(repr(float(v)) for v in self.shift)}
        return {"kind": "identity"}


@dataclass(frozen=True, eq=False)
class Action:
    """A symmetric finite generating set acting on ``space``.

    Inverses missing from ``generators`` are appended when ``symmetrize``
    is true.  ``inverse_index[i]`` is the position of the inverse of
    generator ``i``.
    """

    space: FlatTorus
    generators: tuple[Generator, ...]
    symmetrize: bool = True
    inverse_index: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        gens = list(self.generators)
        for g in gens:
            if g.dim != self.space.dim:
                raise ValueError(
                    f"generator {g.name!r} acts in dimension {g.dim}, space has {self.space.dim}"
                )
        if self.symmetrize:
            for g in list(gens):
                if not any(h.same_map(g.inverse()) for h in gens):
                    gens.append(g.inverse())
        inverse_index = []
        for g in gens:
            inv = g.inverse()
            matches = [j for j, h in enumerate(gens) if h.same_map(inv)]
            inverse_index.append(matches[0] if matches else -1)
        object.__setattr__(self, "generators", tuple(gens))
        object.__setattr__(self, "inverse_index", tuple(inverse_index))

    @property
    def symmetric(self) -> bool:
        return all(j >= 0 for j in self.inverse_index)

    @property
    def n_generators(self) -> int:
        return len(self.generators)

    @property
    def lipschitz_constants(self) -> np.ndarray:
        return np.array([g.lipschitz for g in self.generators])

    @property
    def L(self) -> float:
        if not self.generators:
            return 1.0
        return float(self.lipschitz_constants.max())

    def apply(self, s: int, x):
        return apply(self, s, x)


def apply(action: Action, s: int, x):
    """Image of ``x`` under generator number ``s``, reduced mod 1."""
    x = action.space.check_points(x)
    return action.generators[s](x)


def lipschitz_estimate(action: Action, n_pairs: int, seed: int) -> np.ndarray:
    """Largest sampled distortion ``d(sx, sy) / d(x, y)`` per generator.

    Half of the pairs are uniform, half are close pairs (separation below
    ``1/(4L)``) so that wrap-around does not hide the local stretch.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be at least 1")
    space = action.space
    rng = np.random.default_rng(seed)
    x = space.sample(rng, n_pairs)
    y = space.sample(rng, n_pairs)
    n_local = n_pairs // 2
    if n_local:
        direction = rng.normal(size=(n_local, space.dim))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        scale = np.exp(rng.uniform(np.log(1e-6), np.log(0.25 / action.L), size=(n_local, 1)))
        y[:n_local] = space.wrap(x[:n_local] + scale * direction)
    d = space.distance(x, y)
    # zero-distance pairs are redrawn
    while np.any(d == 0):
        bad = d == 0
        y[bad] = space.sample(rng, int(bad.sum()))
        d = space.distance(x, y)
    ratios = np.empty(action.n_generators)
    for s, g in enumerate(action.generators):
        ratios[s] = np.max(space.distance(g(x), g(y)) / d)
    return ratios


# Built-in actions

def sl2z_action() -> Action:
    """``[[1,2],[0,1]]`` and ``[[1,0],[2,1]]`` with inverses on the 2-torus."""
    a = Generator.from_matrix([[1, 2], [0, 1]], name="a")
    b = Generator.from_matrix([[1, 0], [2, 1]], name="b")
    return Action(FlatTorus(2), (a, b))


def rotation_action(alpha=np.sqrt(2) - 1, space: FlatTorus | None = None) -> Action:
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    space = space or FlatTorus(len(alpha))
    return Action(space, (Generator.rotation(alpha, name="r"),))


def identity_action(space: FlatTorus) -> Action:
    return Action(space, (Generator.identity(space.dim),))


# Key-value configuration files

def _parse_matrix(text: str) -> np.ndarray:
    rows = [r.split() for r in text.replace(",", " ").split(";") if r.strip()]
    return np.array([[int(v) for v in row] for row in rows], dtype=np.int64)


def action_from_config(parser: configparser.ConfigParser) -> Action:
    """Build an action from ``[space]`` and ``[gen:<name>]`` sections."""
    if "space" not in parser:
        raise ValueError("action config needs a [space] section")
    sec = parser["space"]
    if "name" in sec:
        space = space_from_name(sec["name"])
    else:
        kind = sec.get("kind", "torus")
        space = FlatTorus(1) if kind == "circle" else FlatTorus(sec.getint("dim", 2))
    gens = []
    for name in parser.sections():
        if not name.startswith("gen:"):
            continue
        g = parser[name]
        label = name[4:]
        kind = g.get("kind", "matrix")
        if kind == "matrix":
            gens.append(Generator.from_matrix(_parse_matrix(g["matrix"]), name=label))
        elif kind == "rotation":
            shift = [float(v) for v in g["shift"].replace(",", " ").split()]
            gens.append(Generator.rotation(shift, name=label))
        elif kind == "identity":
            gens.append(Generator.identity(space.dim, name=label))
        else:
            raise ValueError(f"unknown generator kind {kind!r} in [{name}]")
    symmetrize = parser.getboolean("space", "symmetrize", fallback=True)
    return Action(space, tuple(gens), symmetrize=symmetrize)


def load_action(path) -> Action:
    parser = configparser.ConfigParser()
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh)
    return action_from_config(parser)


def action_to_config(action: Action) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    parser["space"] = {"name": action.space.name, "symmetrize": str(action.symmetrize).lower()}
    for i, g in enumerate(action.generators):
        label = g.name or f"g{i}"
        parser[f"gen:{label}"] = g.to_config()
    return parser


def save_action(action: Action, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        action_to_config(action).write(fh)


def parse_action(text) -> Action:
    """Accept a built-in name (``sl2z``, ``rotation``, ``identity:t2``) or a file path."""
    if isinstance(text, Action):
        return text
    text = str(text)
    if text == "sl2z":
        return sl2z_action()
    if text.startswith("rotation"):
        _, _, arg = text.partition(":")
        return rotation_action(float(arg)) if arg else rotation_action()
    if text.startswith("identity"):
        _, _, arg = text.partition(":")
        return identity_action(space_from_name(arg or "t2"))
    if Path(text).exists():
        return load_action(text)
    raise ValueError(f"unknown action {text!r}")
