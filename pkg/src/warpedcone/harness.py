"""Level sweeps, control experiments, CSV persistence and plot series."""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .net import build_net, default_radii, estimate_cell_measures, verify_ahlfors
from .spaces import parse_action, space_from_name
from .spectra import RowMassWarning, SpectralReport, spectral_report, gap_margin
from .warpgraph import VARIANTS, build_graph

log = logging.getLogger(__name__)

EXPANDER = "expander-consistent"
NON_EXPANDER = "non-expander-consistent"
INCONCLUSIVE = "inconclusive"

# verdict policy; thresholds are choices of this tool
GROWTH_MIN = 16.0
FLAT_RATIO = 0.5
DECAY_MIN = 4.0

STREAMS = ("net", "cells", "edges", "optimizer", "ahlfors")

CSV_COLUMNS = ["t", "n_vertices", "lambda2", "eta_p1", "eta_p2", "eta_p4", "kappa_hat",
               "markov_norm", "K_hat", "D_max", "fwd_margin"]


class LevelFailure(RuntimeError):
    """A level could not be built; rows of earlier levels stay on disk."""

    def __init__(self, t, cause, rows):
        super().__init__(f"level t={t} failed: {cause}")
        self.t = t
        self.rows = rows


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines a family run."""

    action: str = "sl2z"
    levels: tuple = (8.0, 12.0, 16.0, 24.0, 32.0, 34.0)
    seed: int = 0
    space: str = ""
    streak_factor: int = 200
    samples_per_cell: int = 200
    measure_factor: int = 200
    p_list: tuple = (1.0, 2.0, 4.0)
    restarts: int = 8
    variant: str = "full"
    ahlfors_centers: int = 64
    ahlfors_samples: int = 200_000
    workers: int = 1
    level_workers: int = 1
    output_dir: str = "results"
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(float(t) for t in self.levels))
        object.__setattr__(self, "p_list", tuple(float(p) for p in self.p_list))
        if not self.levels:
            raise ValueError("level grid is empty")
        if any(t < 1 for t in self.levels):
            raise ValueError("levels must satisfy t >= 1")
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise ValueError("levels must be strictly increasing")
        for key in ("streak_factor", "samples_per_cell", "measure_factor", "restarts",
                    "ahlfors_centers", "ahlfors_samples", "workers", "level_workers"):
            if getattr(self, key) <= 0:
                raise ValueError(f"{key} must be positive")
        if self.measure_factor < 10:
            raise ValueError("measure_factor must be at least 10")
        if any(p < 1 for p in self.p_list):
            raise ValueError("exponents must be >= 1")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        act = parse_action(self.action)
        if self.space and space_from_name(self.space) != act.space:
            raise ValueError(f"space {self.space!r} does not match the action's space")

    @property
    def label(self) -> str:
        return self.name or str(self.action).split(":")[0].rsplit("/", 1)[-1]

    def resolved_space(self):
        return space_from_name(self.space) if self.space else parse_action(self.action).space

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["levels"] = list(self.levels)
        d["p_list"] = list(self.p_list)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8", newline="\n")

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def sl2z_config(**kw) -> ExperimentConfig:
    return ExperimentConfig(**{"action": "sl2z", "name": "sl2z", **kw})


def rotation_config(**kw) -> ExperimentConfig:
    levels = (12.0, 24.0, 48.0, 96.0, 192.0, 256.0)
    return ExperimentConfig(**{"action": "rotation", "name": "rotation", "levels": levels, **kw})


def identity_config(**kw) -> ExperimentConfig:
    return ExperimentConfig(**{"action": "identity:t2", "name": "identity", **kw})


def substream_seed(root: int, t: float, stream: str) -> int:
    """Integer seed of a named stream at one level, independent of the grid."""
    key = (int(round(float(t) * 1_000_000)), STREAMS.index(stream))
    ss = np.random.SeedSequence(entropy=int(root), spawn_key=key)
    return int(ss.generate_state(1, np.uint64)[0])


def family_ahlfors(config: ExperimentConfig):
    space = config.resolved_space()
    return verify_ahlfors(space, config.ahlfors_centers, default_radii(space),
                          config.ahlfors_samples, substream_seed(config.seed, 0, "ahlfors"))


@dataclass
class LevelRow:
    report: SpectralReport
    fwd_margin: float
    eta2: float

    @property
    def t(self):
        return self.report.t

    def values(self, p_list) -> list:
        r = self.report
        out = [r.t, r.n_vertices, r.lambda2]
        out += [r.eta.get((p, 1), math.nan) for p in (1.0, 2.0, 4.0)]
        out += [r.kappa_hat, r.markov_norm, r.K_hat, r.D_max, self.fwd_margin]
        out += [r.eta[(p, 1)] for p in p_list if p not in (1.0, 2.0, 4.0)]
        return out


def run_level(config: ExperimentConfig, t: float, ahlfors) -> LevelRow:
    """Net, graph and spectra at one level."""
    action = parse_action(config.action)
    seeds = {s: substream_seed(config.seed, t, s) for s in STREAMS}
    net = build_net(action.space, t, seeds["net"], streak_factor=config.streak_factor)
    estimate_cell_measures(net, config.measure_factor * net.n, seeds["cells"], config.workers)
    graph = build_graph(net, action, config.samples_per_cell, seeds["edges"], variant=config.variant)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RowMassWarning)
        report = spectral_report(graph, ahlfors, config.p_list, config.restarts, seeds["optimizer"])
    eta2 = report.eta.get((2.0, 1), report.lambda2 / 2)
    fwd = math.nan
    if action.n_generators:
        fwd = eta2 - report.kappa_hat / (action.n_generators * report.K_hat**3)
    log.info("t=%g: #Z=%d lambda2=%.4g kappa=%.4g", t, report.n_vertices, report.lambda2,
             report.kappa_hat)
    return LevelRow(report, fwd, eta2)


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def csv_header(config: ExperimentConfig) -> list[str]:
    extra = [f"eta_p{p:g}" for p in config.p_list if p not in (1.0, 2.0, 4.0)]
    return CSV_COLUMNS + extra


def _header_lines(config: ExperimentConfig) -> list[str]:
    return [
        f"# family={config.label} action={config.action} seed={config.seed} variant={config.variant}",
        f"# levels={','.join(f'{t:g}' for t in config.levels)} (any strictly increasing grid accepted)",
        f"# verdict policy (tool choice): expander-consistent if #Z grows >= {GROWTH_MIN:g}x and "
        f"min/max >= {FLAT_RATIO:g} for eta(2,1) and kappa_hat; non-expander-consistent if "
        f"#Z grows >= {GROWTH_MIN:g}x and eta(2,1) decreases monotonically by >= {DECAY_MIN:g}x",
        "# fwd_margin = eta(2,1) - kappa_hat / (#S * K_hat^3)",
    ]


def write_rows(path, config: ExperimentConfig, rows, append: bool = False) -> None:
    mode = "a" if append else "w"
    with open(path, mode, encoding="utf-8", newline="") as fh:
        if not append:
            for line in _header_lines(config):
                fh.write(line + "\n")
            fh.write(",".join(csv_header(config)) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        for row in rows:
            w.writerow([_fmt(v) for v in row.values(config.p_list)])


def read_rows(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return [{k: float(v) for k, v in r.items()} for r in csv.DictReader(lines)]


@dataclass
class FamilyVerdict:
    rows: list
    verdict: str
    eta_min: float
    eta_max: float
    eta_ratio: float
    endpoint_ratio: float
    kappa_min: float
    kappa_max: float
    growth: float
    monotone_decay: bool
    p_list: tuple = (1.0, 2.0, 4.0)
    config: ExperimentConfig | None = None
    csv_path: str | None = None
    notes: list = field(default_factory=list)

    @property
    def levels(self) -> list:
        return [r.t for r in self.rows]

    def eta_series(self, p: float) -> np.ndarray:
        return np.array([r.report.eta.get((float(p), 1), math.nan) for r in self.rows])


def classify(t, n_vertices, eta2, kappa) -> tuple[str, dict]:
    """Verdict from per-level values alone."""
    order = np.argsort(np.asarray(t, dtype=float), kind="stable")
    n = np.asarray(n_vertices, dtype=float)[order]
    e = np.asarray(eta2, dtype=float)[order]
    k = np.asarray(kappa, dtype=float)[order]
    if len(e) < 2:
        stats = dict(eta_min=float(e.min()) if len(e) else math.nan,
                     eta_max=float(e.max()) if len(e) else math.nan, eta_ratio=math.nan,
                     endpoint_ratio=math.nan, kappa_min=math.nan, kappa_max=math.nan,
                     growth=1.0, monotone_decay=False)
        return INCONCLUSIVE, stats
    growth = float(n[-1] / n[0])
    eta_min, eta_max = float(e.min()), float(e.max())
    kmin, kmax = float(k.min()), float(k.max())
    ratio = eta_min / eta_max if eta_max > 0 else 0.0
    endpoint = float(e[-1] / e[0]) if e[0] > 0 else math.nan
    monotone = bool(np.all(np.diff(e) < 0))
    stats = dict(eta_min=eta_min, eta_max=eta_max, eta_ratio=ratio, endpoint_ratio=endpoint,
                 kappa_min=kmin, kappa_max=kmax, growth=growth, monotone_decay=monotone)
    if growth < GROWTH_MIN:
        return INCONCLUSIVE, stats
    if eta_min > 0 and ratio >= FLAT_RATIO and kmax > 0 and kmin >= FLAT_RATIO * kmax:
        return EXPANDER, stats
    if monotone and e[0] >= DECAY_MIN * e[-1]:
        return NON_EXPANDER, stats
    return INCONCLUSIVE, stats


def verdict_from_rows(rows, p_list=(1.0, 2.0, 4.0), config=None, csv_path=None) -> FamilyVerdict:
    verdict, stats = classify([r.t for r in rows], [r.report.n_vertices for r in rows],
                              [r.eta2 for r in rows], [r.report.kappa_hat for r in rows])
    return FamilyVerdict(rows=list(rows), verdict=verdict, p_list=tuple(float(p) for p in p_list),
                         config=config, csv_path=csv_path, **stats)


def _level_job(args):
    config, t, ahlfors = args
    return run_level(config, t, ahlfors)


def run_family(config: ExperimentConfig, csv_path=None) -> FamilyVerdict:
    """Sweep the level grid, append one CSV row per level and classify.

    Levels may run in ``config.level_workers`` processes; rows are written
    in grid order by this process only.  A failing level raises
    :class:`LevelFailure` after the rows before it are on disk.
    """
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = Path(csv_path) if csv_path else out_dir / f"{config.label}.csv"
    ahlfors = family_ahlfors(config)
    write_rows(csv_path, config, [])
    rows: list[LevelRow] = []
    jobs = [(config, t, ahlfors) for t in config.levels]

    def consume(results):
        for t, get in zip(config.levels, results):
            try:
                row = get()
            except Exception as exc:
                raise LevelFailure(t, exc, rows) from exc
            rows.append(row)
            write_rows(csv_path, config, [row], append=True)

    if config.level_workers > 1:
        with ProcessPoolExecutor(config.level_workers) as pool:
            futures = [pool.submit(_level_job, j) for j in jobs]
            consume(f.result for f in futures)
    else:
        consume((lambda j=j: _level_job(j)) for j in jobs)
    return verdict_from_rows(rows, config.p_list, config, str(csv_path))


def _write_series(path: Path, header: str, xs, ys) -> Path:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"t\t{header}\n")
        for x, y in zip(xs, ys):
            fh.write(f"{_fmt(x)}\t{_fmt(y)}\n")
    return path


def emit_plots(verdict: FamilyVerdict, out) -> list[Path]:
    """Tab-separated ``(t, value)`` series for plotting, one file each."""
    if len(verdict.rows) < 2:
        raise ValueError("need at least two levels to plot")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    t = [r.t for r in verdict.rows]
    files = []
    for p in verdict.p_list:
        files.append(_write_series(out / f"eta_p{p:g}.tsv", f"eta_p{p:g}", t, verdict.eta_series(p)))
    files.append(_write_series(out / "kappa_hat.tsv", "kappa_hat", t,
                               [r.report.kappa_hat for r in verdict.rows]))
    files.append(_write_series(out / "n_vertices.tsv", "n_vertices", t,
                               [r.report.n_vertices for r in verdict.rows]))
    if 2.0 in verdict.p_list:
        files.append(_write_series(out / "fwd_margin.tsv", "fwd_margin", t,
                                   [r.fwd_margin for r in verdict.rows]))
    return files


def rows_from_csv(path) -> list[LevelRow]:
    """Rebuild level rows (enough for verdicts and plots) from a family CSV."""
    rows = []
    for r in read_rows(path):
        eta = {}
        for key, value in r.items():
            if key.startswith("eta_p") and not math.isnan(value):
                eta[(float(key[5:]), 1)] = value
        rep = SpectralReport(t=r["t"], n_vertices=int(r["n_vertices"]), lambda2=r["lambda2"],
                             eta=eta, kappa_hat=r["kappa_hat"], markov_norm=r["markov_norm"],
                             K_hat=r["K_hat"], D_max=int(r["D_max"]), n_generators=0)
        rows.append(LevelRow(rep, r["fwd_margin"], eta.get((2.0, 1), r["lambda2"] / 2)))
    return rows


def verdict_from_csv(path) -> FamilyVerdict:
    rows = rows_from_csv(path)
    ps = sorted({p for r in rows for (p, _) in r.report.eta})
    return verdict_from_rows(rows, ps, csv_path=str(path))


def forward_margins(verdict: FamilyVerdict, action=None):
    """Per-level forward-inequality margins (both normalizations)."""
    return [gap_margin(r.report, action) for r in verdict.rows]


__all__ = [
    "CSV_COLUMNS",
    "DECAY_MIN",
    "EXPANDER",
    "ExperimentConfig",
    "FLAT_RATIO",
    "FamilyVerdict",
    "GROWTH_MIN",
    "INCONCLUSIVE",
    "LevelFailure",
    "LevelRow",
    "NON_EXPANDER",
    "classify",
    "emit_plots",
    "identity_config",
    "rotation_config",
    "run_family",
    "run_level",
    "sl2z_config",
    "substream_seed",
    "verdict_from_csv",
]
