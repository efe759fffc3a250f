"""Command-line entry point.

Subcommands: ``net``, ``graph``, ``spectrum``, ``qi-check``, ``family``,
``plots``.  The exit status is 0 only when no checked inequality is
violated.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
import warnings
from pathlib import Path

from . import harness
from .net import build_net, default_radii, estimate_cell_measures, load_net, save_net, verify_ahlfors
from .qi import qi_invariance_check
from .spaces import parse_action, space_from_name
from .spectra import RowMassWarning, spectral_report, gap_margin
from .warpgraph import VARIANTS, build_graph, load_graph, save_graph, write_dot


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def cmd_net(args) -> int:
    space = space_from_name(args.space)
    net = build_net(space, args.t, args.seed, streak_factor=args.streak_factor)
    samples = args.samples if args.samples else 200 * net.n
    estimate_cell_measures(net, samples, args.seed + 1, args.workers)
    save_net(net, args.out)
    print(f"net: {net.n} points, min separation {net.min_separation():.4g}, "
          f"covering radius {net.achieved_density:.4g} (1/t = {1 / args.t:.4g})")
    return 0


def cmd_graph(args) -> int:
    net = load_net(args.net)
    action = parse_action(args.action)
    if action.space != net.space:
        print(f"error: action lives on {action.space.name}, net on {net.space.name}", file=sys.stderr)
        return 2
    g = build_graph(net, action, args.samples_per_cell, args.seed, variant=args.variant)
    save_graph(g, args.out)
    if args.dot:
        write_dot(g, args.dot)
    deg = g.degrees()
    print(f"graph: {g.n} vertices, max degree {int(deg.max())}, connected={g.is_connected()}")
    return 0


def _append_csv(path: Path, header: list[str], row: list) -> None:
    new = not path.exists() or path.stat().st_size == 0
    with open(path, "a", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(header)
        w.writerow(row)


def cmd_spectrum(args) -> int:
    net = load_net(args.net)
    measures = net.cell_measure
    g = load_graph(args.graph, measures=measures, points=net.points)
    ahlfors = verify_ahlfors(net.space, args.ahlfors_centers, default_radii(net.space),
                             args.ahlfors_samples, args.seed)
    p_list = _floats(args.p)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RowMassWarning)
        rep = spectral_report(g, ahlfors, p_list, args.restarts, args.seed)
    margin = gap_margin(rep)
    extra = [p for p in p_list if p not in (1.0, 2.0, 4.0)]
    header = harness.CSV_COLUMNS + [f"eta_p{p:g}" for p in extra]
    eta = [rep.eta.get((p, 1), math.nan) for p in (1.0, 2.0, 4.0)]
    row = [rep.t, rep.n_vertices, rep.lambda2, *eta, rep.kappa_hat, rep.markov_norm, rep.K_hat,
           rep.D_max, margin.strict_margin, *[rep.eta[(p, 1)] for p in extra]]
    _append_csv(Path(args.out), header, [harness._fmt(v) for v in row])
    print(f"t={rep.t:g} lambda2={rep.lambda2:.6g} kappa_hat={rep.kappa_hat:.6g} "
          f"fwd_margin={margin.strict_margin:.4g}")
    return 0 if margin.strict_margin >= 0 else 1


def cmd_qi(args) -> int:
    paths = [p for p in args.graphs.split(",") if p]
    graphs = [load_graph(p) for p in paths]
    rep = qi_invariance_check(graphs, k=args.subdivide, restarts=args.restarts, seed=args.seed)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        p = rep.params
        fh.write(f"# subdivide={args.subdivide} C={p.C} A={p.A} B={p.B} D={p.D} "
                 f"bound={rep.bound!r}\n")
        w.writerow(["graph", "eta_G", "eta_H", "bound", "margin"])
        for path, eg, eh, m in zip(paths, rep.eta_G, rep.eta_H, rep.margins):
            w.writerow([path, repr(float(eg)), repr(float(eh)), repr(rep.bound), repr(float(m))])
    print(f"qi-check: bound {rep.bound:.4g}, {len(rep.violations)} violation(s)")
    return 0 if rep.ok else 1


def _config(args) -> harness.ExperimentConfig:
    if args.config:
        cfg = harness.ExperimentConfig.load(args.config)
    else:
        presets = {"sl2z": harness.sl2z_config, "rotation": harness.rotation_config,
                   "identity": harness.identity_config}
        cfg = presets[args.preset]()
    overrides = {}
    if getattr(args, "output_dir", None):
        overrides["output_dir"] = args.output_dir
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if overrides:
        cfg = harness.ExperimentConfig.from_dict({**cfg.to_dict(), **overrides})
    return cfg


def cmd_family(args) -> int:
    cfg = _config(args)
    try:
        verdict = harness.run_family(cfg, args.out)
    except harness.LevelFailure as exc:
        print(f"family: {exc}; {len(exc.rows)} level(s) kept", file=sys.stderr)
        return 1
    print(f"family {cfg.label}: {verdict.verdict} (#Z growth {verdict.growth:.3g}x, "
          f"eta min/max {verdict.eta_ratio:.3g}, kappa {verdict.kappa_min:.3g}..{verdict.kappa_max:.3g})")
    if args.plots:
        harness.emit_plots(verdict, args.plots)
    bad = [r.t for r in verdict.rows if r.fwd_margin < 0]
    if bad:
        print(f"forward inequality violated at t={bad}", file=sys.stderr)
        return 1
    if args.expect and verdict.verdict != args.expect:
        print(f"expected {args.expect}", file=sys.stderr)
        return 1
    return 0


def cmd_plots(args) -> int:
    path = args.csv
    if path is None:
        cfg = _config(args)
        path = Path(cfg.output_dir) / f"{cfg.label}.csv"
    verdict = harness.verdict_from_csv(path)
    files = harness.emit_plots(verdict, args.out)
    print("\n".join(str(f) for f in files))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="warpedcone", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("net", help="build a 1/t-separated net with cell measures")
    p.add_argument("--space", default="t2")
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=0, help="measure samples (default 200 per cell)")
    p.add_argument("--streak-factor", type=int, default=200)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_net)

    p = sub.add_parser("graph", help="build G(t) from a net and an action")
    p.add_argument("--net", required=True)
    p.add_argument("--action", default="sl2z", help="sl2z, rotation[:alpha], identity[:space] or a file")
    p.add_argument("--samples-per-cell", type=int, default=200)
    p.add_argument("--variant", choices=VARIANTS, default="full")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dot")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("spectrum", help="append a spectral report row to a CSV")
    p.add_argument("--graph", required=True)
    p.add_argument("--net", required=True)
    p.add_argument("--p", default="1,2,4")
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ahlfors-centers", type=int, default=64)
    p.add_argument("--ahlfors-samples", type=int, default=200_000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("qi-check", help="p=1 expansion transfer under subdivision")
    p.add_argument("--graphs", required=True, help="comma-separated graph files")
    p.add_argument("--subdivide", type=int, default=1)
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_qi)

    for name, func, helptext in (("family", cmd_family, "sweep a level grid and classify"),
                                 ("plots", cmd_plots, "write plot series from a family CSV")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--preset", choices=("sl2z", "rotation", "identity"), default="sl2z")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--output-dir")
        p.set_defaults(func=func)
        if name == "family":
            p.add_argument("--out", help="CSV path (default <output_dir>/<name>.csv)")
            p.add_argument("--plots", help="also write plot series to this directory")
            p.add_argument("--expect", choices=(harness.EXPANDER, harness.NON_EXPANDER,
                                                harness.INCONCLUSIVE))
        else:
            p.add_argument("--csv")
            p.add_argument("--out", required=True)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
