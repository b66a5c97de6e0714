"""Command-line pipeline: fit, zbeta, rates, contour, womble, plot, serve.

Subcommands communicate through a model archive directory. Every derived
output directory gets a manifest recording the seed, a config digest, and
digests of the inputs consumed, and reruns with the same manifest reproduce
the output files byte for byte. Input files are never modified.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import archive
from .archive import ArchiveError
from .geometry import GridSpec, Surface, extract_contours, make_grid, predict_surface
from .kernels import SmoothnessError, resolve_family
from .model import (
    PARAM_NAMES,
    McmcConfig,
    McmcDivergenceError,
    SpatialDataset,
    fit_theta,
    sample_z_beta,
)
from .numerics import STREAM_FIT, STREAM_RATES, STREAM_WOMBLE, STREAM_ZBETA, stream
from .plotting import render_heatmap
from .rates import sprates
from .womble import curvature_supported, spwombling

KERNEL_CHOICES = ("matern1", "matern2", "gaussian")
MEASURE_FILES = {"gradient": "wm1.csv", "curvature": "wm2.csv"}
WM_HEADER = ("seg", "q2.5", "q50", "q97.5", "sig")
RATES_HEADER = ("x", "y", "q2.5", "q50", "q97.5", "sig")


def parse_grid(text: str) -> GridSpec:
    parts = text.split(",")
    if len(parts) != 6:
        raise argparse.ArgumentTypeError(
            "grid must be xmin,xmax,ymin,ymax,nx,ny"
        )
    try:
        xmin, xmax, ymin, ymax = (float(p) for p in parts[:4])
        nx, ny = (int(p) for p in parts[4:])
    except ValueError:
        raise argparse.ArgumentTypeError(
            "grid must be four floats then two integers: xmin,xmax,ymin,ymax,nx,ny"
        ) from None
    try:
        return GridSpec(xmin, xmax, ymin, ymax, nx, ny)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wombler",
        description=(
            "Bayesian wombling pipeline: fit a spatial GP, draw the latent "
            "field, map gradients and curvatures, lift contours, and measure "
            "boundaries along curves."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit the model and create an archive")
    fit.add_argument("--input", required=True, help="CSV with header x,y,val")
    fit.add_argument("--archive", required=True, help="archive directory to create")
    fit.add_argument("--kernel", required=True, choices=KERNEL_CHOICES)
    fit.add_argument("--iterations", type=int, default=10000)
    fit.add_argument("--burn-in", type=int, default=5000)
    fit.add_argument("--thin", type=int, default=1)
    fit.add_argument("--seed", type=int, default=0)
    fit.set_defaults(func=cmd_fit)

    zbeta = sub.add_parser(
        "zbeta", help="append latent-field and trend draws to the archive"
    )
    zbeta.add_argument("--archive", required=True)
    zbeta.set_defaults(func=cmd_zbeta)

    rates = sub.add_parser(
        "rates", help="posterior gradient/curvature summaries on a grid"
    )
    rates.add_argument("--archive", required=True)
    rates.add_argument("--grid", required=True, type=parse_grid)
    rates.add_argument("--out", required=True)
    rates.add_argument("--seed", type=int, default=None)
    rates.set_defaults(func=cmd_rates)

    contour = sub.add_parser(
        "contour", help="extract level-set curves from the predicted surface"
    )
    contour.add_argument("--archive", required=True)
    contour.add_argument("--grid", required=True, type=parse_grid)
    contour.add_argument("--level", required=True, type=float)
    contour.add_argument("--out", required=True)
    contour.set_defaults(func=cmd_contour)

    womble = sub.add_parser(
        "womble", help="boundary measures along a polyline curve"
    )
    womble.add_argument("--archive", required=True)
    womble.add_argument("--curve", required=True, help="CSV with header x,y")
    womble.add_argument("--out", required=True)
    womble.add_argument("--seed", type=int, default=None)
    womble.add_argument(
        "--measures",
        choices=("auto", "gradient", "curvature", "both"),
        default="auto",
        help="which measures to report (auto = all the kernel supports)",
    )
    womble.set_defaults(func=cmd_womble)

    plot = sub.add_parser(
        "plot", help="SVG heatmap of the surface or a rates component"
    )
    plot.add_argument("--archive", required=True)
    plot.add_argument("--grid", required=True, type=parse_grid)
    plot.add_argument("--out", required=True)
    plot.add_argument(
        "--field",
        default="surface",
        choices=("surface", "dx", "dy", "dxx", "dxy", "dyy"),
    )
    plot.add_argument("--curve", default=None, help="optional overlay curve CSV")
    plot.add_argument("--seed", type=int, default=None)
    plot.set_defaults(func=cmd_plot)

    serve = sub.add_parser("serve", help="HTTP JSON API over a fitted archive")
    serve.add_argument("--archive", required=True)
    serve.add_argument("--port", type=int, default=8765)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--ui-dir", default=None, help="static UI directory to serve at /")
    serve.set_defaults(func=cmd_serve)
    return parser


def _effective_seed(args, manifest) -> int:
    return int(manifest["seed"] if args.seed is None else args.seed)


def _archive_input_digests(archive_dir) -> dict:
    root = Path(archive_dir)
    out = {}
    for name in (archive.DATA_FILE, archive.THETA_FILE, archive.Z_FILE, archive.BETA_FILE):
        path = root / name
        if path.exists():
            out[name] = archive.sha256_file(path)
    return out


def cmd_fit(args) -> int:
    coords, y = archive.read_data_csv(args.input)
    data = SpatialDataset(coords, y)
    config = McmcConfig(
        iterations=args.iterations,
        burn_in=args.burn_in,
        thin=args.thin,
        seed=args.seed,
    )
    family = resolve_family(args.kernel)
    fit = fit_theta(data, family, config, stream(args.seed, STREAM_FIT))
    archive.save_fit(args.archive, data, fit, archive.sha256_file(args.input))
    for name in PARAM_NAMES:
        s = fit.summaries[name]
        print(
            f"{name}: median {s['q50']:.6g}, "
            f"95% CI ({s['q2.5']:.6g}, {s['q97.5']:.6g})"
        )
    print(f"retained {len(fit.chain)} draws -> {args.archive}")
    return 0


def cmd_zbeta(args) -> int:
    manifest = archive.load_manifest(args.archive)
    data = archive.load_data(args.archive)
    chain = archive.load_chain(args.archive)
    draws = sample_z_beta(
        data,
        chain,
        manifest["family"],
        stream(int(manifest["seed"]), STREAM_ZBETA),
    )
    archive.save_draws(args.archive, draws)
    print(
        f"wrote {draws.m} latent-field draws over {draws.z.shape[1]} sites "
        f"and {draws.m} trend draws -> {args.archive}"
    )
    return 0


def cmd_rates(args) -> int:
    manifest = archive.load_manifest(args.archive)
    data = archive.load_data(args.archive)
    draws = archive.load_draws(args.archive)
    family = manifest["family"]
    seed = _effective_seed(args, manifest)
    grid = make_grid(args.grid)
    result = sprates(grid, data, draws, family, stream(seed, STREAM_RATES))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for ci, comp in enumerate(result.components):
        rows = (
            (
                result.grid[g, 0],
                result.grid[g, 1],
                result.q025[g, ci],
                result.q50[g, ci],
                result.q975[g, ci],
                int(result.sig[g, ci]),
            )
            for g in range(len(result.grid))
        )
        archive.write_csv(out / f"rates_{comp}.csv", RATES_HEADER, rows)
    archive.write_out_manifest(
        out,
        "rates",
        seed,
        {
            "kernel": family,
            "grid": [
                args.grid.xmin,
                args.grid.xmax,
                args.grid.ymin,
                args.grid.ymax,
                args.grid.nx,
                args.grid.ny,
            ],
        },
        _archive_input_digests(args.archive),
    )
    print(
        f"wrote {len(result.components)} component CSVs "
        f"({len(result.grid)} locations) -> {out}"
    )
    return 0


def cmd_contour(args) -> int:
    manifest = archive.load_manifest(args.archive)
    data = archive.load_data(args.archive)
    draws = archive.load_draws(args.archive)
    surface = predict_surface(data, draws, args.grid, manifest["family"])
    contours = extract_contours(surface, args.level)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pts = make_grid(args.grid)
    archive.write_csv(
        out / "surface.csv",
        ("x", "y", "z"),
        (
            (pts[g, 0], pts[g, 1], v)
            for g, v in enumerate(surface.flat_values())
        ),
    )
    for i, curve in enumerate(contours, start=1):
        archive.write_curve_csv(out / f"contour_{i:02d}.csv", curve)
    archive.write_out_manifest(
        out,
        "contour",
        int(manifest["seed"]),
        {
            "kernel": manifest["family"],
            "level": args.level,
            "grid": [
                args.grid.xmin,
                args.grid.xmax,
                args.grid.ymin,
                args.grid.ymax,
                args.grid.nx,
                args.grid.ny,
            ],
        },
        _archive_input_digests(args.archive),
    )
    if contours:
        print(f"wrote {len(contours)} contour(s) at level {args.level} -> {out}")
    else:
        print(f"no contours at level {args.level}; wrote surface only -> {out}")
    return 0


def _wanted_measures(choice: str, family: str) -> tuple[str, ...]:
    if choice in ("curvature", "both") and not curvature_supported(family):
        raise SmoothnessError(
            f"the {family} family supports gradient measures only; curvature "
            "measures need matern52 or gaussian"
        )
    if choice == "gradient":
        return ("gradient",)
    if choice == "curvature":
        return ("curvature",)
    if choice == "both":
        return ("gradient", "curvature")
    return ("gradient", "curvature") if curvature_supported(family) else ("gradient",)


def cmd_womble(args) -> int:
    manifest = archive.load_manifest(args.archive)
    data = archive.load_data(args.archive)
    draws = archive.load_draws(args.archive)
    family = manifest["family"]
    wanted = _wanted_measures(args.measures, family)
    seed = _effective_seed(args, manifest)
    curve = archive.read_curve_csv(args.curve)
    result = spwombling(
        [tuple(p) for p in curve],
        data,
        draws,
        family,
        stream(seed, STREAM_WOMBLE),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    totals: dict = {}
    averages: dict = {}
    for comp in wanted:
        ci = result.components.index(comp)
        rows = (
            (
                s + 1,
                result.q025[s, ci],
                result.q50[s, ci],
                result.q975[s, ci],
                int(result.sig[s, ci]),
            )
            for s in range(len(result.segments))
        )
        archive.write_csv(out / MEASURE_FILES[comp], WM_HEADER, rows)
        totals[comp] = {
            "q2.5": result.totals["q2.5"][ci],
            "q50": result.totals["q50"][ci],
            "q97.5": result.totals["q97.5"][ci],
            "sig": int(result.totals["sig"][ci]),
        }
        averages[comp] = {
            "q2.5": result.averages["q2.5"][ci],
            "q50": result.averages["q50"][ci],
            "q97.5": result.averages["q97.5"][ci],
        }
    archive.write_json(
        out / "totals.json",
        {
            "arc_length": result.length,
            "kernel": family,
            "seed": seed,
            "draw_count": draws.m,
            "segment_count": len(result.segments),
            "totals": totals,
            "averages": averages,
        },
    )
    archive.write_out_manifest(
        out,
        "womble",
        seed,
        {"kernel": family, "measures": list(wanted)},
        {
            **_archive_input_digests(args.archive),
            "curve": archive.sha256_file(args.curve),
        },
    )
    for comp in wanted:
        t = totals[comp]
        print(
            f"{comp} total: median {t['q50']:.6g}, "
            f"95% CI ({t['q2.5']:.6g}, {t['q97.5']:.6g}), sig {t['sig']:+d}"
        )
    print(f"arc length {result.length:.6g}, {len(result.segments)} segments -> {out}")
    return 0


def cmd_plot(args) -> int:
    manifest = archive.load_manifest(args.archive)
    data = archive.load_data(args.archive)
    draws = archive.load_draws(args.archive)
    family = manifest["family"]
    seed = _effective_seed(args, manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pts = make_grid(args.grid)
    curves = []
    if args.curve is not None:
        curves.append(archive.read_curve_csv(args.curve))
    if args.field == "surface":
        surface = predict_surface(data, draws, args.grid, family)
        archive.write_csv(
            out / "surface.csv",
            ("x", "y", "z"),
            (
                (pts[g, 0], pts[g, 1], v)
                for g, v in enumerate(surface.flat_values())
            ),
        )
        render_heatmap(
            out / "plot.svg",
            surface,
            curves=curves,
            label="posterior mean",
            title="surface",
        )
    else:
        result = sprates(pts, data, draws, family, stream(seed, STREAM_RATES))
        if args.field not in result.components:
            raise SmoothnessError(
                f"component {args.field} is not available for the {family} "
                f"family; choose from {', '.join(result.components)}"
            )
        ci = result.components.index(args.field)
        rows = (
            (
                result.grid[g, 0],
                result.grid[g, 1],
                result.q025[g, ci],
                result.q50[g, ci],
                result.q975[g, ci],
                int(result.sig[g, ci]),
            )
            for g in range(len(result.grid))
        )
        archive.write_csv(out / f"rates_{args.field}.csv", RATES_HEADER, rows)
        values = result.q50[:, ci].reshape(args.grid.ny, args.grid.nx).T
        missing = result.missing.reshape(args.grid.ny, args.grid.nx).T
        surface = Surface(grid=args.grid, values=values, missing=missing)
        render_heatmap(
            out / "plot.svg",
            surface,
            sig_points=(result.grid, result.sig[:, ci]),
            curves=curves,
            label=f"median {args.field}",
            title=args.field,
        )
    config = {
        "kernel": family,
        "field": args.field,
        "grid": [
            args.grid.xmin,
            args.grid.xmax,
            args.grid.ymin,
            args.grid.ymax,
            args.grid.nx,
            args.grid.ny,
        ],
    }
    inputs = _archive_input_digests(args.archive)
    if args.curve is not None:
        inputs["curve"] = archive.sha256_file(args.curve)
    archive.write_out_manifest(out, "plot", seed, config, inputs)
    print(f"wrote plot.svg ({args.field}) -> {out}")
    return 0


def cmd_serve(args) -> int:
    from .server import run_server

    run_server(args.archive, args.host, args.port, ui_dir=args.ui_dir)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (
        ArchiveError,
        McmcDivergenceError,
        SmoothnessError,
        ValueError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
