"""Command-line front end: gen-sdf, mesh, eval, fit-din.

Every run writes ``<output>.manifest.json`` with the resolved configuration.
Exit codes: 0 success, 2 usage error, 3 data/format error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import os
import sys
from dataclasses import asdict

import numpy as np

from . import __version__
from .errors import DivergenceError, EmptyMeshError, FormatError, ParameterError, PreconditionError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

SHAPES = ("sphere", "box", "torus", "plane")
METHODS = ("mc", "dc", "midpoint", "sdc")


class UsageError(Exception):
    pass


def _shape(name):
    from .grid import Box, Plane, Sphere, Torus

    if name == "sphere":
        return Sphere()
    if name == "box":
        return Box(half_extents=(0.45, 0.35, 0.3))
    if name == "torus":
        return Torus()
    if name == "plane":
        n = np.array([1.0, 2.0, 2.0]) / 3.0
        return Plane(tuple(n), 0.05)
    raise UsageError(f"unknown shape {name!r}; choose from {', '.join(SHAPES)}")


def _require_file(path, what):
    if not os.path.isfile(path):
        raise UsageError(f"{what} not found: {path}")


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, (str, int, float, bool)) or x is None:
        return x
    return str(x)


def _write_manifest(out, args, outputs, extra=None):
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    man = {
        "tool": "sdcmesh",
        "version": __version__,
        "command": args.command,
        "config": _jsonable(cfg),
        "outputs": [os.path.basename(p) for p in outputs],
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    if extra:
        man.update(_jsonable(extra))
    with open(out + ".manifest.json", "w") as fh:
        json.dump(man, fh, indent=2, sort_keys=True)
        fh.write("\n")


def normalize_unit_sphere(mesh):
    """Isotropic scale about the bounding-box center so the farthest vertex has radius 1."""
    from .geom.mesh import TriMesh

    v = mesh.vertices
    c = 0.5 * (v.min(axis=0) + v.max(axis=0))
    r = float(np.max(np.linalg.norm(v - c, axis=1)))
    if not r > 0:
        raise FormatError("mesh has zero extent")
    return TriMesh((v - c) / r, mesh.triangles)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_gen_sdf(args):
    from .geom.mesh import read_obj
    from .grid import add_noise, sample_analytic, sdf_from_mesh, write_grid

    if (args.shape is None) == (args.mesh is None):
        raise UsageError("give exactly one of --shape or --mesh")
    lo, hi = args.bounds
    if not hi > lo:
        raise UsageError("--bounds needs lo < hi")
    n = args.dims
    spacing = (hi - lo) / (n - 1)
    origin = (lo, lo, lo)
    extra = {}
    if args.mesh is not None:
        _require_file(args.mesh, "mesh")
        mesh = normalize_unit_sphere(read_obj(args.mesh))
        grid = sdf_from_mesh(mesh, (n, n, n), origin, spacing)
        extra["normalization"] = "isotropic, bounding-box center, unit sphere"
        extra["signed"] = grid.signed
    else:
        grid = sample_analytic(_shape(args.shape), (n, n, n), origin, spacing)
    if args.noise_seed is not None:
        grid = add_noise(grid, args.noise_seed)
    write_grid(grid, args.output)
    outputs = [args.output]
    if args.plot:
        from .plotting import plot_grid_slice

        png = args.output + ".slice.png"
        plot_grid_slice(grid, png)
        outputs.append(png)
    _write_manifest(args.output, args, outputs, extra)


def _write_sdc_trace(trace, stem):
    path = stem + ".trace.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "l_d", "l_n", "l_mesh", "best"])
        for row in trace.as_array():
            w.writerow([int(row[0])] + [repr(float(x)) for x in row[1:]])
    return path


def cmd_mesh(args):
    from .contour import build_faces, midpoint_vertices, qef_vertices, triangulate
    from .field import estimate_gradients
    from .geom.mesh import write_obj
    from .grid import read_grid
    from .mc import marching_cubes
    from .sdc import SdcConfig, optimize_vertices

    _require_file(args.input, "input grid")
    grid = read_grid(args.input)
    outputs = [args.output]
    extra = {}
    if args.method == "mc":
        mesh = marching_cubes(grid)
        if mesh.n_faces == 0:
            raise EmptyMeshError("grid has no zero crossing")
    else:
        dual = build_faces(grid)
        if dual.n_quads == 0:
            raise EmptyMeshError("grid has no zero crossing")
        if args.method == "midpoint":
            dual = midpoint_vertices(dual, grid)
        elif args.method == "dc":
            dual = qef_vertices(dual, grid, estimate_gradients(grid), clamp=args.clamp)
        else:
            cfg = SdcConfig(alpha1=args.alpha1, max_iters=args.iters, tau=args.tau, lr=args.lr)
            dual, trace = optimize_vertices(grid, cfg)
            stem = os.path.splitext(args.output)[0]
            outputs.append(_write_sdc_trace(trace, stem))
            if args.plot:
                from .plotting import plot_sdc_trace

                png = stem + ".trace.png"
                plot_sdc_trace(trace, png)
                outputs.append(png)
            extra["sdc_config"] = asdict(cfg)
            extra["final_loss"] = trace.best[-1] if trace.best else None
            extra["converged"] = trace.converged
        mesh = triangulate(dual)
    write_obj(mesh, args.output)
    extra["faces"] = mesh.n_faces
    extra["vertices"] = len(mesh.vertices)
    _write_manifest(args.output, args, outputs, extra)


def cmd_eval(args):
    from .geom.mesh import read_obj
    from .grid import read_grid
    from .metrics import evaluate

    _require_file(args.pred, "predicted mesh")
    _require_file(args.gt, "reference mesh")
    gt_grid = None
    if args.gt_sdf is not None:
        _require_file(args.gt_sdf, "reference grid")
        gt_grid = read_grid(args.gt_sdf)
    rep = evaluate(read_obj(args.pred), read_obj(args.gt), n_samples=args.samples, seed=args.seed,
                   gt_grid=gt_grid, tau=args.tau)
    stem = args.output
    with open(stem + ".txt", "w") as fh:
        fh.write(rep.to_text())
    rep.write_csv(stem + ".csv")
    outputs = [stem + ".txt", stem + ".csv"]
    if args.plot:
        from .plotting import plot_metrics

        plot_metrics(rep.rows(), stem + ".png")
        outputs.append(stem + ".png")
    _write_manifest(stem, args, outputs)
    sys.stdout.write(rep.to_text())


def _write_din_trace(trace, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "data", "latent", "sdr", "total"])
        for row in trace.as_array():
            w.writerow([int(row[0])] + [repr(float(x)) for x in row[1:]])


def _fit_one(args, samples, use_sdr, stem, names):
    from .din import DinTrainConfig, GridSpec, reconstruct, save_checkpoint, self_consistency, train_din
    from .geom.mesh import write_obj
    from .sdc import SdcConfig

    cfg = DinTrainConfig(steps=args.steps, lr=args.lr, latent_lr=args.lr, alpha2=args.alpha2,
                         refresh_every=args.refresh_every, sdr_start=args.sdr_start,
                         grid=GridSpec.cube(args.reg_dims), optimizer=args.optimizer,
                         sdc=SdcConfig(max_iters=args.sdc_iters, polish_iters=5), seed=args.seed)
    outputs = []
    try:
        net, lat, trace = train_din(samples, cfg, use_sdr=use_sdr)
    except DivergenceError as e:
        if e.trace is not None:
            _write_din_trace(e.trace, stem + ".trace.csv")
        raise
    save_checkpoint(stem, net, lat)
    _write_din_trace(trace, stem + ".trace.csv")
    outputs += [stem, stem + ".trace.csv"]
    lsd = {}
    for j, name in enumerate(names):
        try:
            lsd[name] = self_consistency(net, lat[j], cfg.grid, cfg.sdc, cfg.tau)
        except EmptyMeshError:
            lsd[name] = None
    if args.reconstruct:
        for j, name in enumerate(names):
            mesh = reconstruct(net, lat[j], GridSpec.cube(args.dims))
            path = f"{stem}.{name}.obj"
            write_obj(mesh, path)
            outputs.append(path)
    return trace, lsd, outputs, cfg


def cmd_fit_din(args):
    from .din import sample_sdf

    names = [s.strip() for s in args.shapes.split(",") if s.strip()]
    if not names:
        raise UsageError("--shapes is empty")
    samples = [sample_sdf(_shape(name), args.samples, seed=args.seed + j) for j, name in enumerate(names)]
    runs = [("base", False), ("sdr", True)] if args.paired else [(None, args.sdr)]
    traces, lsds, outputs = {}, {}, []
    cfg = None
    for label, use_sdr in runs:
        stem = args.output if label is None else f"{args.output}.{label}"
        trace, lsd, outs, cfg = _fit_one(args, samples, use_sdr, stem, names)
        key = label or ("sdr" if use_sdr else "base")
        traces[key], lsds[key] = trace, lsd
        outputs += outs
    csv_path = args.output + ".lsd.csv"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run", "shape", "lsd_p"])
        for key, lsd in lsds.items():
            for name in names:
                w.writerow([key, name, "" if lsd[name] is None else repr(lsd[name])])
    outputs.append(csv_path)
    if args.plot:
        from .plotting import plot_din_traces, plot_lsd_comparison

        plot_din_traces(traces, args.output + ".trace.png")
        outputs.append(args.output + ".trace.png")
        vals = {k: [np.nan if v[n] is None else v[n] for n in names] for k, v in lsds.items()}
        plot_lsd_comparison(names, vals, args.output + ".lsd.png")
        outputs.append(args.output + ".lsd.png")
    _write_manifest(args.output, args, outputs,
                    {"train_config": asdict(cfg), "lsd_p": lsds})
    for key, lsd in lsds.items():
        for name in names:
            sys.stdout.write(f"{key} {name} lsd_p = {lsd[name]}\n")


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sdcmesh", description="Mesh extraction from signed-distance grids.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-sdf", help="sample an analytic shape or a mesh on a grid")
    g.add_argument("--shape", choices=SHAPES)
    g.add_argument("--mesh", help="OBJ file, normalized to the unit sphere before sampling")
    g.add_argument("--dims", type=int, default=64)
    g.add_argument("--bounds", type=float, nargs=2, default=(-1.0, 1.0), metavar=("LO", "HI"))
    g.add_argument("--noise-seed", type=int, default=None, help="add N(0, (h/3)^2) noise")
    g.add_argument("--plot", action="store_true", help="also write a slice PNG")
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_gen_sdf)

    m = sub.add_parser("mesh", help="extract a mesh from a grid file")
    m.add_argument("--method", choices=METHODS, default="sdc")
    m.add_argument("--in", dest="input", required=True)
    m.add_argument("--alpha1", type=float, default=0.01)
    m.add_argument("--iters", type=int, default=500)
    m.add_argument("--tau", type=float, default=2.0)
    m.add_argument("--lr", type=float, default=1e-2)
    m.add_argument("--clamp", action="store_true", help="clamp DC vertices to their cells")
    m.add_argument("--plot", action="store_true", help="also write a loss-trace PNG (sdc)")
    m.add_argument("-o", "--output", required=True)
    m.set_defaults(func=cmd_mesh)

    e = sub.add_parser("eval", help="compare a predicted mesh to a reference")
    e.add_argument("--pred", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--gt-sdf", default=None, help="reference grid, enables IoU and LSD-P")
    e.add_argument("--samples", type=int, default=100000)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--tau", type=float, default=2.0)
    e.add_argument("--plot", action="store_true", help="also write a bar-chart PNG")
    e.add_argument("-o", "--output", required=True, help="report stem (.txt, .csv, .png)")
    e.set_defaults(func=cmd_eval)

    d = sub.add_parser("fit-din", help="train the toy implicit network")
    d.add_argument("--shapes", default="sphere,box")
    d.add_argument("--steps", type=int, default=2000)
    d.add_argument("--samples", type=int, default=512, help="SDF samples per shape")
    d.add_argument("--sdr", action="store_true", help="enable the mesh-consistency regularizer")
    d.add_argument("--paired", action="store_true", help="run with and without SDR")
    d.add_argument("--alpha2", type=float, default=0.01)
    d.add_argument("--optimizer", choices=("adam", "lm"), default="adam")
    d.add_argument("--lr", type=float, default=1e-3)
    d.add_argument("--refresh-every", type=int, default=25)
    d.add_argument("--sdr-start", type=int, default=0)
    d.add_argument("--reg-dims", type=int, default=32)
    d.add_argument("--sdc-iters", type=int, default=100)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--reconstruct", action="store_true")
    d.add_argument("--dims", type=int, default=64, help="reconstruction grid size")
    d.add_argument("--plot", action="store_true")
    d.add_argument("-o", "--output", required=True, help="checkpoint path")
    d.set_defaults(func=cmd_fit_din)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK
    try:
        args.func(args)
    except (UsageError, ParameterError) as e:
        sys.stderr.write(f"sdcmesh {args.command}: usage error: {e}\n")
        return EXIT_USAGE
    except (FormatError, EmptyMeshError, PreconditionError, OSError) as e:
        sys.stderr.write(f"sdcmesh {args.command}: {e}\n")
        return EXIT_DATA
    except DivergenceError as e:
        sys.stderr.write(f"sdcmesh {args.command}: numerical failure: {e}\n")
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
