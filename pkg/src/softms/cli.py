"""Batch command line: segment images, harden ownership maps, audit energies.

Exit codes: 0 success/converged, 2 iteration cap reached, 1 error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import imageio
from .driver import FULL, PIECEWISE, RunAborted, RunConfig, run_pc_sms, run_sms
from .energy import ModelParams, harden, pc_energy, total_energy
from .imageio import ImageFormatError
from .simplex import simplex_project, validate_stack
from .solvers import SolverOptions
from .supervision import Supervision, SupervisionError


def _load_field(path: str) -> np.ndarray:
    p = Path(path)
    if p.suffix == ".npy":
        return np.load(p)
    if p.suffix == ".raw":
        data, _ = imageio.read_raw_ownership(p)
        return data.astype(float)
    return imageio.read_image(p)


def _add_model_flags(sp):
    sp.add_argument("--k", type=int, default=2, help="number of patterns")
    sp.add_argument("--lambda", dest="lam", type=float, default=10.0,
                    help="fidelity weight")
    sp.add_argument("--alpha", type=float, default=2.0,
                    help="pattern smoothness weight")
    sp.add_argument("--epsilon", type=float, default=1.5,
                    help="ownership transition bandwidth (pixels)")


def cmd_segment(args) -> int:
    try:
        image = imageio.read_image(args.input)
    except (OSError, ImageFormatError) as exc:
        print(f"error: cannot read input image: {exc}", file=sys.stderr)
        return 1

    supervision = None
    if args.supervision:
        try:
            supervision = Supervision.load(args.supervision)
            supervision.validate(image.shape[-1], image.shape[-2], args.k)
        except (OSError, SupervisionError, json.JSONDecodeError) as exc:
            print(f"error: invalid supervision: {exc}", file=sys.stderr)
            return 1

    config = RunConfig(
        model=args.model,
        params=ModelParams(k=args.k, lam=args.lam, alpha=args.alpha,
                           epsilon=args.epsilon),
        max_outer=args.max_outer,
        energy_tol=args.tol,
        seed=args.seed,
        init=args.init,
        solver=SolverOptions(),
    )
    run = run_sms if args.model == FULL else run_pc_sms
    try:
        result = run(image, config, supervision)
    except RunAborted as exc:
        print(f"error: solver aborted: {exc}", file=sys.stderr)
        return 1

    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    P = result.ownerships
    for i in range(args.k):
        imageio.write_pgm(outdir / f"own_{i + 1}.pgm", P[i])
        if args.raw:
            imageio.write_raw_ownership(outdir / f"own_{i + 1}.raw",
                                        P[i], i + 1)
        if args.npy:
            np.save(outdir / f"own_{i + 1}.npy", P[i])
    if args.npy and result.patterns is not None:
        for i in range(args.k):
            np.save(outdir / f"pat_{i + 1}.npy", result.patterns[i])
    imageio.write_labels_png(outdir / "labels.png", result.labels, args.k)
    (outdir / "trace.csv").write_text(result.trace.to_csv())

    last = result.trace.rows[-1]
    summary = {
        "parameters": {"k": args.k, "lambda": args.lam, "alpha": args.alpha,
                       "epsilon": args.epsilon, "model": args.model,
                       "max_outer": args.max_outer, "tol": args.tol,
                       "seed": args.seed, "init": args.init},
        "iterations": last.iteration,
        "converged": result.trace.converged,
        "energy": last.energy.as_dict(),
        "pattern_residual": result.trace.pattern_residual,
        "ownership_residual": result.trace.ownership_residual,
        "dumb": result.trace.dumb,
    }
    if result.means is not None:
        summary["means"] = np.asarray(result.means).tolist()
    imageio.write_json(outdir / "summary.json", summary)
    return 0 if result.trace.converged else 2


def cmd_harden(args) -> int:
    fields = []
    for path in args.ownerships:
        try:
            fields.append(_load_field(path))
        except (OSError, ImageFormatError) as exc:
            print(f"error: cannot read {path}: {exc}", file=sys.stderr)
            return 1
    shapes = {f.shape for f in fields}
    if len(fields) < 2 or len(shapes) != 1:
        print("error: need >= 2 ownership maps of identical dimensions",
              file=sys.stderr)
        return 1
    P = simplex_project(np.stack(fields), axis=0)
    imageio.write_labels_png(args.output, harden(P), len(fields))
    return 0


def cmd_energy(args) -> int:
    try:
        image = _load_field(args.image)
        P = np.stack([_load_field(p) for p in args.ownerships])
    except (OSError, ImageFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    report = validate_stack(P, tol=args.feas_tol)
    if not report.ok:
        print(f"error: infeasible ownerships, max simplex deviation "
              f"{report.max_sum_deviation:.3e} (tol {args.feas_tol:g})",
              file=sys.stderr)
        return 1
    P = simplex_project(P, axis=0)

    params = ModelParams(k=P.shape[0], lam=args.lam, alpha=args.alpha,
                         epsilon=args.epsilon)
    if args.means is not None:
        m = np.array([float(v) for v in args.means.split(",")])
        bd = pc_energy(P, m, image, params)
    else:
        if not args.patterns or len(args.patterns) != P.shape[0]:
            print("error: need one pattern field per channel (or --means)",
                  file=sys.stderr)
            return 1
        U = np.stack([_load_field(p) for p in args.patterns])
        bd = total_energy(P, U, image, params)
    json.dump(bd.as_dict(), sys.stdout)
    print()
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(max_pixels=args.max_pixels, data_dir=args.data_dir)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="softms",
                                 description="soft K-pattern image segmentation")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("segment", help="segment an image")
    sp.add_argument("--input", required=True, help="PGM/PPM/PNG image")
    sp.add_argument("--outdir", required=True)
    _add_model_flags(sp)
    sp.add_argument("--model", choices=[FULL, PIECEWISE], default=FULL)
    sp.add_argument("--max-outer", type=int, default=100)
    sp.add_argument("--tol", type=float, default=1e-5,
                    help="relative energy-decrease stopping threshold")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--init", choices=["uniform", "quantile"],
                    default="quantile")
    sp.add_argument("--supervision", help="JSON patch file")
    sp.add_argument("--raw", action="store_true",
                    help="also emit float32 raw ownership files")
    sp.add_argument("--npy", action="store_true",
                    help="also emit float64 .npy ownership/pattern arrays")
    sp.set_defaults(func=cmd_segment)

    sp = sub.add_parser("harden", help="argmax-label ownership maps")
    sp.add_argument("ownerships", nargs="+",
                    help="per-channel ownership images (pgm/raw/npy)")
    sp.add_argument("--output", default="labels.png")
    sp.set_defaults(func=cmd_harden)

    sp = sub.add_parser("energy", help="audit the segmentation energy")
    sp.add_argument("--image", required=True)
    sp.add_argument("--ownerships", nargs="+", required=True)
    sp.add_argument("--patterns", nargs="*", default=None)
    sp.add_argument("--means", default=None,
                    help="comma-separated constants (piecewise model)")
    _add_model_flags(sp)
    sp.add_argument("--feas-tol", type=float, default=1e-6,
                    help="allowed simplex deviation of the inputs")
    sp.set_defaults(func=cmd_energy)

    sp = sub.add_parser("serve", help="run the supervision HTTP service")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8000)
    sp.add_argument("--data-dir", default=None)
    sp.add_argument("--max-pixels", type=int, default=4096 * 4096)
    sp.set_defaults(func=cmd_serve)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
