"""Command-line front end: ``segres corrupt|segment|evaluate|experiment``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from segres import kernels
from segres.config import degrade_spec_from_ini, degrade_spec_to_ini, load_experiment
from segres.core import ImageField, LabelMap, ModelParams, ObservationMask, SegresError
from segres.corrupt import BlurSpec, DegradeSpec, degrade, make_blur_kernel, make_scene
from segres.driver import run
from segres.imageio import (
    ImageFormatError,
    read_image,
    read_labels,
    read_mask,
    write_bytes,
    write_image,
    write_labels,
    write_mask,
)
from segres.metrics import segmentation_accuracy

log = logging.getLogger("segres")

EXPERIMENT_COLUMNS = [
    "cell", "scene", "size", "seed", "noise", "blur", "drop", "baseline",
    "phases", "mu", "lambda", "sa", "outer_iters", "status", "error",
]
PREVIEW_PALETTE = np.array(
    [[0, 0, 0], [230, 25, 75], [60, 180, 75], [255, 225, 25], [0, 130, 200],
     [245, 130, 48], [145, 30, 180], [70, 240, 240], [240, 50, 230], [255, 255, 255]],
    dtype=np.uint8,
)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("SEGRES_THREADS", "1")))
    except ValueError:
        return 1


def _spec_from_args(args) -> DegradeSpec:
    if args.spec:
        return degrade_spec_from_ini(Path(args.spec).read_text())
    return DegradeSpec(
        noise_variance=args.noise,
        blur=BlurSpec.parse(args.blur),
        drop_fraction=args.drop,
        seed=args.seed,
    )


def cmd_corrupt(args) -> int:
    spec = _spec_from_args(args)
    img = read_image(args.input)
    out, mask, _ = degrade(img, spec)
    output = Path(args.output)
    mask_path = Path(args.mask_output) if args.mask_output else output.with_name(output.stem + "_mask.pgm")
    write_image(output, out)
    write_mask(mask_path, mask)
    sidecar = Path(str(output) + ".ini")
    sidecar.write_text(degrade_spec_to_ini(spec, {"input": args.input, "mask": mask_path}))
    log.info("wrote %s, %s, %s", output, mask_path, sidecar)
    return 0


def _params_from_args(args) -> ModelParams:
    return ModelParams(
        mu=args.mu,
        lam=args.lam,
        phases=args.phases,
        sigma=args.sigma,
        epsilon=args.epsilon,
        kernel=make_blur_kernel(BlurSpec.parse(args.blur)),
        max_outer=args.max_outer,
        max_inner=args.max_inner,
        inner_tol=args.inner_tol,
        baseline_mode=args.baseline,
        seed=args.seed,
    )


def _image_ext(img: ImageField) -> str:
    return ".pgm" if img.channels == 1 else ".ppm"


def cmd_segment(args) -> int:
    f = read_image(args.input)
    mask = read_mask(args.mask) if args.mask else ObservationMask.full(f.shape)
    params = _params_from_args(args)
    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    res = run(f, mask, params)
    elapsed = time.perf_counter() - t0

    write_labels(outdir / "labels.pgm", res.labels)
    write_bytes(outdir / "labels_preview.png", PREVIEW_PALETTE[res.labels.labels % len(PREVIEW_PALETTE)])
    write_image(outdir / ("restored" + _image_ext(f)), res.g)
    painted = ImageField(res.c.values[res.labels.labels].transpose(2, 0, 1))
    write_image(outdir / ("phases" + _image_ext(f)), painted)
    with open(outdir / "trace.csv", "w", newline="") as fh:
        res.trace.to_csv(fh)
    manifest = {
        "input": str(args.input),
        "mask": str(args.mask) if args.mask else None,
        "params": {
            "phases": params.phases, "mu": params.mu, "lambda": params.lam,
            "sigma": params.sigma, "epsilon": params.epsilon, "blur": args.blur,
            "max_outer": params.max_outer, "max_inner": params.max_inner,
            "inner_tol": params.inner_tol, "seed": params.seed,
            "fidelity": params.fidelity.value,
        },
        "baseline_mode": params.baseline_mode,
        "g_step": "skipped" if params.baseline_mode else "solved",
        "status": res.status.value,
        "outer_iterations": len(res.trace.rows) - 1,
        "rejected_u_steps": res.trace.rejected_u_steps,
        "cg_unconverged_g_steps": res.trace.cg_unconverged,
        "final_energy": res.trace.rows[-1].energy.total,
        "codebook": res.c.values.tolist(),
        "seconds": round(elapsed, 3),
        "kernel_backend": kernels.BACKEND,
    }
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"{res.status.value} after {manifest['outer_iterations']} iterations; outputs in {outdir}", file=sys.stderr)
    return 0


def cmd_evaluate(args) -> int:
    pred = read_labels(args.pred)
    truth = read_labels(args.truth)
    if pred.shape != truth.shape:
        print(f"error: label maps differ in size: {pred.shape} vs {truth.shape}", file=sys.stderr)
        return 1
    phases = max(pred.phases, truth.phases)
    sa = segmentation_accuracy(pred, truth, phases)
    print(f"SA = {sa:.2f}")
    report = args.report or str(args.pred) + ".eval.json"
    Path(report).write_text(
        json.dumps({"pred": str(args.pred), "truth": str(args.truth), "phases": phases, "sa": round(sa, 6)}, indent=2)
        + "\n"
    )
    return 0


def run_cell(cell, size: int, outdir=None) -> dict:
    """Generate, corrupt, segment and score one experiment cell."""
    row = {
        "cell": cell.name, "scene": cell.scene, "size": size, "seed": cell.seed,
        "noise": cell.degrade.noise_variance, "blur": str(cell.degrade.blur),
        "drop": cell.degrade.drop_fraction, "baseline": cell.baseline,
        "phases": "", "mu": cell.mu, "lambda": cell.lam, "sa": "",
        "outer_iters": "", "status": "", "error": "",
    }
    t0 = time.perf_counter()
    try:
        img, truth, _ = make_scene(cell.scene, size, cell.seed)
        f, mask, kernel = degrade(img, cell.degrade)
        phases = cell.phases or truth.phases
        params = ModelParams(
            mu=cell.mu, lam=cell.lam, phases=phases, sigma=cell.sigma,
            epsilon=cell.epsilon, kernel=kernel, max_outer=cell.max_outer,
            max_inner=cell.max_inner, inner_tol=cell.inner_tol,
            baseline_mode=cell.baseline, seed=cell.seed,
        )
        res = run(f, mask, params)
        row.update(
            phases=phases,
            sa=f"{segmentation_accuracy(res.labels, truth, max(phases, truth.phases)):.4f}",
            outer_iters=len(res.trace.rows) - 1,
            status=res.status.value,
        )
        if outdir is not None:
            d = Path(outdir) / cell.name
            d.mkdir(parents=True, exist_ok=True)
            write_labels(d / "labels.pgm", res.labels)
            write_labels(d / "truth.pgm", truth)
            with open(d / "trace.csv", "w", newline="") as fh:
                res.trace.to_csv(fh)
    except Exception as exc:  # recorded in the table; the matrix keeps going
        log.exception("cell %s failed", cell.name)
        row.update(status="error", error=f"{type(exc).__name__}: {exc}")
    row["_seconds"] = time.perf_counter() - t0
    return row


def cmd_experiment(args) -> int:
    exp = load_experiment(args.config)
    output = Path(args.output)
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        rows = list(pool.map(lambda c: run_cell(c, exp.size, args.cell_dir), exp.cells))
    with open(output, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=EXPERIMENT_COLUMNS, extrasaction="ignore", lineterminator="\n")
        wr.writeheader()
        wr.writerows(rows)
    # wall times vary run to run, so they go to a separate file
    with open(str(output) + ".timings.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["cell", "seconds"])
        for r in rows:
            wr.writerow([r["cell"], f"{r['_seconds']:.3f}"])
    for r in rows:
        print(f"{r['cell']:24s} SA={r['sa'] or '-':>9s} {r['status']} ({r['_seconds']:.1f}s)", file=sys.stderr)
    return 1 if any(r["status"] == "error" for r in rows) else 0


def _add_model_args(p):
    p.add_argument("--phases", "-K", type=int, required=True, help="number of phases K")
    p.add_argument("--mu", type=float, default=1.0, help="restoration fidelity weight")
    p.add_argument("--lambda", dest="lam", type=float, default=5.0, help="segmentation fidelity weight")
    p.add_argument("--sigma", type=float, default=2.0, help="ADMM penalty")
    p.add_argument("--epsilon", type=float, default=1e-4, help="outer stopping tolerance on the codebook")
    p.add_argument("--max-outer", type=int, default=200)
    p.add_argument("--max-inner", type=int, default=100)
    p.add_argument("--inner-tol", type=float, default=1e-3)
    p.add_argument("--baseline", action="store_true", help="pin g to the input (no restoration step)")
    p.add_argument("--blur", default="none", help="model operator: none | gaussian:SIZE:STD | motion:LEN:ANGLE")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="segres", description=__doc__)
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("corrupt", help="blur, add noise to and drop pixels from an image")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--mask-output", help="mask image path (default: <output>_mask.pgm)")
    p.add_argument("--noise", type=float, default=0.0, help="Gaussian noise variance")
    p.add_argument("--blur", default="none")
    p.add_argument("--drop", type=float, default=0.0, help="fraction of pixels to remove")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--spec", help="re-run from a sidecar .ini written by a previous call")
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("segment", help="restore and segment an image")
    p.add_argument("--input", required=True)
    p.add_argument("--mask", help="mask image: 0 missing, 255 observed")
    p.add_argument("--output", required=True, help="output directory")
    _add_model_args(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("evaluate", help="segmentation accuracy of a label map")
    p.add_argument("pred")
    p.add_argument("truth")
    p.add_argument("--report", help="JSON report path (default: <pred>.eval.json)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("experiment", help="run a scene x degradation x parameter matrix")
    p.add_argument("config")
    p.add_argument("--output", default="results.csv")
    p.add_argument("--cell-dir", help="also write per-cell labels and traces here")
    p.set_defaults(func=cmd_experiment)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (SegresError, ImageFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
