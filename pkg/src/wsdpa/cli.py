"""Command line entry point: ``wsdpa analyze|patterns|reconstruct|similarity``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .analysis import (
    DEFAULT_CHECKPOINTS,
    association_table,
    clip_checkpoints,
    dominant_patterns,
    isolation_scores,
    original_image,
    pattern_images,
    residual_curve,
    similarity_matrix,
)
from .dataio import load_factors, write_csv, write_pgm
from .errors import WsdpaError
from .pipeline import RunConfig, analyze, load_dataset, safe_name, write_run

log = logging.getLogger("wsdpa")


def _csv_list(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def _int_list(text):
    try:
        return [int(t) for t in _csv_list(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wsdpa", description="Wavelet + HO-GSVD pattern association for image datasets.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="run the decomposition and write tables, report and factors")
    a.add_argument("--dataset", action="append", required=True,
                   help="dataset path (repeatable for CIFAR batch files; a directory for --format dir)")
    a.add_argument("--format", choices=("idx", "cifar", "dir"), default="dir")
    a.add_argument("--labels", help="IDX label file (default: inferred from the image file name)")
    a.add_argument("--manifest", help="manifest TSV for --format dir (default: <dataset>/manifest.tsv)")
    a.add_argument("--downscale", type=int, default=1, help="integer box-filter downscale for --format dir")
    a.add_argument("--basis", default=None, help="haar, db1..db5 (default db2)")
    a.add_argument("--levels", type=int, default=1)
    a.add_argument("--tau", type=float, default=1e6, help="condition number cap per class stack")
    a.add_argument("--m", type=int, default=None, help="explicit coefficient count (must satisfy tau)")
    a.add_argument("--pixel-mode", action="store_true", help="skip the wavelet transform (identity basis)")
    a.add_argument("--classes", type=_csv_list, default=None, help="comma-separated class names to keep")
    a.add_argument("--limit-per-class", type=int, default=None)
    a.add_argument("--shuffle", type=float, default=0.0, help="fraction of labels to randomize")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--pairs", type=_csv_list, default=None, help="angular-distance pairs, e.g. cat:dog,ship:truck")
    a.add_argument("--top", type=int, default=10, help="dominant patterns listed per class in report.json")
    a.add_argument("--out", required=True)

    p = sub.add_parser("patterns", help="render the most dominant patterns of a class as PGM")
    p.add_argument("--run", required=True)
    p.add_argument("--class", dest="cls", required=True)
    p.add_argument("--count", type=int, default=4)
    p.add_argument("--threshold", type=float, default=None, help="only patterns with dominance ratio >= this")
    p.add_argument("--out", default=None)

    r = sub.add_parser("reconstruct", help="cumulative rank-1 reconstruction of one image")
    r.add_argument("--run", required=True)
    r.add_argument("--class", dest="cls", required=True)
    r.add_argument("--row", type=int, required=True)
    r.add_argument("--checkpoints", type=_int_list, default=None,
                   help=f"strictly increasing term counts (default {','.join(map(str, DEFAULT_CHECKPOINTS))} clipped to m)")
    r.add_argument("--out", default=None)

    s = sub.add_parser("similarity", help="Gaussian similarity matrix and isolation scores within a class")
    s.add_argument("--run", required=True)
    s.add_argument("--class", dest="cls", required=True)
    s.add_argument("--bandwidth", type=float, default=None)
    s.add_argument("--out", default=None)
    return parser


def cmd_analyze(args) -> Path:
    cfg = RunConfig(
        dataset=args.dataset, format=args.format, labels=args.labels, manifest=args.manifest,
        downscale=args.downscale, basis=args.basis, levels=args.levels, tau=args.tau, m=args.m,
        pixel_mode=args.pixel_mode, shuffle=args.shuffle, seed=args.seed, classes=args.classes,
        limit_per_class=args.limit_per_class, pairs=args.pairs, top=args.top, out=args.out,
    )
    run = analyze(load_dataset(cfg), cfg)
    out = write_run(run)
    print(f"m = {run.dataset.m} of {run.dataset.perm.size} coefficients; results in {out}")
    return out


def _load_run(run_dir):
    path = Path(run_dir) / "factors.bin"
    if not path.exists():
        raise WsdpaError(f"{run_dir}: no factors.bin (run 'wsdpa analyze' first)")
    return load_factors(path)


def cmd_patterns(args) -> list:
    factors, tensor = _load_run(args.run)
    i = factors.class_index(args.cls)
    if args.count < 0:
        raise WsdpaError("--count must be non-negative")
    table = association_table(factors)
    ks = dominant_patterns(table, i, count=args.count, threshold=args.threshold)
    if ks.size == 0:
        return []
    out = Path(args.out or Path(args.run) / "patterns" / safe_name(args.cls))
    out.mkdir(parents=True, exist_ok=True)
    images = pattern_images(factors, tensor, ks)
    written = []
    for rank, (k, img) in enumerate(zip(ks, images)):
        written += write_pgm(img, out / f"pattern_{rank:02d}_k{int(k):05d}.pgm")
        np.save(out / f"pattern_{rank:02d}_k{int(k):05d}.npy", img)
    write_csv({"rank": np.arange(ks.size), "pattern": ks, "ratio": table.ratio[i, ks], "sigma": table.sigma[i, ks]},
              out / "patterns.csv")
    return written


def cmd_reconstruct(args) -> Path:
    factors, tensor = _load_run(args.run)
    i = factors.class_index(args.cls)
    ks = args.checkpoints if args.checkpoints is not None else clip_checkpoints(DEFAULT_CHECKPOINTS, factors.m)
    curve, images = residual_curve(factors, tensor, i, args.row, ks, return_images=True)
    out = Path(args.out or Path(args.run) / "reconstruct" / f"{safe_name(args.cls)}_{args.row}")
    out.mkdir(parents=True, exist_ok=True)
    orig = original_image(tensor, i, args.row)
    write_pgm(orig, out / "original.pgm")
    np.save(out / "original.npy", orig)
    for k, img in zip(curve.ks, images):
        write_pgm(img, out / f"recon_k{int(k):05d}.pgm")
        np.save(out / f"recon_k{int(k):05d}.npy", img)
    norm = float(np.linalg.norm(orig))
    write_csv({"k": curve.ks, "residual": curve.residuals,
               "relative": curve.residuals / norm if norm > 0 else curve.residuals}, out / "residual.csv")
    return out


def cmd_similarity(args) -> Path:
    factors, _ = _load_run(args.run)
    i = factors.class_index(args.cls)
    sim = similarity_matrix(factors, i, args.bandwidth)
    scores = isolation_scores(sim)
    out = Path(args.out or Path(args.run) / "similarity" / safe_name(args.cls))
    out.mkdir(parents=True, exist_ok=True)
    n = sim.W.shape[0]
    write_csv({"row": np.arange(n), **{str(j): sim.W[:, j] for j in range(n)}}, out / "similarity.csv")
    order = np.argsort(scores, kind="stable")
    write_csv({"rank": np.arange(n), "row": order, "score": scores[order]}, out / "isolation.csv")
    print(f"bandwidth = {sim.bandwidth:.6g}; most isolated rows: {order[:5].tolist()}")
    return out


COMMANDS = {"analyze": cmd_analyze, "patterns": cmd_patterns, "reconstruct": cmd_reconstruct,
            "similarity": cmd_similarity}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except WsdpaError as exc:
        print(f"wsdpa {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
