"""Command-line entry point: ``fcid <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from . import pipeline as P
from .dataset import FcidError, load_manifest
from .evaluation import DEFAULT_C_GRID, DEFAULT_G_GRID, evaluate, threshold_sweep
from .histograms import BIN_SWEEP, HistConfig, class_distributions, write_histdump
from .model import config_from_dict, load_config, load_model, save_model

log = logging.getLogger("fcid")


def _global_flags(parser, suppress=False):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--seed", type=int, default=argparse.SUPPRESS if suppress else 0,
                        help="seed for every random choice (default 0)")
    parser.add_argument("--config", type=Path, default=default, help="JSON config file")
    parser.add_argument("--threads", type=int, default=argparse.SUPPRESS if suppress else 1,
                        help="worker threads for per-image work")
    parser.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False)


def _config(args, method=None):
    method = method or getattr(args, "method", None) or "hist"
    if args.config is not None:
        cfg = load_config(args.config, method, args.seed)
    else:
        cfg = config_from_dict({}, method, args.seed)
    svm = cfg.svm
    for key in ("c", "g", "threshold"):
        val = getattr(args, key, None)
        if val is not None:
            svm = replace(svm, **{key: val})
    cfg = replace(cfg, svm=svm)
    if getattr(args, "bins", None) is not None:
        cfg = replace(cfg, hist=HistConfig.uniform(args.bins, cfg.hist.pooling))
    if getattr(args, "components", None) is not None:
        cfg = replace(cfg, n_components=args.components)
    if getattr(args, "patch_radius", None) is not None:
        cfg = replace(cfg, channel=replace(cfg.channel, patch_radius=args.patch_radius))
    return cfg


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_json(path, data):
    Path(path).write_text(json.dumps(data, indent=1) + "\n")


def _out_dir(path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _grid_values(text, default):
    if text is None:
        return default
    return tuple(float(eval_fraction(t)) for t in text.split(","))


def eval_fraction(token: str) -> float:
    token = token.strip()
    if "/" in token:
        num, den = token.split("/", 1)
        return float(num) / float(den)
    if token.startswith("2^"):
        return 2.0 ** float(token[2:])
    return float(token)


# -- subcommands ------------------------------------------------------------


def cmd_synth(args):
    from .synth import synth_generate

    manifest = synth_generate(args.out_dir, args.n_pairs, args.strength, args.seed, args.size)
    print(f"wrote\t{len(manifest)}\timages\t{Path(args.out_dir) / 'manifest.csv'}")


def cmd_extract(args):
    from .plotting import channels_figure

    cfg = _config(args)
    out = _out_dir(args.out_dir)
    w = csv.writer(sys.stdout, delimiter="\t", lineterminator="\n")
    w.writerow(["path", "width", "height", "grayscale", "mean_h", "mean_s", "mean_dc", "mean_bc"])
    failed = 0
    for path in args.images:
        try:
            img = P.prepare_image(path, cfg)
        except (OSError, ValueError) as exc:
            failed += 1
            print(json.dumps({"error": {"stage": "extract", "path": str(path), "message": str(exc)}}),
                  file=sys.stderr)
            continue
        pl = img.planes
        stem = Path(path).stem
        np.savez_compressed(out / f"{stem}_channels.npz", hue=pl.hue.values, saturation=pl.saturation.values,
                            dark=pl.dark.values, bright=pl.bright.values)
        if args.figures:
            channels_figure(pl, out / f"{stem}_channels.png", title=stem)
        h, wd = pl.shape
        w.writerow([path, wd, h, int(img.gray)] + [f"{float(np.mean(p.values)):.6g}" for p in pl])
    return 1 if failed else 0


def cmd_histdump(args):
    from .plotting import histogram_figure

    cfg = _config(args)
    manifest = load_manifest(args.manifest)
    images = P.load_images(manifest, cfg, args.threads)
    dists = class_distributions([i.planes for i in images], manifest.labels, cfg.hist)
    write_histdump(dists, args.out)
    fig = args.figure or Path(args.out).with_suffix(".png")
    histogram_figure(dists, fig)
    print(f"wrote\t{args.out}\t{fig}")


def cmd_train(args):
    cfg = _config(args, args.method)
    manifest = load_manifest(args.manifest)
    model = P.train(manifest, cfg, args.threads)
    save_model(model, args.model)
    s = model.svm
    print(f"method\t{model.method}\tc\t{s.c!r}\tg\t{s.gamma!r}\tthreshold\t{s.threshold!r}"
          f"\tsupport_vectors\t{len(s.dual_coef)}\tmodel\t{args.model}")


def cmd_detect(args):
    model = load_model(args.model)
    if args.manifest:
        inputs = [str(p) for p in load_manifest(args.manifest, check_files=False).paths]
    else:
        inputs = list(args.images)
    if not inputs:
        raise FcidError("no input images", stage="detect")
    results = P.detect(model, inputs, args.threads)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path", "label", "probability", "error"])
        for r in results:
            w.writerow([r.path, r.label or "", "" if r.probability is None else repr(r.probability), r.error or ""])
    finally:
        if fh is not sys.stdout:
            fh.close()
    errors = sum(not r.ok for r in results)
    if errors:
        log.warning("%d of %d images could not be processed", errors, len(results))
    return 0


def cmd_eval(args):
    from .plotting import roc_figure, threshold_figure

    model = load_model(args.model)
    manifest = load_manifest(args.manifest)
    images = P.load_images(manifest, model.config, args.threads)
    if not args.allow_overlap:
        P.check_disjoint(model, images)
    probs = P.probabilities(model, images, args.threads)
    y = manifest.labels
    report = evaluate(probs, y, model.threshold)
    sweep = threshold_sweep(probs, y)
    out = _out_dir(args.out_dir)

    data = report.to_dict()
    data.update({"method": model.method, "n_images": len(images),
                 "best_sweep_threshold": sweep.best_threshold,
                 "threshold_curve": sweep.rows()})
    _write_json(out / "report.json", data)
    _write_csv(out / "roc.csv", ["fpr", "tpr"], report.roc)
    _write_csv(out / "threshold_curve.csv", ["threshold", "hter"], sweep.rows())
    _write_csv(out / "predictions.csv", ["path", "label", "probability", "predicted"],
               [[str(e.path), e.label, repr(float(p)), "fake" if p >= model.threshold else "natural"]
                for e, p in zip(manifest, probs)])
    roc_figure(report.roc, report.auc, out / "roc.png", label=model.method)
    threshold_figure(sweep, out / "threshold_curve.png", chosen=model.threshold)
    print(f"hter\t{report.hter:.6f}\tfpr\t{report.fpr:.6f}\tfnr\t{report.fnr:.6f}\tauc\t{report.auc:.6f}")


def _images_and_groups(args, cfg):
    manifest = load_manifest(args.manifest)
    images = P.load_images(manifest, cfg, args.threads)
    return manifest, images


def cmd_grid_search(args):
    from .plotting import grid_figure

    cfg = _config(args, args.method)
    manifest, images = _images_and_groups(args, cfg)
    validation = None
    if args.validate:
        vm = load_manifest(args.validate)
        validation = (P.load_images(vm, cfg, args.threads), vm.labels)
    result = P.tune_svm(images, manifest.labels, cfg, manifest.groups, validation,
                        _grid_values(args.c_grid, DEFAULT_C_GRID), _grid_values(args.g_grid, DEFAULT_G_GRID),
                        args.threads)
    out = _out_dir(args.out_dir)
    _write_json(out / "grid.json", {"method": cfg.method, **result.to_dict()})
    _write_csv(out / "grid.csv", ["c", "g", "hter"],
               [[c, g, "" if np.isnan(result.hter[i, j]) else repr(float(result.hter[i, j]))]
                for i, c in enumerate(result.c_grid) for j, g in enumerate(result.g_grid)])
    grid_figure(result, out / "grid.png")
    print(f"best_c\t{result.best_c!r}\tbest_g\t{result.best_g!r}\thter\t{result.best_hter:.6f}")


def cmd_cross_validate(args):
    from .plotting import cv_figure

    cfg = _config(args, args.method)
    manifest, images = _images_and_groups(args, cfg)
    cv = P.cross_validate(images, manifest.labels, cfg, args.folds, manifest.groups, args.threads)
    out = _out_dir(args.out_dir)
    _write_json(out / "cv.json", cv.to_dict())
    _write_csv(out / "cv.csv", ["fold", "hter", "auc", "optimal_threshold"],
               [[i + 1, repr(h), repr(a), repr(t)]
                for i, (h, a, t) in enumerate(zip(cv.fold_hter, cv.fold_auc, cv.fold_thresholds))])
    cv_figure(cv, out / "cv.png")
    print(f"mean_hter\t{cv.mean_hter:.6f}\taveraged_threshold\t{cv.threshold!r}")


def cmd_bin_study(args):
    from .plotting import bins_figure

    cfg = _config(args, "hist")
    manifest, images = _images_and_groups(args, cfg)
    study = P.bin_count_study(images, manifest.labels, cfg, manifest.groups)
    out = _out_dir(args.out_dir)
    _write_json(out / "bins.json", {str(k): v for k, v in study.items()})
    _write_csv(out / "bins.csv", ["bins", "hter"], [[k, repr(v)] for k, v in study.items()])
    bins_figure(study, out / "bins.png")
    for k, v in study.items():
        print(f"{k}\t{v:.6f}")


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fcid", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        _global_flags(p, suppress=True)
        p.set_defaults(func=func)
        return p

    def svm_flags(p):
        p.add_argument("--c", type=eval_fraction, help="SVM cost (e.g. 32 or 1/2)")
        p.add_argument("--g", type=eval_fraction, help="RBF gamma (e.g. 1/2)")
        p.add_argument("--threshold", type=float, help="probability threshold for 'fake'")
        p.add_argument("--bins", type=int, help="histogram bins for every channel")
        p.add_argument("--components", type=int, help="GMM component count")
        p.add_argument("--patch-radius", type=int, help="dark/bright patch radius")

    p = add("synth", cmd_synth, "generate a synthetic natural/fake corpus")
    p.add_argument("--out-dir", required=True, type=Path)
    p.add_argument("--n-pairs", required=True, type=int)
    p.add_argument("--strength", type=float, default=0.4)
    p.add_argument("--size", type=int, default=64)

    p = add("extract", cmd_extract, "compute hue/saturation/dark/bright planes")
    p.add_argument("images", nargs="+")
    p.add_argument("--out-dir", required=True, type=Path)
    p.add_argument("--figures", action="store_true", help="also render a PNG of the four planes")
    p.add_argument("--patch-radius", type=int)

    p = add("histdump", cmd_histdump, "dump class-level channel histograms")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--figure", type=Path)
    p.add_argument("--bins", type=int)
    p.add_argument("--patch-radius", type=int)

    p = add("train", cmd_train, "train a detector")
    p.add_argument("--method", choices=("hist", "fe"), required=True)
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--model", required=True, type=Path)
    svm_flags(p)

    p = add("detect", cmd_detect, "classify images with a trained model")
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("images", nargs="*")
    p.add_argument("--manifest", type=Path)
    p.add_argument("--out", type=Path)

    p = add("eval", cmd_eval, "evaluate a model on a labelled manifest")
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--out-dir", required=True, type=Path)
    p.add_argument("--allow-overlap", action="store_true",
                   help="permit evaluation images that were used for training")

    p = add("grid-search", cmd_grid_search, "tune SVM cost/gamma by grid search")
    p.add_argument("--method", choices=("hist", "fe"), required=True)
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--validate", type=Path, help="validation manifest (default: half split)")
    p.add_argument("--out-dir", required=True, type=Path)
    p.add_argument("--c-grid", help="comma-separated values, e.g. 1/4,1,4")
    p.add_argument("--g-grid")
    svm_flags(p)

    p = add("cross-validate", cmd_cross_validate, "k-fold cross-validation with threshold selection")
    p.add_argument("--method", choices=("hist", "fe"), required=True)
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--out-dir", required=True, type=Path)
    svm_flags(p)

    p = add("bin-study", cmd_bin_study, f"histogram scheme HTER over bin counts {BIN_SWEEP[0]}..{BIN_SWEEP[-2]}, 256")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--out-dir", required=True, type=Path)
    svm_flags(p)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        code = args.func(args)
    except FcidError as exc:
        print(json.dumps({"error": {"stage": exc.stage, "message": exc.args[0]}}), file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(json.dumps({"error": {"stage": args.command, "message": str(exc)}}), file=sys.stderr)
        return 1
    return code or 0


if __name__ == "__main__":
    sys.exit(main())
