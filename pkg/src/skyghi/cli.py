"""Command-line workflow: synth -> train-kmeans -> extract -> train -> evaluate/estimate."""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import models
from .clustering import FitConfig, quantize, render_segmented
from .dataset import LABEL_CODES, NO_LABEL, read_features, read_manifest, write_features
from .errors import SkyError, UsageError
from .features import fit_scaler, transform
from .imaging import load_ppm, store_ppm
from .persistence import load_model, store_model
from .pipeline import load_images, mask_for, pcnp_features, train_palette
from .synthsky import SceneMix, generate_dataset

log = logging.getLogger("skyghi")

LABEL_NAMES = {v: k for k, v in LABEL_CODES.items()}


def _add_mask_args(p):
    p.add_argument("--mask", choices=("circular", "none"), default="circular")
    p.add_argument("--mask-center", type=float, nargs=2, metavar=("X", "Y"))
    p.add_argument("--mask-radius", type=float)


def _mask_fn(args):
    return lambda image: mask_for(image, args.mask, args.mask_center, args.mask_radius)


def _scaler_path(args):
    return args.scaler_out or args.out + ".scaler"


def cmd_synth(args):
    if args.count < 0:
        raise UsageError("--count must be >= 0")
    if not 0.0 <= args.mix <= 1.0:
        raise UsageError("--mix (fraction of clear scenes) must lie in [0, 1]")
    path = generate_dataset(args.count, SceneMix(clear_fraction=args.mix), args.seed, args.out,
                            args.width, args.height)
    print(path)


def cmd_train_kmeans(args):
    records = read_manifest(args.manifest)
    base = os.path.dirname(os.path.abspath(args.manifest))
    config = FitConfig(batch_size=args.batch_size, epochs=args.epochs,
                       reseed_empty=not args.no_reseed)
    palette = train_palette(load_images(base, records), args.k, args.seed, _mask_fn(args),
                            args.pixels_per_image, config)
    store_model(palette, args.out)


def cmd_segment(args):
    palette = load_model(args.model)
    image = load_ppm(args.image)
    seg = quantize(image, _mask_fn(args)(image), palette)
    store_ppm(render_segmented(seg), args.out)


def cmd_extract(args):
    palette = load_model(args.model)
    records = read_manifest(args.manifest)
    base = os.path.dirname(os.path.abspath(args.manifest))
    counts = pcnp_features(load_images(base, records), palette, _mask_fn(args))
    write_features(args.out, counts, [r.ghi for r in records], [r.label for r in records])


def cmd_train_classifier(args):
    table = read_features(args.features)
    keep = table.labels != NO_LABEL
    x, y = table.counts[keep], table.labels[keep]
    if len(x) < 2:
        raise UsageError("features file has fewer than 2 labeled rows")
    train, test = models.train_test_split(len(x), args.split, args.seed)
    scaler = fit_scaler(x[train])
    config = models.ClassifierConfig(input_dim=table.k)
    model = models.train_classifier(transform(scaler, x[train]), y[train], config, args.seed)
    store_model(model, args.out)
    store_model(scaler, _scaler_path(args))
    if len(test):
        acc = models.classifier_metrics(model, transform(scaler, x[test]), y[test])["accuracy"]
        print(f"held-out accuracy: {acc:.4f} ({len(test)} rows)")


def _regression_rows(table):
    keep = np.isfinite(table.ghi) & (table.ghi > 0)
    return table.counts[keep], table.ghi[keep]


def _regressor_config(args, k):
    return models.RegressorConfig(input_dim=k, epochs=args.epochs, batch_size=args.batch_size)


def cmd_train_regressor(args):
    table = read_features(args.features)
    x, y = _regression_rows(table)
    if args.split < 1.0:
        train, test = models.train_test_split(len(x), args.split, args.seed)
    else:
        train, test = np.arange(len(x)), np.arange(0)
    scaler = fit_scaler(x[train])
    model = models.train_regressor(transform(scaler, x[train]), y[train],
                                   _regressor_config(args, table.k), args.seed)
    store_model(model, args.out)
    store_model(scaler, _scaler_path(args))
    if len(test) > 1:
        m = models.regressor_metrics(model, transform(scaler, x[test]), y[test])
        print(f"held-out r2: {m['r2']:.4f}  mae: {m['mae']:.2f} W/m^2 ({len(test)} rows)")


def _inference_rows(args):
    if (args.image is None) == (args.features is None):
        raise UsageError("give exactly one of --image or --features")
    if args.image is not None:
        if args.palette is None:
            raise UsageError("--image needs --palette")
        palette = load_model(args.palette)
        images = [load_ppm(p) for p in args.image]
        return list(args.image), pcnp_features(images, palette, _mask_fn(args))
    table = read_features(args.features)
    return [str(i) for i in range(len(table))], table.counts


def cmd_classify(args):
    model, scaler = load_model(args.model), load_model(args.scaler)
    names, x = _inference_rows(args)
    labels, probs = models.classify_batch(model, transform(scaler, x))
    print("item,label,p_clear,p_cloudy")
    for name, lab, p in zip(names, labels, probs):
        print(f"{name},{LABEL_NAMES[int(lab)]},{float(p[0])!r},{float(p[1])!r}")


def cmd_estimate(args):
    model, scaler = load_model(args.model), load_model(args.scaler)
    names, x = _inference_rows(args)
    ghi = models.estimate_ghi_batch(model, transform(scaler, x))
    print("item,ghi")
    for name, g in zip(names, ghi):
        print(f"{name},{float(g)!r}")


def cmd_evaluate(args):
    table = read_features(args.features)
    if args.task == "classifier":
        keep = table.labels != NO_LABEL
        x, y = table.counts[keep], table.labels[keep]
        config = models.ClassifierConfig(input_dim=table.k)
        train_fn = lambda xs, ys, seed: models.train_classifier(xs, ys, config, seed)  # noqa: E731
        eval_fn = models.classifier_metrics
    else:
        x, y = _regression_rows(table)
        config = _regressor_config(args, table.k)
        train_fn = lambda xs, ys, seed: models.train_regressor(xs, ys, config, seed)  # noqa: E731
        eval_fn = models.regressor_metrics
    report = models.kfold_cv(x, y, train_fn, eval_fn, k=args.folds, seed=args.seed)
    report.to_csv(args.out)
    for m in report.metric_names():
        print(f"{m}: {report.mean(m):.4f} +/- {report.std(m):.4f} over {report.n_folds} folds")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="skyghi", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render synthetic sky scenes and a manifest")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mix", type=float, default=0.5, help="fraction of clear scenes")
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=64)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train-kmeans", help="fit the color palette")
    p.add_argument("--manifest", required=True)
    p.add_argument("--k", type=int, default=256)
    p.add_argument("--batch-size", type=int, default=1024)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--pixels-per-image", type=int, default=512,
                   help="random masked pixels drawn per image (0 = all)")
    p.add_argument("--no-reseed", action="store_true", help="leave starved centers in place")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_mask_args(p)
    p.set_defaults(func=cmd_train_kmeans)

    p = sub.add_parser("segment", help="render an image with its palette colors")
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    _add_mask_args(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("extract", help="PCNP features for every manifest image")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    _add_mask_args(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train-classifier", help="train the clear/cloudy classifier")
    p.add_argument("--features", required=True)
    p.add_argument("--split", type=float, default=0.75)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--scaler-out")
    p.set_defaults(func=cmd_train_classifier)

    p = sub.add_parser("train-regressor", help="train the GHI regressor")
    p.add_argument("--features", required=True)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--split", type=float, default=0.8,
                   help="training fraction; 1 trains on every row")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--scaler-out")
    p.set_defaults(func=cmd_train_regressor)

    for name, func in (("classify", cmd_classify), ("estimate", cmd_estimate)):
        p = sub.add_parser(name, help=f"{name} images or feature rows")
        p.add_argument("--model", required=True)
        p.add_argument("--scaler", required=True)
        p.add_argument("--image", nargs="+")
        p.add_argument("--palette")
        p.add_argument("--features")
        _add_mask_args(p)
        p.set_defaults(func=func)

    p = sub.add_parser("evaluate", help="k-fold cross-validation report")
    p.add_argument("--features", required=True)
    p.add_argument("--task", choices=("classifier", "regressor"), default="regressor")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad usage and 0 after --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"skyghi: error: {exc}", file=sys.stderr)
        return 2
    except SkyError as exc:
        print(f"skyghi: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
