"""``olivine`` command line: one subcommand per pipeline stage.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import dataset as D
from . import model as M
from .augment import augment_sample
from .config import Config, describe_keys, parse_config
from .errors import ConfigError, DataError, NumericError, UsageError
from .evaluate import REFERENCE_RESULTS, confusion, derive_metrics, log_curves, metrics_key_values, render_report
from .imageio import Image, load_depth, load_image, save_image
from .preprocess import normalize_to_tensor, preprocess_image, resize_bilinear, to_gray
from .rng import derive_seed, make_rng
from .train import evaluate_batches, gradient_check_report, train_loop

log = logging.getLogger("olivine")

GRADCHECK_TOLERANCE = 1e-4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog.split()[-1]}: {message}" if " " in self.prog else message)


def worker_count() -> int:
    raw = os.environ.get("OLIVINE_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"OLIVINE_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise UsageError("OLIVINE_THREADS must be >= 0")
    return n


def load_config(path: Optional[str]) -> Config:
    if path is None:
        return Config()
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    try:
        return parse_config(data)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _manifest_records(path) -> List[D.ManifestRecord]:
    return D.resolve(D.load_manifest(path), Path(path).parent)


def _save_manifest_relative(path, records) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    D.save_manifest(path, D.relativize(records, path.parent))


def sidecar_path(ckpt) -> Path:
    return Path(str(ckpt) + ".meta")


def write_sidecar(ckpt, info: Dict[str, object]) -> None:
    lines = [f"{k} = {v}" for k, v in info.items()]
    sidecar_path(ckpt).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_sidecar(ckpt) -> Dict[str, str]:
    path = sidecar_path(ckpt)
    if not path.exists():
        return {}
    out = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        key, sep, value = line.partition("=")
        if sep:
            out[key.strip()] = value.strip()
    return out


def _fit(img: Image, size: int) -> Image:
    if (img.width, img.height) != (size, size):
        img = resize_bilinear(img, size, size)
    return img


def _image_cache(records, size: int, workers: int) -> Dict[str, Image]:
    paths = sorted({r.path for r in records})
    load = lambda p: _fit(load_image(p), size)
    if workers > 0:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            images = list(pool.map(load, paths))
    else:
        images = [load(p) for p in paths]
    return dict(zip(paths, images))


# ---------------------------------------------------------------- subcommands

def cmd_synth(args) -> int:
    records = D.generate_synthetic(args.out, args.per_class, args.size, args.seed, args.with_depth)
    print(f"wrote {len(records)} images in {len(D.SYNTHETIC_CLASSES)} classes to {args.out}")
    return 0


def cmd_ingest(args) -> int:
    records = D.scan_directory(args.root)
    _save_manifest_relative(args.manifest, records)
    names = D.class_names(records)
    print(f"{len(records)} images, {len(names)} classes: {', '.join(names)}")
    return 0


def cmd_split(args) -> int:
    if args.fractions:
        try:
            parts = [float(x) for x in args.fractions.split(",")]
            if len(parts) != 3:
                raise ValueError
            spec = D.SplitSpec(*parts)
        except ValueError:
            raise UsageError(f"--fractions must be three numbers summing to 1, got {args.fractions!r}") from None
    else:
        spec = load_config(args.config).split_spec()
    records = D.stratified_split(_manifest_records(args.manifest), spec, args.seed)
    _save_manifest_relative(args.manifest, records)
    for name, counts in D.split_counts(records).items():
        print(f"{name}: train {counts['train']} val {counts['val']} test {counts['test']}")
    return 0


def cmd_preprocess(args) -> int:
    cfg = load_config(args.config)
    pcfg = cfg.preprocess_config()
    if args.sigma is not None:
        pcfg.sigma = args.sigma
    if args.size is not None:
        pcfg.out_size = args.size
    if args.use_depth:
        pcfg.use_depth = True
    records = _manifest_records(args.manifest)
    out = Path(args.out)

    def run(record: D.ManifestRecord) -> D.ManifestRecord:
        img = load_image(record.path)
        depth = load_depth(D.depth_path_for(record.path)) if pcfg.use_depth else None
        try:
            processed = preprocess_image(img, pcfg, depth)
        except DataError as exc:
            if not args.skip_failed:
                raise DataError(f"{record.path}: {exc}") from exc
            log.warning("%s: %s; resizing without segmentation", record.path, exc)
            processed = _fit(img, pcfg.out_size)
        target = out / record.class_name / (Path(record.path).stem + (".ppm" if processed.channels == 3 else ".pgm"))
        target.parent.mkdir(parents=True, exist_ok=True)
        save_image(target, processed)
        return replace(record, path=str(target))

    workers = worker_count()
    if workers > 0:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            new_records = list(pool.map(run, records))
    else:
        new_records = [run(r) for r in records]
    manifest = out / "manifest.csv"
    _save_manifest_relative(manifest, new_records)
    print(f"preprocessed {len(new_records)} images to {out}; manifest {manifest}")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    tcfg = cfg.train_config()
    records = _manifest_records(args.manifest)
    names = D.class_names(records)
    size, channels = cfg["data.image_size"], cfg["data.in_channels"]
    workers = worker_count()
    used = [r for r in records if r.split in ("train", "val")]
    cache = _image_cache(used, size, workers)
    load = lambda r: cache[r.path]
    model = M.build_preset(args.model, len(names), channels, size)
    if args.init:
        try:
            data = Path(args.init).read_bytes()
        except OSError as exc:
            raise DataError(f"{args.init}: cannot read checkpoint ({exc.strerror})") from None
        _, entries, _ = M.read_checkpoint(data)
        params = M.transfer_params(entries, model, make_rng(tcfg.seed, 1))
    else:
        params = M.init_params(model, make_rng(tcfg.seed, 1))
    if args.freeze:
        model = M.freeze_backbone(model, cfg["model.unfreeze_last_block"])
    hooks = []
    if cfg["aug.enabled"]:
        aug = cfg.augment_config()
        hooks.append(lambda img, rng: augment_sample(img, aug, rng))

    def train_batches(epoch):
        return D.batch_iterator(records, "train", tcfg.batch_size, derive_seed(tcfg.seed, epoch),
                                load, hooks, channels, workers)

    def val_batches():
        return D.batch_iterator(records, "val", tcfg.batch_size, 0, load, (), channels, workers)

    def report(rec):
        print(f"epoch {rec.epoch:3d}  train_loss {rec.train_loss:.4f}  train_acc {rec.train_acc:.4f}  "
              f"val_loss {rec.val_loss:.4f}  val_acc {rec.val_acc:.4f}", flush=True)

    result = train_loop(model, params, train_batches, val_batches, tcfg, on_epoch=report)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(result.checkpoint)
    curves = Path(args.curves) if args.curves else out.with_suffix(".curves.csv")
    curves.write_bytes(log_curves(result.history))
    write_sidecar(out, {
        "model": args.model, "classes": ",".join(names), "image_size": size, "in_channels": channels,
        "sigma": cfg["data.sigma"], "crop_margin": cfg["data.crop_margin"], "best_epoch": result.best_epoch,
    })
    print(f"best epoch {result.best_epoch}; checkpoint {out}; curves {curves}")
    return 0


def _load_model(ckpt_path):
    try:
        data = Path(ckpt_path).read_bytes()
    except OSError as exc:
        raise DataError(f"{ckpt_path}: cannot read checkpoint ({exc.strerror})") from None
    name, entries, _ = M.read_checkpoint(data)
    in_channels, num_classes = M.infer_dims(entries)
    info = read_sidecar(ckpt_path)
    size = int(info.get("image_size", 224))
    model = M.build_preset(name, num_classes, in_channels, size)
    params, meta = M.load_checkpoint(data, model)
    classes = info["classes"].split(",") if info.get("classes") else [str(i) for i in range(num_classes)]
    return model, params, classes, info


def cmd_evaluate(args) -> int:
    model, params, classes, info = _load_model(args.ckpt)
    records = _manifest_records(args.manifest)
    names = D.class_names(records)
    if info.get("classes") and names != classes:
        raise DataError(f"manifest classes {names} differ from checkpoint classes {classes}")
    subset = [r for r in records if r.split == args.split]
    cache = _image_cache(subset, model.input_size, worker_count())
    batches = D.batch_iterator(records, args.split, 64, 0, lambda r: cache[r.path], (), model.in_channels)
    _, _, preds, labels = evaluate_batches(model, params, batches)
    metrics = derive_metrics(confusion(preds, labels, len(classes)), classes)
    title = f"model {model.name}, checkpoint {Path(args.ckpt).name}, split {args.split}"
    text = render_report(metrics, REFERENCE_RESULTS if args.compare_paper else None, title)
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    if args.kv:
        Path(args.kv).write_text(metrics_key_values(metrics), encoding="utf-8")
    return 0


def cmd_predict(args) -> int:
    model, params, classes, info = _load_model(args.ckpt)
    img = load_image(args.image)
    if args.no_preprocess:
        img = _fit(img, model.input_size)
    else:
        from .preprocess import PreprocessConfig
        pcfg = PreprocessConfig(model.input_size, float(info.get("sigma", 1.0)), float(info.get("crop_margin", 0.05)))
        img = preprocess_image(img, pcfg)
    if model.in_channels == 1 and img.channels == 3:
        img = to_gray(img)
    elif model.in_channels == 3 and img.channels == 1:
        img = Image(np.repeat(img.pixels, 3, axis=2))
    probs, _ = M.forward(model, params, normalize_to_tensor(img)[None], "infer")
    best = int(np.argmax(probs[0]))
    print(classes[best])
    print(" ".join(f"{name}={p:.6f}" for name, p in zip(classes, probs[0])))
    return 0


def cmd_gradcheck(args) -> int:
    model = M.build_preset(args.model, 5, 3, args.size)
    params = M.init_params(model, make_rng(args.seed))
    x = make_rng(args.seed, 1).standard_normal((4, 3, args.size, args.size))
    dtype = np.longdouble if args.extended else np.float64
    report = gradient_check_report(model, params, D.Batch(x, [0, 1, 2, 3]), dtype=dtype)
    print(f"max relative error {report.max_error:.3e} over {report.checked} coordinates "
          f"({report.skipped_kinks} skipped at ReLU6 kinks); worst {report.worst}")
    if not report.max_error <= GRADCHECK_TOLERANCE:
        raise NumericError(f"gradient check failed: {report.max_error:.3e} > {GRADCHECK_TOLERANCE:g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="olivine", description=__doc__, epilog=describe_keys(),
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth", help="generate the synthetic five-shape dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--per-class", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=128, help="image side in pixels")
    p.add_argument("--with-depth", action="store_true", help="also write <name>.depth.pgm maps")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="scan root/<class>/<image> into a manifest")
    p.add_argument("--root", required=True)
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("split", help="stratified train/val/test split, in place")
    p.add_argument("--manifest", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fractions", help="train,val,test fractions, default 0.8,0.1,0.1")
    p.add_argument("--config")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("preprocess", help="blur, segment, crop and resize every image")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--use-depth", action="store_true")
    p.add_argument("--sigma", type=float)
    p.add_argument("--size", type=int, help="output side, overrides data.image_size")
    p.add_argument("--config")
    p.add_argument("--skip-failed", action="store_true",
                   help="resize unsegmentable images instead of failing")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train a preset and write the best checkpoint",
                       epilog=describe_keys(), formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", required=True, choices=M.PRESETS)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--curves", help="curve CSV path, default <out stem>.curves.csv")
    p.add_argument("--init", help="pretrained checkpoint to start from")
    p.add_argument("--freeze", action="store_true", help="train only the classifier head")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="confusion matrix and metrics on one split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--split", default="test", choices=D.SPLITS)
    p.add_argument("--compare-paper", action="store_true", help="append published reference rows")
    p.add_argument("--out", help="also write the report here")
    p.add_argument("--kv", help="write metrics as key = value lines here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="classify one image")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--no-preprocess", action="store_true", help="skip segmentation and cropping")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gradcheck", help="finite-difference check of a preset")
    p.add_argument("--model", required=True, choices=M.PRESETS)
    p.add_argument("--size", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--extended", action="store_true", help="evaluate in extended (long double) precision")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required (see --help)")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        return args.func(args)
    except NumericError as exc:
        print(f"olivine: numeric failure: {exc}", file=sys.stderr)
        return 3
    except DataError as exc:
        print(f"olivine: data error: {exc}", file=sys.stderr)
        return 2
    except UsageError as exc:
        print(f"olivine: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"olivine: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
