"""Command-line surface: sample, select, train, predict, evaluate, synth.

Configuration flows defaults -> config file (--config, flat key = value)
-> explicit CLI flags. One run seed feeds every random substream.
"""

import argparse
import csv
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import formats, sampling, selector, synth
from .errors import InputError, JoinError, PatchSelError
from .metrics import plcc_with_logistic, srcc
from .mlp import TrainConfig, init_model, mlp_forward, mlp_train, pool_scores
from .similarity import DistanceMetric, similarity_of_embeddings, spectral_target


@dataclass(frozen=True)
class RunConfig:
    """Full knob set for a selection/training run."""

    metric: str = "EUC"
    mah_mode: str = "diagonal-covariance"
    mah_regularization: float | None = None
    bandwidth: str | float = "median"
    alpha: float = 1.0
    beta: float = 1.0
    h: int = 8
    rel_tol: float = 1e-6
    max_iters: int = 100
    r_update_mode: str = selector.EXACT_PROXIMAL
    rate: float | None = 0.5
    k: int | None = None
    alpha0: float = 10.0
    fov: float = sampling.DEFAULT_SP_FOV
    learning_rate: float = 1e-4
    batch_size: int = 32
    epochs: int = 50
    optimizer: str = "adam"
    seed: int = 0

    def __post_init__(self):
        if (self.rate is None) == (self.k is None):
            raise InputError("exactly one of rate / k must be set")
        if self.rate is not None and not 0.0 < self.rate <= 1.0:
            raise InputError("rate must be in (0, 1]")

    def distance_metric(self):
        return DistanceMetric(
            kind=self.metric,
            mah_regularization=self.mah_regularization,
            mah_mode=self.mah_mode,
        )

    def selector_params(self):
        return selector.SelectorParams(
            alpha=self.alpha,
            beta=self.beta,
            h=self.h,
            max_iters=self.max_iters,
            rel_tol=self.rel_tol,
            r_update_mode=self.r_update_mode,
        )


_CONFIG_PARSERS = {
    "metric": str,
    "mah_mode": str,
    "mah_regularization": float,
    "bandwidth": lambda s: s if s == "median" else float(s),
    "alpha": float,
    "beta": float,
    "h": int,
    "rel_tol": float,
    "max_iters": int,
    "r_update_mode": str,
    "rate": float,
    "k": int,
    "alpha0": float,
    "fov": float,
    "learning_rate": float,
    "batch_size": int,
    "epochs": int,
    "optimizer": str,
    "seed": int,
}


def load_run_config(config_path=None, **overrides):
    """Build a RunConfig from defaults, an optional file, and overrides."""
    values = {}
    if config_path:
        raw = formats.read_config(config_path)
        for key, text in raw.items():
            if key not in _CONFIG_PARSERS:
                raise InputError(f"unknown config key {key!r}")
            values[key] = _CONFIG_PARSERS[key](text)
    for key, val in overrides.items():
        if val is not None:
            values[key] = val
    # rate and k are mutually exclusive: an explicit one evicts the other.
    if "k" in values and "rate" not in values:
        values["rate"] = None
    if "rate" in values and values["rate"] is not None:
        values["k"] = None
    return RunConfig(**values)


def _image_id_for(path):
    stem = os.path.basename(path)
    for suffix in (".selected.esf", ".esf", ".csv"):
        if stem.endswith(suffix):
            return stem[: -len(suffix)]
    return os.path.splitext(stem)[0]


def _select_one(image_id, path, cfg):
    """Fit one image; returns an ordered result dict plus kept rows."""
    e, ids = formats.read_embeddings_any(path)
    n = e.shape[0]
    if cfg.h > n:
        raise InputError(f"h = {cfg.h} exceeds patch count n = {n}")
    sim = similarity_of_embeddings(e, cfg.distance_metric(), cfg.bandwidth)
    target = spectral_target(sim, cfg.h)
    state = selector.fit(e, cfg.selector_params(), target)
    scores = selector.irrelevance_scores(state)
    k = cfg.k if cfg.k is not None else max(1, int(round(cfg.rate * n)))
    result = selector.select_top_k(scores, min(k, n))
    kept_sorted = np.sort(result.kept)
    record = {
        "image_id": image_id,
        "n": int(n),
        "k": int(result.k),
        "kept": [int(i) for i in kept_sorted],
        "scores": [float(s) for s in scores],
        "iterations": int(state.iterations_run),
        "converged": bool(state.converged),
        "objective_history": [float(f) for f in state.objective_history],
    }
    kept_ids = None
    if ids is not None:
        kept_ids = ids[kept_sorted]
    return record, e[kept_sorted], kept_ids if kept_ids is not None else kept_sorted


def _config_echo(cfg):
    return {
        "metric": cfg.metric,
        "mah_mode": cfg.mah_mode,
        "mah_regularization": cfg.mah_regularization,
        "bandwidth": cfg.bandwidth,
        "alpha": cfg.alpha,
        "beta": cfg.beta,
        "h": cfg.h,
        "rel_tol": cfg.rel_tol,
        "max_iters": cfg.max_iters,
        "r_update_mode": cfg.r_update_mode,
        "rate": cfg.rate,
        "k": cfg.k,
        "seed": cfg.seed,
    }


def cmd_select(inputs, cfg, out_dir, jobs=1):
    """Run selection over a set of embedding files; write report + filtered ESF.

    Per-image failures are recorded in the report and do not abort the
    run. Returns the report dict (also written to out_dir/report.json).
    Wall time goes to stderr so the report stays byte-identical across
    runs and thread counts.
    """
    os.makedirs(out_dir, exist_ok=True)
    started = time.monotonic()

    def work(item):
        image_id, path = item
        try:
            return _select_one(image_id, path, cfg)
        except PatchSelError as exc:
            return {"image_id": image_id, "error": str(exc)}, None, None

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(work, inputs))
    else:
        outcomes = [work(item) for item in inputs]

    images = []
    for (record, kept_rows, kept_ids) in outcomes:
        images.append(record)
        if kept_rows is not None:
            out_path = os.path.join(out_dir, f"{record['image_id']}.selected.esf")
            formats.write_esf(out_path, kept_rows, dtype="f64",
                              patch_ids=np.asarray(kept_ids, dtype=np.uint32))
    report = {"params": _config_echo(cfg), "images": images}
    formats.write_json(os.path.join(out_dir, "report.json"), report)
    print(f"select: {len(images)} image(s) in "
          f"{time.monotonic() - started:.2f}s", file=sys.stderr)
    return report


def _gather_inputs(paths, manifest):
    if manifest:
        return formats.read_manifest(manifest)
    return [(_image_id_for(p), p) for p in paths]


def _load_training_table(inputs, mos_path):
    """Stack embeddings with per-patch parent-image MOS labels."""
    mos = formats.read_mos_csv(mos_path)
    missing = [image_id for image_id, _ in inputs if image_id not in mos]
    if missing:
        raise JoinError(
            f"no MOS entry for image id(s): {', '.join(missing)}", ids=missing
        )
    blocks, labels = [], []
    for image_id, path in inputs:
        e, _ = formats.read_embeddings_any(path)
        blocks.append(e)
        labels.append(np.full(e.shape[0], mos[image_id]))
    return np.vstack(blocks), np.concatenate(labels)


def cmd_train(inputs, mos_path, cfg, out_path):
    x, y = _load_training_table(inputs, mos_path)
    model = init_model(x.shape[1], seed=cfg.seed)
    train_cfg = TrainConfig(
        learning_rate=cfg.learning_rate,
        batch_size=cfg.batch_size,
        epochs=cfg.epochs,
        optimizer=cfg.optimizer,
        seed=cfg.seed,
    )
    losses = mlp_train(model, x, y, train_cfg)
    formats.write_checkpoint(out_path, model)
    print(f"train: {len(losses)} steps, final minibatch loss "
          f"{losses[-1]:.6g}", file=sys.stderr)
    return model, losses


def cmd_predict(inputs, checkpoint, out_patches, out_pooled=None, mos_path=None):
    model = formats.read_checkpoint(checkpoint)
    mos = formats.read_mos_csv(mos_path) if mos_path else {}
    pooled_rows = []
    with open(out_patches, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", "patch_id", "pmos"])
        for image_id, path in inputs:
            e, ids = formats.read_embeddings_any(path)
            scores = mlp_forward(model, e)
            patch_ids = ids if ids is not None else np.arange(e.shape[0])
            for pid, s in zip(patch_ids, scores):
                writer.writerow([image_id, int(pid), repr(float(s))])
            pooled_rows.append(
                (image_id, pool_scores(scores), mos.get(image_id))
            )
    if out_pooled:
        with open(out_pooled, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["image_id", "pmos", "mos"])
            for image_id, pooled, gt in pooled_rows:
                writer.writerow([
                    image_id, repr(float(pooled)),
                    "" if gt is None else repr(float(gt)),
                ])
    return pooled_rows


def cmd_evaluate(pooled_csv, out_path=None):
    pred, mos = [], []
    with open(pooled_csv, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["image_id", "pmos", "mos"]:
            raise InputError(f"{pooled_csv}: header must be image_id,pmos,mos")
        for row in reader:
            if row["mos"] == "":
                raise InputError(
                    f"{pooled_csv}: image {row['image_id']} has no MOS"
                )
            pred.append(float(row["pmos"]))
            mos.append(float(row["mos"]))
    plcc_raw, plcc_mapped, _fit = plcc_with_logistic(pred, mos)
    metrics = {
        "plcc_raw": plcc_raw,
        "plcc_mapped": plcc_mapped,
        "srcc": srcc(pred, mos),
        "n_images": len(pred),
    }
    if out_path:
        formats.write_json(out_path, metrics)
    return metrics


def _cmd_sample(args, cfg):
    if args.method == "erp":
        if args.image:
            pixels = formats.read_image(args.image)
            width, height = pixels.shape[1], pixels.shape[0]
        else:
            if not args.width or not args.height:
                raise InputError("--erp needs --width/--height or --image")
            width, height = args.width, args.height
        plan = sampling.erp_grid(width, height, args.patch_size)
    elif args.method == "lat":
        spec = sampling.latitude_plan(args.alpha0 if args.alpha0 else cfg.alpha0)
        plan = sampling.latitude_locations(
            spec, include_polar_caps=not args.no_polar_caps
        )
    else:  # sp
        if not args.scanpaths:
            raise InputError("--sp needs --scanpaths CSV")
        per_image = sampling.read_scanpaths(args.scanpaths)
        if args.image_id:
            if args.image_id not in per_image:
                raise InputError(f"image id {args.image_id!r} not in scanpath CSV")
            paths = per_image[args.image_id]
        elif len(per_image) == 1:
            paths = next(iter(per_image.values()))
        else:
            raise InputError("scanpath CSV covers several images; pass --image-id")
        plan = sampling.scanpath_locations(paths, args.fov if args.fov else cfg.fov)

    formats.write_json(args.out_plan, plan.to_dict())
    print(f"sample: {len(plan.locations)} location(s) -> {args.out_plan}",
          file=sys.stderr)

    if args.image and args.out_patches:
        image = sampling.ErpImage(formats.read_image(args.image))
        patches = np.stack([
            sampling.extract_patch(image, loc, args.patch_size)
            for loc in plan.locations
        ]) if plan.locations else np.zeros((0, args.patch_size, args.patch_size, 3),
                                           dtype=np.uint8)
        if patches.dtype != np.uint8:
            patches = np.clip(np.rint(patches), 0, 255).astype(np.uint8)
        formats.write_patch_archive(args.out_patches, patches)
        print(f"sample: wrote {patches.shape[0]} patch(es) -> "
              f"{args.out_patches}", file=sys.stderr)
    return plan


def _cmd_synth(args, cfg):
    seed = args.seed if args.seed is not None else cfg.seed
    e, outliers = synth.generate(args.n, args.d, args.outliers, seed)
    formats.write_esf(args.out, e, dtype="f64")
    truth = {
        "n": args.n,
        "d": args.d,
        "n_outliers": args.outliers,
        "seed": seed,
        "outliers": [int(i) for i in outliers],
        "trivial": args.outliers == 0,
    }
    formats.write_json(args.out_truth, truth)
    print(f"synth: wrote {args.out} ({args.n}x{args.d}, "
          f"{args.outliers} outliers)", file=sys.stderr)
    return truth


def build_parser():
    parser = argparse.ArgumentParser(
        prog="psel360",
        description="Similarity-preserving patch selection for 360-degree IQA",
    )
    parser.add_argument("--seed", type=int, default=None, help="run seed")
    parser.add_argument("--jobs", type=int, default=1,
                        help="parallel images in select")
    parser.add_argument("--config", default=None,
                        help="flat key = value config file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="generate a sampling plan / patches")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--erp", dest="method", action="store_const", const="erp")
    group.add_argument("--lat", dest="method", action="store_const", const="lat")
    group.add_argument("--sp", dest="method", action="store_const", const="sp")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--patch-size", type=int, default=sampling.DEFAULT_PATCH_SIZE)
    p.add_argument("--alpha0", type=float)
    p.add_argument("--no-polar-caps", action="store_true")
    p.add_argument("--scanpaths")
    p.add_argument("--image-id")
    p.add_argument("--fov", type=float)
    p.add_argument("--image", help="PPM/RIM image to extract patches from")
    p.add_argument("--out-plan", default="plan.json")
    p.add_argument("--out-patches")

    p = sub.add_parser("select", help="rank and filter patch embeddings")
    p.add_argument("embeddings", nargs="*", help="ESF or CSV embedding files")
    p.add_argument("--manifest")
    p.add_argument("--metric", choices=["EUC", "MAN", "MAH"])
    p.add_argument("--mah-mode",
                   choices=["full-covariance", "diagonal-covariance"])
    p.add_argument("--mah-reg", type=float)
    p.add_argument("--bandwidth")
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--h", type=int)
    p.add_argument("--rel-tol", type=float)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--mode", dest="r_update_mode",
                   choices=[selector.EXACT_PROXIMAL, selector.LAGGED_FIXED_POINT])
    p.add_argument("--rate", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--out-dir", default="selected")

    p = sub.add_parser("train", help="train the quality-regression MLP")
    p.add_argument("embeddings", nargs="*")
    p.add_argument("--manifest")
    p.add_argument("--mos", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--optimizer", choices=["adam", "sgd-momentum"])
    p.add_argument("--out", default="model.mlp")

    p = sub.add_parser("predict", help="score patches with a trained model")
    p.add_argument("embeddings", nargs="*")
    p.add_argument("--manifest")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--mos")
    p.add_argument("--out-patches", default="predictions.csv")
    p.add_argument("--out-pooled")

    p = sub.add_parser("evaluate", help="PLCC/SRCC over pooled predictions")
    p.add_argument("pooled", help="CSV image_id,pmos,mos")
    p.add_argument("--out")

    p = sub.add_parser("synth", help="generate a planted-outlier benchmark")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--outliers", type=int, default=0)
    p.add_argument("--out", default="synthetic.esf")
    p.add_argument("--out-truth", default="synthetic.truth.json")

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)

    overrides = {"seed": args.seed}
    if args.command == "select":
        overrides.update(
            metric=args.metric,
            mah_mode=args.mah_mode,
            mah_regularization=args.mah_reg,
            bandwidth=(args.bandwidth if args.bandwidth in (None, "median")
                       else float(args.bandwidth)),
            alpha=args.alpha,
            beta=args.beta,
            h=args.h,
            rel_tol=args.rel_tol,
            max_iters=args.max_iters,
            r_update_mode=args.r_update_mode,
            rate=args.rate,
            k=args.k,
        )
    elif args.command == "train":
        overrides.update(
            epochs=args.epochs,
            batch_size=args.batch_size,
            learning_rate=args.learning_rate,
            optimizer=args.optimizer,
        )

    try:
        cfg = load_run_config(args.config, **overrides)
        if args.command == "sample":
            _cmd_sample(args, cfg)
        elif args.command == "select":
            inputs = _gather_inputs(args.embeddings, args.manifest)
            if not inputs:
                raise InputError("no embedding files given")
            cmd_select(inputs, cfg, args.out_dir, jobs=max(1, args.jobs))
        elif args.command == "train":
            inputs = _gather_inputs(args.embeddings, args.manifest)
            if not inputs:
                raise InputError("no embedding files given")
            cmd_train(inputs, args.mos, cfg, args.out)
        elif args.command == "predict":
            inputs = _gather_inputs(args.embeddings, args.manifest)
            if not inputs:
                raise InputError("no embedding files given")
            cmd_predict(inputs, args.checkpoint, args.out_patches,
                        args.out_pooled, args.mos)
        elif args.command == "evaluate":
            metrics = cmd_evaluate(args.pooled, args.out)
            print(
                f"plcc_raw={metrics['plcc_raw']:.4f} "
                f"plcc_mapped={metrics['plcc_mapped']:.4f} "
                f"srcc={metrics['srcc']:.4f} n={metrics['n_images']}"
            )
        elif args.command == "synth":
            _cmd_synth(args, cfg)
    except PatchSelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
