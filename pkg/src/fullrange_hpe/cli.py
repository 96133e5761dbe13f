"""Command-line entry point: ``fullrange-hpe <command> ...``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import asdict, fields, replace
from pathlib import Path

import numpy as np

from . import formats, geo, mining, synth
from .data import Corpus, CorpusConfig, build_corpus
from .evaluate import VARIANTS, evaluate, export_embeddings, export_sphere_points, fingerprint
from .formats import DatasetManifest, ManifestError, Record
from .models import EncoderNet, HeadMLP, load_checkpoint, save_checkpoint
from .train import TrainConfig, train_head, train_representation, train_supervised

log = logging.getLogger("fullrange_hpe")

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2
CONFIG_KINDS = (CorpusConfig, TrainConfig, mining.LossConfig)


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------- config


def load_configs(path: str | None, seed: int) -> tuple[CorpusConfig, TrainConfig, mining.LossConfig]:
    """Route flat key=value entries to the dataclass that owns each key."""
    values = formats.read_config(path) if path else {}
    version = values.pop("format_version", formats.FORMAT_VERSION)
    if version != formats.FORMAT_VERSION:
        raise UsageError(f"unsupported config format_version {version}")
    out = []
    for kind in CONFIG_KINDS:
        names = {f.name: f for f in fields(kind)}
        picked = {k: values.pop(k) for k in list(values) if k in names}
        for k, v in picked.items():
            if isinstance(v, list):
                picked[k] = tuple(v)
        out.append(kind(**picked))
    if values:
        raise UsageError(f"unknown config keys: {', '.join(sorted(values))}")
    corpus_cfg, train_cfg, loss_cfg = out
    return corpus_cfg, replace(train_cfg, seed=seed), loss_cfg


# ---------------------------------------------------------------- dataset directories


def write_corpus(corpus: Corpus, out: Path, seed: int) -> DatasetManifest:
    (out / "images").mkdir(parents=True, exist_ok=True)
    records = []
    for i in range(len(corpus.images)):
        rel = f"images/anchor_{i:06d}.bin"
        formats.write_raster(out / rel, corpus.images[i])
        records.append(Record(rel, corpus.poses[i], int(corpus.identities[i]), str(corpus.split[i])))
    base_pose, _ = synth.yaw_pitch_pose(corpus.poses[:len(corpus.positive_base)])
    for i in range(len(corpus.positive_base)):
        for k in range(corpus.positive_base.shape[1]):
            rel = f"images/positive_{i:06d}_{k}.bin"
            formats.write_raster(out / rel, corpus.positive_base[i, k])
            records.append(Record(rel, base_pose[i], int(corpus.positive_ids[i, k]), "positive",
                                  "positive_pool", {"anchor_index": i, "view": k}))
    formats.write_manifest(out, records)
    formats.write_config(out / "corpus.cfg", {**asdict(corpus.cfg), "seed": seed})
    return DatasetManifest(out, records)


def read_corpus(data: Path) -> Corpus:
    manifest = formats.load_manifest(data)
    stored = formats.read_config(data / "corpus.cfg")
    stored.pop("format_version", None)
    stored.pop("seed", None)
    cfg = CorpusConfig(**stored)
    anchors = [r for r in manifest.records if r.source == "anchor_pool"]
    positives = [r for r in manifest.records if r.source == "positive_pool"]
    images = np.stack([formats.read_raster(data / r.image_path) for r in anchors])
    poses = np.stack([r.pose for r in anchors])
    n_tv = sum(r.split in ("train", "val") for r in anchors)
    views = cfg.positive_views
    base = np.zeros((n_tv, views, *images.shape[1:]), dtype=np.float32)
    ids = np.zeros((n_tv, views), dtype=np.int64)
    seen = np.zeros((n_tv, views), dtype=bool)
    for r in positives:
        i, k = int(r.extra["anchor_index"]), int(r.extra["view"])
        base[i, k] = formats.read_raster(data / r.image_path)
        ids[i, k] = r.identity_seed
        seen[i, k] = True
    if not seen.all():
        raise ManifestError("positive pool is incomplete")
    _, rolls = synth.yaw_pitch_pose(poses[:n_tv])
    return Corpus(cfg, images, poses, np.array([r.identity_seed for r in anchors]),
                  np.array([r.split for r in anchors]), base, ids, rolls)


def _model_pair(path) -> tuple[EncoderNet, HeadMLP]:
    models, _ = load_checkpoint(path)
    if "encoder" not in models or "head" not in models:
        raise UsageError(f"{path}: checkpoint lacks an encoder and head")
    return models["encoder"], models["head"]


def _encoder(path) -> EncoderNet:
    models, _ = load_checkpoint(path)
    if "encoder" not in models:
        raise UsageError(f"{path}: checkpoint lacks an encoder")
    return models["encoder"]


def _write_log(path: Path, tlog) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["format_version", "epoch", "loss", "val_geodesic_deg"])
        for i, loss in enumerate(tlog.losses):
            val = tlog.val_errors[i] if i < len(tlog.val_errors) else ""
            w.writerow([formats.FORMAT_VERSION, i, repr(loss), repr(val) if val != "" else ""])


def _meta(args, *cfgs) -> dict:
    return {"command": args.command, "seed": args.seed, "fingerprint": fingerprint(*cfgs),
            "configs": [asdict(c) for c in cfgs]}


# ---------------------------------------------------------------- commands


def cmd_generate(args) -> None:
    corpus_cfg, _, _ = load_configs(args.config, args.seed)
    corpus = build_corpus(corpus_cfg, args.seed)
    m = write_corpus(corpus, args.out, args.seed)
    print(f"wrote {len(m)} records to {args.out}")


def cmd_train_repr(args) -> None:
    _, train_cfg, loss_cfg = load_configs(args.config, args.seed)
    corpus = read_corpus(args.data)
    enc, tlog = train_representation(train_cfg, loss_cfg, corpus)
    args.out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(args.out / "encoder.ckpt", {"encoder": enc}, _meta(args, train_cfg, loss_cfg))
    _write_log(args.out / "train_repr_log.csv", tlog)
    print(f"encoder saved to {args.out / 'encoder.ckpt'} after {tlog.updates} updates")


def cmd_train_head(args) -> None:
    _, train_cfg, _ = load_configs(args.config, args.seed)
    corpus = read_corpus(args.data)
    enc = _encoder(args.encoder)
    head, tlog = train_head(enc, train_cfg, corpus)
    args.out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(args.out / "model.ckpt", {"encoder": enc, "head": head}, _meta(args, train_cfg))
    _write_log(args.out / "train_head_log.csv", tlog)
    print(f"model saved to {args.out / 'model.ckpt'} (best epoch {tlog.best_epoch})")


def cmd_train_supervised(args) -> None:
    _, train_cfg, _ = load_configs(args.config, args.seed)
    corpus = read_corpus(args.data)
    enc, head, tlog = train_supervised(train_cfg, corpus, args.budget)
    args.out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(args.out / "model.ckpt", {"encoder": enc, "head": head}, _meta(args, train_cfg))
    _write_log(args.out / "train_supervised_log.csv", tlog)
    print(f"model saved to {args.out / 'model.ckpt'} after {tlog.updates} updates")


def _split(args) -> DatasetManifest:
    m = formats.load_manifest(args.data).select(split=args.split, source="anchor_pool")
    if len(m) == 0:
        raise ManifestError(f"empty manifest: no anchor records in split {args.split!r}")
    return m


def cmd_evaluate(args) -> None:
    models = _model_pair(args.model)
    manifest = _split(args)
    report = evaluate(models, manifest, args.variant, args.seed,
                      fingerprint(args.variant, args.seed, args.split, models[0].checksum(), models[1].checksum(),
                                  [r.image_path for r in manifest.records]))
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / f"report_{args.variant}.csv").write_text(report.to_csv())
    print(report.table())


def cmd_make_variant(args) -> None:
    manifest = _split(args)
    rng = np.random.default_rng([args.seed, 13]) if args.variant == "fa" else None
    imgs, poses = geo.variant_batch(manifest.load_images(), manifest.poses, args.variant, rng)
    (args.out / "images").mkdir(parents=True, exist_ok=True)
    records = []
    for i, (r, img, R) in enumerate(zip(manifest.records, imgs, poses)):
        rel = f"images/{args.variant}_{i:06d}.bin"
        formats.write_raster(args.out / rel, img)
        records.append(Record(rel, R, r.identity_seed, r.split, r.source, {"variant": args.variant}))
    formats.write_manifest(args.out, records)
    print(f"wrote {len(records)} {args.variant} records to {args.out}")


def cmd_export_sphere(args) -> None:
    manifest = _split(args)
    args.out.mkdir(parents=True, exist_ok=True)
    n = export_sphere_points(manifest, args.axis, args.out / f"sphere_{args.axis}.csv")
    print(f"wrote {n} points")


def cmd_export_embeddings(args) -> None:
    manifest = _split(args)
    enc = _encoder(args.model)
    args.out.mkdir(parents=True, exist_ok=True)
    n = export_embeddings(enc, manifest, args.out / "embeddings.csv")
    print(f"wrote {n} embeddings")


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fullrange-hpe", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, data=True, split=False):
        sp = sub.add_parser(name)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--config", default=None, help="flat key=value file")
        sp.add_argument("--out", type=Path, required=True)
        if data:
            sp.add_argument("--data", type=Path, required=True, help="dataset directory with manifest.jsonl")
        if split:
            sp.add_argument("--split", default="test")
        sp.set_defaults(func=fn)
        return sp

    add("generate", cmd_generate, data=False)
    add("train-repr", cmd_train_repr)
    add("train-head", cmd_train_head).add_argument("--encoder", type=Path, required=True)
    add("train-supervised", cmd_train_supervised).add_argument("--budget", type=int, default=None)
    ev = add("evaluate", cmd_evaluate, split=True)
    ev.add_argument("--model", type=Path, required=True)
    ev.add_argument("--variant", choices=VARIANTS, default="original")
    add("make-variant", cmd_make_variant, split=True).add_argument("--variant", choices=("sa", "fa"), required=True)
    add("export-sphere", cmd_export_sphere, split=True).add_argument("--axis", choices=("x", "y", "z"), default="z")
    add("export-embeddings", cmd_export_embeddings, split=True).add_argument("--model", type=Path, required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError, TypeError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
