"""Pose-error reports and CSV exports."""
from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import geo, so3
from .formats import FORMAT_VERSION, DatasetManifest
from .models import EncoderNet, HeadMLP, predict_pose

Predictor = Callable[[np.ndarray], np.ndarray]
VARIANTS = ("original", "sa", "fa")
VARIANT_LABELS = {"original": "Original", "sa": "SA", "fa": "FA"}


@dataclass(frozen=True)
class VariantRow:
    variant: str
    errors: so3.AngleErrors
    geodesic_deg: float
    count: int


@dataclass(frozen=True)
class EvalReport:
    rows: tuple[VariantRow, ...]
    fingerprint: str

    def row(self, variant: str) -> VariantRow:
        for r in self.rows:
            if r.variant == variant:
                return r
        raise KeyError(variant)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["format_version", "variant", "yaw_mae", "pitch_mae", "roll_mae", "mean_mae",
                    "geodesic_deg", "count", "fingerprint"])
        for r in self.rows:
            e = r.errors
            w.writerow([FORMAT_VERSION, r.variant, *(repr(float(x)) for x in
                        (e.yaw_mae, e.pitch_mae, e.roll_mae, e.mean, r.geodesic_deg)), r.count, self.fingerprint])
        return buf.getvalue()

    def table(self) -> str:
        head = ["Variant", "Yaw", "Pitch", "Roll", "Mean", "Geodesic", "N"]
        body = [[VARIANT_LABELS.get(r.variant, r.variant), *(f"{x:.2f}" for x in
                 (r.errors.yaw_mae, r.errors.pitch_mae, r.errors.roll_mae, r.errors.mean, r.geodesic_deg)),
                 str(r.count)] for r in self.rows]
        widths = [max(len(row[i]) for row in [head, *body]) for i in range(len(head))]
        fmt = lambda row: "  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(row, widths)))
        return "\n".join([fmt(head), "  ".join("-" * w for w in widths), *map(fmt, body)])


def fingerprint(*parts) -> str:
    """Short stable hash of JSON-serialisable configuration pieces."""
    blob = json.dumps([_plain(p) for p in parts], sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _plain(p):
    if hasattr(p, "__dataclass_fields__"):
        return asdict(p)
    return p


def model_predictor(encoder: EncoderNet, head: HeadMLP) -> Predictor:
    return lambda images: predict_pose(encoder, head, images)


def evaluate_arrays(predict: Predictor, images: np.ndarray, poses: np.ndarray, variant: str, seed: int) -> VariantRow:
    """Materialise one test variant, predict, and score it."""
    variant = variant.lower()
    if len(images) == 0:
        raise ValueError("empty manifest")
    rng = np.random.default_rng([seed, 13]) if variant == "fa" else None
    imgs, gt = geo.variant_batch(images, poses, variant, rng)
    pred = np.asarray(predict(imgs), dtype=np.float64)
    errors = so3.wrapped_mae(so3.rotation_to_euler_array(pred, validate=False),
                             so3.rotation_to_euler_array(gt, validate=False))
    geo_deg = float(np.degrees(np.mean(so3.geodesic_distance(pred, gt, validate=False))))
    if not all(np.isfinite([errors.yaw_mae, errors.pitch_mae, errors.roll_mae, geo_deg])):
        raise ValueError(f"non-finite error on variant {variant}")
    return VariantRow(variant, errors, geo_deg, len(imgs))


def evaluate(models: tuple[EncoderNet, HeadMLP] | Predictor, manifest: DatasetManifest,
             variant: str | Sequence[str], seed: int, config_fingerprint: str = "") -> EvalReport:
    """Score a model on one or more variants of the manifest's records."""
    predict = models if callable(models) else model_predictor(*models)
    if len(manifest) == 0:
        raise ValueError("empty manifest")
    variants = [variant] if isinstance(variant, str) else list(variant)
    images, poses = manifest.load_images(), manifest.poses
    rows = tuple(evaluate_arrays(predict, images, poses, v, seed) for v in variants)
    fp = config_fingerprint or fingerprint(variants, seed, [r.image_path for r in manifest.records])
    return EvalReport(rows, fp)


# ---------------------------------------------------------------- exports


def _write_csv(out, header: list[str], rows) -> None:
    out = Path(out)
    try:
        with open(out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        out.with_name(out.name + ".meta.json").write_text(
            json.dumps({"format_version": FORMAT_VERSION, "columns": header}, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {out}: {exc.strerror}") from exc


def _num(x: float) -> str:
    # integral values print bare ("0", "1") so trivial rows read naturally
    x = float(x) + 0.0
    return str(int(x)) if x.is_integer() else repr(x)


def export_sphere_points(manifest: DatasetManifest, axis: str, out) -> int:
    if len(manifest) == 0:
        raise ValueError("empty manifest")
    pts = so3.sphere_project(manifest.poses, axis)
    _write_csv(out, ["x", "y", "z"], ([_num(v) for v in p] for p in pts))
    return len(pts)


def export_embeddings(encoder: EncoderNet, manifest: DatasetManifest, out) -> int:
    if len(manifest) == 0:
        raise ValueError("empty manifest")
    emb = encoder.embed(manifest.load_images())
    _write_csv(out, [f"e{i}" for i in range(emb.shape[1])], ([repr(float(v)) for v in row] for row in emb))
    return len(emb)
