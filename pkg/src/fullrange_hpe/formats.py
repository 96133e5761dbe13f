"""On-disk formats: flat rasters, JSON-lines manifests, key=value configs."""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from . import so3

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.jsonl"
POSE_TOL = 1e-5


class ManifestError(ValueError):
    """A manifest line failed to parse or validate."""


# ---------------------------------------------------------------- rasters


def write_raster(path, img: np.ndarray) -> None:
    """Header of three little-endian int32 (width, height, channels), then float32 row-major."""
    img = np.asarray(img, dtype="<f4")
    h, w, c = img.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<3i", w, h, c))
        fh.write(np.ascontiguousarray(img).tobytes())


def read_raster(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 12:
        raise ValueError(f"{path}: truncated raster header")
    w, h, c = struct.unpack("<3i", data[:12])
    n = w * h * c
    if len(data) != 12 + 4 * n:
        raise ValueError(f"{path}: expected {n} values for {w}x{h}x{c}")
    return np.frombuffer(data, dtype="<f4", offset=12).reshape(h, w, c).astype(np.float32)


# ---------------------------------------------------------------- manifests


@dataclass
class Record:
    image_path: str
    pose: np.ndarray
    identity_seed: int
    split: str
    source: str = "anchor_pool"
    extra: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> str:
        d = {"format_version": FORMAT_VERSION, "image_path": self.image_path,
             "pose": [float(x) for x in np.asarray(self.pose).ravel()],
             "identity_seed": int(self.identity_seed), "split": self.split, "source": self.source}
        d.update(self.extra)
        return json.dumps(d, sort_keys=True)


@dataclass
class DatasetManifest:
    root: Path
    records: list[Record]

    def select(self, split: str | None = None, source: str | None = None) -> "DatasetManifest":
        recs = [r for r in self.records
                if (split is None or r.split == split) and (source is None or r.source == source)]
        return DatasetManifest(self.root, recs)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def poses(self) -> np.ndarray:
        return np.stack([r.pose for r in self.records])

    def load_images(self) -> np.ndarray:
        return np.stack([read_raster(self.root / r.image_path) for r in self.records])


_KNOWN = {f.name for f in fields(Record)} | {"format_version"}


def parse_manifest_line(line: str, lineno: int) -> Record:
    try:
        d = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"line {lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(d, dict):
        raise ManifestError(f"line {lineno}: expected a JSON object")
    version = d.get("format_version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise ManifestError(f"line {lineno}: unsupported format_version {version}")
    try:
        pose = np.asarray(d["pose"], dtype=np.float64)
        rec = Record(str(d["image_path"]), pose.reshape(3, 3), int(d["identity_seed"]), str(d["split"]),
                     str(d.get("source", "anchor_pool")), {k: v for k, v in d.items() if k not in _KNOWN})
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestError(f"line {lineno}: malformed record ({exc})") from None
    return rec


def load_manifest(path, check_files: bool = True) -> DatasetManifest:
    """Read and validate a JSON-lines manifest.

    ``path`` may be the manifest file or the directory containing it.
    """
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    text = path.read_text()
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.strip():
            records.append(parse_manifest_line(line, lineno))
    if not records:
        raise ManifestError("empty manifest")
    for i, r in enumerate(records):
        if not so3.validate_rotation(r.pose, POSE_TOL):
            raise ManifestError(f"record {i}: pose is not a valid rotation")
    root = path.parent
    if check_files:
        for i, r in enumerate(records):
            if not (root / r.image_path).is_file():
                raise ManifestError(f"record {i}: image {r.image_path} does not exist")
    _check_disjoint(records)
    return DatasetManifest(root, records)


def _check_disjoint(records: list[Record]) -> None:
    owner: dict[str, str] = {}
    for i, r in enumerate(records):
        prev = owner.setdefault(r.image_path, r.split)
        if prev != r.split:
            raise ManifestError(f"record {i}: image {r.image_path} appears in splits {prev} and {r.split}")


def write_manifest(root, records: list[Record]) -> Path:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    path = root / MANIFEST_NAME
    path.write_text("".join(r.to_json() + "\n" for r in records))
    return path


# ---------------------------------------------------------------- key=value configs


def read_config(path) -> dict[str, Any]:
    """Flat ``key = value`` file; ``#`` starts a comment.  Values are parsed as JSON when possible."""
    out: dict[str, Any] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def write_config(path, values: dict[str, Any]) -> None:
    lines = [f"format_version = {FORMAT_VERSION}"]
    lines += [f"{k} = {json.dumps(list(v) if isinstance(v, tuple) else v)}" for k, v in sorted(values.items())
              if k != "format_version"]
    Path(path).write_text("\n".join(lines) + "\n")
