"""Encoder, 6D pose head, and their checkpoint format."""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import so3
from .nn import ACTIVATIONS, L2Normalize, Linear, Model, Sequential

CHECKPOINT_VERSION = 1
_MAGIC = b"FRHPECK1"


@dataclass(frozen=True)
class EncoderConfig:
    image_size: int = 32
    hidden: tuple[int, ...] = (256, 256)
    embed_dim: int = 64
    activation: str = "tanh"

    @property
    def input_dim(self) -> int:
        return self.image_size * self.image_size * 3


@dataclass(frozen=True)
class HeadConfig:
    in_dim: int = 64
    width: int = 256
    activation: str = "relu"


def preprocess(images: np.ndarray) -> np.ndarray:
    """Flatten ``(B, H, W, 3)`` rasters in [0, 1] to zero-centred rows."""
    images = np.asarray(images)
    return images.reshape(len(images), -1).astype(np.float64) * 2.0 - 1.0


class EncoderNet(Model):
    """Fully connected image encoder with an L2-normalised output."""

    def __init__(self, cfg: EncoderConfig = EncoderConfig(), seed: int = 0):
        self.cfg = cfg
        rng = np.random.default_rng([seed, 1])
        act = ACTIVATIONS[cfg.activation]
        layers, dims = [], [cfg.input_dim, *cfg.hidden]
        for a, b in zip(dims[:-1], dims[1:]):
            layers += [Linear(a, b, rng), act()]
        layers.append(Linear(dims[-1], cfg.embed_dim, rng))
        self.body = Sequential(layers)
        self.norm = L2Normalize()

    def layers_with_params(self):
        return [(f"fc{i}", l) for i, l in enumerate(l for l in self.body.layers if isinstance(l, Linear))]

    def features(self, images: np.ndarray) -> np.ndarray:
        x = preprocess(images)
        if x.shape[1] != self.cfg.input_dim:
            raise ValueError(f"encoder expects {self.cfg.image_size}x{self.cfg.image_size}x3 rasters")
        return x

    def forward(self, images: np.ndarray) -> np.ndarray:
        return self.norm.forward(self.body.forward(self.features(images)))

    __call__ = forward

    def backward(self, g: np.ndarray) -> np.ndarray:
        return self.body.backward(self.norm.backward(g))

    def embed(self, images: np.ndarray, batch: int = 512) -> np.ndarray:
        """Inference in chunks; does not touch gradient state that matters."""
        return np.concatenate([self.forward(images[i:i + batch]) for i in range(0, len(images), batch)])


class HeadMLP(Model):
    """Four 256-unit layers, input skip into the last one, 6D output."""

    def __init__(self, cfg: HeadConfig = HeadConfig(), seed: int = 0):
        self.cfg = cfg
        rng = np.random.default_rng([seed, 2])
        act = ACTIVATIONS[cfg.activation]
        w = cfg.width
        gain = np.sqrt(2.0) if cfg.activation == "relu" else 1.0
        self.fc = [Linear(cfg.in_dim, w, rng, gain), Linear(w, w, rng, gain), Linear(w, w, rng, gain),
                   Linear(w + cfg.in_dim, w, rng, gain)]
        self.acts = [act() for _ in range(4)]
        self.out = Linear(w, 6, rng, 0.1)
        # start near the identity rotation
        self.out.params["b"][:] = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0]

    def layers_with_params(self):
        return [*((f"fc{i}", l) for i, l in enumerate(self.fc)), ("out", self.out)]

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._in_dim = x.shape[1]
        h = x
        for i in range(3):
            h = self.acts[i].forward(self.fc[i].forward(h))
        h = self.acts[3].forward(self.fc[3].forward(np.concatenate([h, x], axis=1)))
        return self.out.forward(h)

    __call__ = forward

    def backward(self, g: np.ndarray) -> np.ndarray:
        g = self.out.backward(g)
        g = self.fc[3].backward(self.acts[3].backward(g))
        gh, gx = g[:, :-self._in_dim], g[:, -self._in_dim:].copy()
        for i in (2, 1, 0):
            gh = self.fc[i].backward(self.acts[i].backward(gh))
        return gx + gh


def predict_pose(encoder: EncoderNet, head: HeadMLP, images: np.ndarray) -> np.ndarray:
    """Rotation matrices for one raster ``(H, W, 3)`` or a batch ``(B, H, W, 3)``."""
    single = np.ndim(images) == 3
    batch = np.asarray(images)[None] if single else np.asarray(images)
    out = []
    for i in range(0, len(batch), 512):
        six = head.forward(encoder.forward(batch[i:i + 512]))
        out.append(so3.gram_schmidt_6d(six))
    R = np.concatenate(out)
    return R[0] if single else R


# ---------------------------------------------------------------- checkpoints


def _cfg_dict(cfg) -> dict:
    d = asdict(cfg)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def save_checkpoint(path, models: dict[str, Model], meta: dict | None = None) -> None:
    """Write a JSON header followed by raw little-endian float64 arrays.

    Layout: 8-byte magic, uint64 header length, UTF-8 JSON header, data.
    """
    arrays, entries = [], []
    offset = 0
    for role, model in models.items():
        for name, arr in model.named_params():
            a = np.ascontiguousarray(arr, dtype="<f8")
            entries.append({"model": role, "name": name, "shape": list(a.shape), "offset": offset})
            offset += a.nbytes
            arrays.append(a)
    header = {
        "format_version": CHECKPOINT_VERSION,
        "configs": {role: {"kind": type(m).__name__, **_cfg_dict(m.cfg)} for role, m in models.items()},
        "arrays": entries,
        "meta": meta or {},
    }
    raw = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(raw)))
        fh.write(raw)
        for a in arrays:
            fh.write(a.tobytes())


def load_checkpoint(path) -> tuple[dict[str, Model], dict]:
    data = Path(path).read_bytes()
    if data[:8] != _MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    (n,) = struct.unpack("<Q", data[8:16])
    header = json.loads(data[16:16 + n])
    if header.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {header.get('format_version')}")
    body = data[16 + n:]
    models: dict[str, Model] = {}
    for role, cfg in header["configs"].items():
        cfg = dict(cfg)
        kind = cfg.pop("kind")
        if kind == "EncoderNet":
            cfg["hidden"] = tuple(cfg["hidden"])
            models[role] = EncoderNet(EncoderConfig(**cfg))
        elif kind == "HeadMLP":
            models[role] = HeadMLP(HeadConfig(**cfg))
        else:
            raise ValueError(f"unknown model kind {kind}")
    state: dict[str, dict[str, np.ndarray]] = {r: {} for r in models}
    for e in header["arrays"]:
        count = int(np.prod(e["shape"])) if e["shape"] else 1
        a = np.frombuffer(body, dtype="<f8", count=count, offset=e["offset"]).reshape(e["shape"])
        state[e["model"]][e["name"]] = a
    for role, m in models.items():
        m.load_state(state[role])
    return models, header["meta"]
