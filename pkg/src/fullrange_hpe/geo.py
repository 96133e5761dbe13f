"""Joint image/label geometric transforms.

Image coordinates: ``u`` is the column (to the right), ``v`` the row
(downwards).  Geometry is done in centred, y-up plane coordinates
``X = u - cx``, ``Y = cy - v`` so that the in-plane part of a pose matrix acts
on ``(X, Y)`` directly.  With this choice a clockwise image rotation by
``phi`` moves content by the 2x2 block of :func:`so3.rot_roll`, and a
reflection across the line at ``theta`` (counter-clockwise from +X) moves it
by the 2x2 block of ``flip_matrix(theta)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from . import so3

FLIP_X = np.diag([-1.0, 1.0, 1.0])
SA_PHI = math.radians(10.0)
SA_THETA = math.radians(85.0)

Kind = Literal["rotate", "flip", "compose"]


@dataclass(frozen=True)
class Augmentation:
    kind: Kind
    phi: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        if self.kind not in ("rotate", "flip", "compose"):
            raise ValueError(f"unknown augmentation kind {self.kind!r}")

    @property
    def rotates(self) -> bool:
        return self.kind in ("rotate", "compose")

    @property
    def flips(self) -> bool:
        return self.kind in ("flip", "compose")


@dataclass(frozen=True)
class AugmentPolicy:
    """Training-time geometric augmentation.

    Rotation and flip are drawn independently.  Angles in radians.
    """

    p_rotate: float = 0.5
    rotate_range: tuple[float, float] = (0.0, math.pi / 2)
    p_flip: float = 0.3
    flip_range: tuple[float, float] = (0.0, math.pi / 2)

    def __post_init__(self):
        for p in (self.p_rotate, self.p_flip):
            if not 0.0 <= p <= 1.0:
                raise ValueError("probabilities must lie in [0, 1]")
        for lo, hi in (self.rotate_range, self.flip_range):
            if hi < lo:
                raise ValueError("empty angle interval")

    @classmethod
    def named(cls, name: str, rotate_span: float = math.pi / 2) -> "AugmentPolicy":
        """Ablation presets: ``none``, ``flip``, ``rotate``, ``rotate_flip``.

        ``rotate_span`` sets the clockwise rotation interval ``[0, span]``.
        """
        base = cls(rotate_range=(0.0, float(rotate_span)))
        if name == "rotate_flip":
            return base
        if name == "rotate":
            return cls(p_rotate=base.p_rotate, rotate_range=base.rotate_range, p_flip=0.0)
        if name == "flip":
            return cls(p_rotate=0.0, p_flip=base.p_flip)
        if name == "none":
            return cls(p_rotate=0.0, p_flip=0.0)
        raise ValueError(f"unknown policy {name!r}")


# ---------------------------------------------------------------- labels


def flip_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(2 * theta), math.sin(2 * theta)
    return np.array([[c, s, 0.0], [s, -c, 0.0], [0.0, 0.0, 1.0]])


def rotate_pose(R, phi: float, validate: bool = True) -> np.ndarray:
    """Label of an image rotated clockwise by ``phi``: ``R_roll(phi) @ R``."""
    R = so3.check_rotation(R) if validate else np.asarray(R, dtype=np.float64)
    return so3.rot_roll(phi) @ R


def flip_pose(R, theta: float, validate: bool = True) -> np.ndarray:
    """Label of an image mirrored across the line at ``theta``: ``Flip_theta @ R @ Flip_X``."""
    R = so3.check_rotation(R) if validate else np.asarray(R, dtype=np.float64)
    return flip_matrix(theta) @ R @ FLIP_X


def transform_pose(R, aug: Augmentation | None, validate: bool = True) -> np.ndarray:
    R = so3.check_rotation(R) if validate else np.asarray(R, dtype=np.float64)
    if aug is None:
        return R.copy()
    if aug.rotates:
        R = rotate_pose(R, aug.phi, validate=False)
    if aug.flips:
        R = flip_pose(R, aug.theta, validate=False)
    return R


# ---------------------------------------------------------------- rasters


def check_raster(img) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"raster must be H x W x 3, got shape {img.shape}")
    if img.shape[0] < 8 or img.shape[1] < 8:
        raise ValueError("raster must be at least 8 x 8")
    if not np.all(np.isfinite(img)) or img.min() < 0.0 or img.max() > 1.0:
        raise ValueError("raster values must lie in [0, 1]")
    return img


def plane_matrix(aug: Augmentation | None) -> np.ndarray:
    """2x2 forward map of image content in centred y-up coordinates."""
    m = np.eye(2)
    if aug is None:
        return m
    if aug.rotates:
        m = so3.rot_roll(aug.phi)[:2, :2] @ m
    if aug.flips:
        m = flip_matrix(aug.theta)[:2, :2] @ m
    return m


def warp_batch(imgs: np.ndarray, forward: np.ndarray) -> np.ndarray:
    """Resample ``(B, H, W, C)`` images under per-image 2x2 forward maps ``(B, 2, 2)``.

    Bilinear, zero fill outside the frame.  Output has the same dtype.
    """
    b, h, w, c = imgs.shape
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    vv, uu = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    X, Y = uu - cx, cy - vv
    inv = np.linalg.inv(forward)
    sx = inv[:, 0, 0, None, None] * X + inv[:, 0, 1, None, None] * Y
    sy = inv[:, 1, 0, None, None] * X + inv[:, 1, 1, None, None] * Y
    su = sx + cx
    sv = cy - sy
    # snap to the pixel grid where trig round-off leaves ~1e-16 residue
    ru, rv = np.round(su), np.round(sv)
    su = np.where(np.abs(su - ru) < 1e-9, ru, su)
    sv = np.where(np.abs(sv - rv) < 1e-9, rv, sv)

    u0 = np.floor(su).astype(np.int64)
    v0 = np.floor(sv).astype(np.int64)
    fu = (su - u0)[..., None]
    fv = (sv - v0)[..., None]
    bidx = np.arange(b)[:, None, None]

    def tap(vi, ui):
        ok = (ui >= 0) & (ui < w) & (vi >= 0) & (vi < h)
        vals = imgs[bidx, np.clip(vi, 0, h - 1), np.clip(ui, 0, w - 1)].astype(np.float64)
        return vals * ok[..., None]

    out = (tap(v0, u0) * (1 - fu) * (1 - fv) + tap(v0, u0 + 1) * fu * (1 - fv)
           + tap(v0 + 1, u0) * (1 - fu) * fv + tap(v0 + 1, u0 + 1) * fu * fv)
    return np.clip(out, 0.0, 1.0).astype(imgs.dtype)


def transform_raster(img, aug: Augmentation | None) -> np.ndarray:
    """Rotate clockwise by ``phi`` and/or mirror across the line at ``theta``.

    The transform is about the raster centre; dimensions are unchanged.
    """
    img = check_raster(img)
    m = plane_matrix(aug)
    if np.array_equal(m, np.eye(2)):
        return img.copy()
    return warp_batch(img[None], m[None])[0]


def apply_paired(img, R, aug: Augmentation | None) -> tuple[np.ndarray, np.ndarray]:
    """Apply the same geometric augmentation to an image and its pose label."""
    return transform_raster(img, aug), transform_pose(R, aug)


# ---------------------------------------------------------------- sampling


def sample_augmentation(policy: AugmentPolicy, rng: np.random.Generator) -> Augmentation | None:
    # four draws every call so the stream position does not depend on outcomes
    u_rot, u_phi, u_flip, u_theta = rng.random(4)
    rotate = u_rot < policy.p_rotate
    flip = u_flip < policy.p_flip
    phi = policy.rotate_range[0] + u_phi * (policy.rotate_range[1] - policy.rotate_range[0])
    theta = policy.flip_range[0] + u_theta * (policy.flip_range[1] - policy.flip_range[0])
    if rotate and flip:
        return Augmentation("compose", phi=phi, theta=theta)
    if rotate:
        return Augmentation("rotate", phi=phi)
    if flip:
        return Augmentation("flip", theta=theta)
    return None


def variant_augmentations(n: int, variant: str, rng: np.random.Generator | None = None) -> list[Augmentation | None]:
    variant = variant.lower()
    if variant == "original":
        return [None] * n
    if variant == "sa":
        return [Augmentation("compose", phi=SA_PHI, theta=SA_THETA)] * n
    if variant == "fa":
        if rng is None:
            raise ValueError("FA variant needs a random source")
        # phi in (-pi, pi], theta in [0, pi/2]
        phi = math.pi - 2 * math.pi * rng.random(n)
        theta = (math.pi / 2) * rng.random(n)
        return [Augmentation("compose", phi=float(p), theta=float(t)) for p, t in zip(phi, theta)]
    raise ValueError(f"unknown variant {variant!r}")


def make_test_variant(samples: Sequence[tuple[np.ndarray, np.ndarray]], variant: str,
                      rng: np.random.Generator | None = None) -> list[tuple[np.ndarray, np.ndarray]]:
    """Build the SA (fixed 10 deg rotate + 85 deg flip) or FA (random) copy of a test set."""
    if len(samples) == 0:
        raise ValueError("cannot build a test variant of an empty set")
    augs = variant_augmentations(len(samples), variant, rng)
    return [apply_paired(img, R, a) for (img, R), a in zip(samples, augs)]


def variant_batch(images: np.ndarray, poses: np.ndarray, variant: str,
                  rng: np.random.Generator | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Array form of :func:`make_test_variant`; same draws, same outputs."""
    if len(images) == 0:
        raise ValueError("cannot build a test variant of an empty set")
    augs = variant_augmentations(len(images), variant, rng)
    out_poses = np.stack([transform_pose(R, a) for R, a in zip(poses, augs)])
    if all(a is None for a in augs):
        return np.array(images, copy=True), out_poses
    return warp_batch(np.asarray(images), np.stack([plane_matrix(a) for a in augs])), out_poses
