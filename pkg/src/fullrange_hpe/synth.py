"""Procedural head renderer and anchor-positive generation.

A head is a fixed-size cloud of coloured discs in model space (face towards
+z, crown towards +y).  Rendering is orthographic with the camera on the +z
axis, so a point ``p`` at pose ``R`` lands at the centred y-up image
coordinates of ``(R @ p)[:2]`` and nearer points have larger ``z``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numba
import numpy as np
from scipy import ndimage

from . import geo, so3

# world units -> fraction of the image side; keeps every disc inside the
# inscribed circle so in-plane rotation never clips content
SCALE = 0.38
N_SKULL = 112
ANCHOR_SEED_BASE = 0
POSITIVE_SEED_BASE = 1_000_000

Source = Literal["anchor_pool", "positive_pool"]

# generator grid from the pose sampling protocol (radians)
GRID_YAW = (-3.14, 3.0)
GRID_PITCH = (-1.5, 0.1)


@dataclass(frozen=True)
class HeadScene:
    identity_seed: int
    points: np.ndarray = field(repr=False)   # (N, 3) model-space positions
    colors: np.ndarray = field(repr=False)   # (N, 3) RGB in [0, 1]
    radii: np.ndarray = field(repr=False)    # (N,) disc radius in world units

    def __len__(self) -> int:
        return len(self.points)

    def pixel_radii(self, size: int) -> np.ndarray:
        return self.radii * SCALE * size

    def __eq__(self, other):
        if not isinstance(other, HeadScene):
            return NotImplemented
        return (self.identity_seed == other.identity_seed
                and np.array_equal(self.points, other.points)
                and np.array_equal(self.colors, other.colors)
                and np.array_equal(self.radii, other.radii))

    def __hash__(self):
        return hash(self.identity_seed)


@dataclass
class RenderedSample:
    image: np.ndarray
    pose: np.ndarray
    identity_seed: int
    source: Source


def _fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    y = 1 - 2 * i / n
    r = np.sqrt(1 - y * y)
    phi = math.pi * (3 - math.sqrt(5)) * i
    return np.stack([r * np.cos(phi), y, r * np.sin(phi)], axis=1)


def sample_identity(seed: int) -> HeadScene:
    """Deterministic head from ``seed``.

    All identities share the same layout (skull, hair, eyes, nose, mouth,
    ears, neck) so pose cues transfer between them; colours, proportions and
    a per-point jitter vary, and the jitter plus an off-centre mark make
    every head chiral.
    """
    rng = np.random.default_rng([seed, 0x4EAD])
    pts, cols, rad = [], [], []

    skin = np.array([rng.uniform(0.55, 0.95), 0.0, 0.0])
    skin[1] = skin[0] * rng.uniform(0.68, 0.85)
    skin[2] = skin[0] * rng.uniform(0.5, 0.7)
    hair = rng.uniform(0.05, 0.55) * np.array([1.0, rng.uniform(0.6, 0.9), rng.uniform(0.3, 0.7)])
    hair_front = rng.uniform(0.3, 0.55)     # hairline height on the forehead
    hair_back = rng.uniform(-0.35, 0.05)    # how far hair wraps toward the face
    width = rng.uniform(0.86, 0.96)

    skull = _fibonacci_sphere(N_SKULL) * np.array([width, 1.0, 0.95])
    skull += rng.normal(scale=0.025, size=skull.shape)
    is_hair = (skull[:, 1] > hair_front) | (skull[:, 2] < hair_back)
    skull_col = np.where(is_hair[:, None], hair, skin)
    pts.append(skull)
    cols.append(skull_col)
    rad.append(np.full(N_SKULL, 0.2))

    eye_y = rng.uniform(0.12, 0.25)
    eye_x = rng.uniform(0.28, 0.38)
    iris = rng.uniform(0.0, 0.5, size=3)
    for sx in (-1.0, 1.0):
        pts.append([[sx * eye_x, eye_y, 0.93], [sx * eye_x, eye_y, 0.99]])
        cols.append([[0.95, 0.95, 0.95], iris])
        rad.append([0.14, 0.075])
    brow = hair * 0.8
    for sx in (-1.0, 1.0):
        pts.append([[sx * (eye_x - 0.1), eye_y + 0.16, 0.95], [sx * (eye_x + 0.08), eye_y + 0.16, 0.93]])
        cols.append([brow, brow])
        rad.append([0.07, 0.07])

    nose = skin * 0.85
    pts.append([[0.0, -0.02, 1.04], [0.0, -0.12, 1.1], [0.0, -0.2, 1.14]])
    cols.append([nose, nose, nose * 0.9])
    rad.append([0.09, 0.09, 0.1])

    lips = np.array([rng.uniform(0.6, 0.9), rng.uniform(0.1, 0.3), rng.uniform(0.15, 0.3)])
    mouth_y = rng.uniform(-0.5, -0.4)
    mx = np.linspace(-0.2, 0.2, 4)
    pts.append(np.stack([mx, np.full(4, mouth_y), np.full(4, 0.9)], axis=1))
    cols.append(np.tile(lips, (4, 1)))
    rad.append(np.full(4, 0.07))

    ear = skin * 0.8
    for sx in (-1.0, 1.0):
        pts.append([[sx * (width + 0.06), 0.05, -0.05], [sx * (width + 0.06), -0.12, -0.05]])
        cols.append([ear, ear])
        rad.append([0.13, 0.11])

    neck = skin * 0.7
    nx = np.array([-0.25, 0.0, 0.25])
    pts.append(np.stack([nx, np.full(3, -1.0), np.full(3, -0.15)], axis=1))
    cols.append(np.tile(neck, (3, 1)))
    rad.append(np.full(3, 0.16))

    # off-centre mark; position is per-identity so chirality is not a shared cue
    d = rng.normal(size=3)
    d[2] = abs(d[2]) * 0.5
    d /= np.linalg.norm(d)
    pts.append([d * 1.0])
    cols.append([rng.uniform(0.0, 1.0, size=3)])
    rad.append([0.11])

    points = np.concatenate([np.asarray(p, dtype=np.float64).reshape(-1, 3) for p in pts])
    colors = np.clip(np.concatenate([np.asarray(c, dtype=np.float64).reshape(-1, 3) for c in cols]), 0, 1)
    radii = np.concatenate([np.asarray(r, dtype=np.float64).ravel() for r in rad])
    # fixed model-space shading: brighter toward the crown and the face
    shade = 0.78 + 0.14 * points[:, 1:2] + 0.08 * points[:, 2:3]
    colors = np.clip(colors * shade, 0.0, 1.0)
    return HeadScene(int(seed), points, colors, radii)


@numba.njit(cache=True)
def _splat(px, py, rp, depth, col, size, out):
    b, n = px.shape
    for i in range(b):
        order = np.argsort(depth[i])          # far first
        for k in order:
            cx, cy, r = px[i, k], py[i, k], rp[i, k]
            u0 = max(0, int(np.floor(cx - r - 1.0)))
            u1 = min(size - 1, int(np.ceil(cx + r + 1.0)))
            v0 = max(0, int(np.floor(cy - r - 1.0)))
            v1 = min(size - 1, int(np.ceil(cy + r + 1.0)))
            for v in range(v0, v1 + 1):
                for u in range(u0, u1 + 1):
                    d = np.sqrt((u - cx) ** 2 + (v - cy) ** 2)
                    a = min(1.0, max(0.0, r + 0.5 - d))
                    if a > 0.0:
                        for ch in range(3):
                            out[i, v, u, ch] = a * col[i, k, ch] + (1.0 - a) * out[i, v, u, ch]


def render_batch(points: np.ndarray, colors: np.ndarray, radii: np.ndarray,
                 poses: np.ndarray, size: int) -> np.ndarray:
    """Render ``B`` scenes at ``B`` poses into ``(B, size, size, 3)`` float32.

    Discs are anti-aliased with a one-pixel ramp and painted far to near.
    """
    if size < 16:
        raise ValueError("render size must be at least 16")
    q = np.einsum("bij,bnj->bni", poses, points)
    scale = SCALE * size
    c = (size - 1) / 2.0
    px = c + q[..., 0] * scale
    py = c - q[..., 1] * scale
    rp = np.broadcast_to(radii * scale, px.shape)
    out = np.zeros((len(points), size, size, 3), dtype=np.float64)
    _splat(np.ascontiguousarray(px), np.ascontiguousarray(py), np.ascontiguousarray(rp),
           np.ascontiguousarray(q[..., 2]), np.ascontiguousarray(colors, dtype=np.float64), size, out)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def render(scene: HeadScene, pose, size: int = 32) -> np.ndarray:
    """Orthographic render of ``scene`` at ``pose``; black background."""
    pose = so3.check_rotation(pose)
    return render_batch(scene.points[None], scene.colors[None], scene.radii[None], pose[None], size)[0]


def render_scenes(scenes: Sequence[HeadScene], poses: np.ndarray, size: int) -> np.ndarray:
    pts = np.stack([s.points for s in scenes])
    cols = np.stack([s.colors for s in scenes])
    rad = np.stack([s.radii for s in scenes])
    return render_batch(pts, cols, rad, np.asarray(poses, dtype=np.float64), size)


def yaw_pitch_pose(pose: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split poses into the yaw/pitch part ``R_pitch @ R_yaw`` and the roll angle."""
    e = so3.rotation_to_euler_array(pose)
    base = so3.rot_pitch(e[..., 1]) @ so3.rot_yaw(e[..., 0])
    return base, e[..., 2]


def generate_positive(anchor_pose, positive_identity: HeadScene, size: int = 32) -> RenderedSample:
    """Render a second identity at the anchor's exact pose.

    The renderer is only driven at yaw and pitch (roll 0), mirroring a
    generator that cannot control roll; the roll is then applied as an
    image rotation.  The returned label is the anchor pose itself.
    """
    anchor_pose = so3.check_rotation(anchor_pose)
    base, roll = yaw_pitch_pose(anchor_pose)
    img = render(positive_identity, base, size)
    if roll != 0.0:
        img = geo.transform_raster(img, geo.Augmentation("rotate", phi=float(roll)))
    return RenderedSample(img, anchor_pose.copy(), positive_identity.identity_seed, "positive_pool")


def roll_positive_batch(base_imgs: np.ndarray, rolls: np.ndarray) -> np.ndarray:
    """Apply each anchor's roll to yaw/pitch-only renders, batched."""
    mats = so3.rot_roll(rolls)[:, :2, :2]
    return geo.warp_batch(base_imgs, mats)


# ---------------------------------------------------------------- pose sampling


def sample_grid_poses(rng: np.random.Generator, n: int,
                      yaw_range=GRID_YAW, pitch_range=GRID_PITCH) -> np.ndarray:
    """Generator-grid poses: yaw and pitch uniform, roll 0.  Returns ``(n, 3)`` Euler."""
    yaw = rng.uniform(*yaw_range, size=n)
    pitch = rng.uniform(*pitch_range, size=n)
    return np.stack([yaw, pitch, np.zeros(n)], axis=1)


def sample_frontal_poses(rng: np.random.Generator, n: int, yaw_deg=90.0, pitch_deg=45.0,
                         roll_deg=30.0) -> np.ndarray:
    """Frontal-range poses like the usual in-the-wild training sets.  ``(n, 3)`` Euler."""
    yaw = np.radians(rng.uniform(-yaw_deg, yaw_deg, size=n))
    pitch = np.radians(rng.uniform(-pitch_deg, pitch_deg, size=n))
    roll = np.radians(rng.uniform(-roll_deg, roll_deg, size=n))
    return np.stack([yaw, pitch, roll], axis=1)


# ---------------------------------------------------------------- pixel augmentation


@dataclass(frozen=True)
class PixelAugConfig:
    p_brightness: float = 0.3
    brightness: float = 0.15
    p_gamma: float = 0.3
    gamma: tuple[float, float] = (0.7, 1.4)
    p_channel_shuffle: float = 0.1
    p_noise: float = 0.3
    noise_std: float = 0.03
    p_blur: float = 0.2
    blur_sigma: tuple[float, float] = (0.3, 1.0)
    p_translate: float = 0.3
    max_shift: int = 2
    p_downsample: float = 0.2
    p_dropout: float = 0.2
    dropout_holes: int = 2
    dropout_size: int = 4

    @classmethod
    def off(cls) -> "PixelAugConfig":
        return cls(**{k: 0.0 for k in cls.__dataclass_fields__ if k.startswith("p_")})


def adjust_brightness(img: np.ndarray, delta: float) -> np.ndarray:
    return np.clip(img + delta, 0.0, 1.0).astype(img.dtype)


def adjust_gamma(img: np.ndarray, gamma: float) -> np.ndarray:
    return np.clip(img ** gamma, 0.0, 1.0).astype(img.dtype)


def channel_shuffle(img: np.ndarray, perm: Sequence[int]) -> np.ndarray:
    return img[..., list(perm)]


def gaussian_noise(img: np.ndarray, std: float, rng: np.random.Generator) -> np.ndarray:
    return np.clip(img + rng.normal(scale=std, size=img.shape), 0.0, 1.0).astype(img.dtype)


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    return np.clip(ndimage.gaussian_filter(img, sigma=(sigma, sigma, 0), mode="constant"), 0, 1).astype(img.dtype)


def translate(img: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Integer shift (right, down) with zero fill."""
    out = np.zeros_like(img)
    h, w = img.shape[:2]
    src = img[max(0, -dy):h - max(0, dy), max(0, -dx):w - max(0, dx)]
    out[max(0, dy):max(0, dy) + src.shape[0], max(0, dx):max(0, dx) + src.shape[1]] = src
    return out


def down_up(img: np.ndarray, factor: int = 2) -> np.ndarray:
    h, w, c = img.shape
    hh, ww = h // factor, w // factor
    small = img[:hh * factor, :ww * factor].reshape(hh, factor, ww, factor, c).mean(axis=(1, 3))
    big = np.repeat(np.repeat(small, factor, axis=0), factor, axis=1)
    out = img.copy()
    out[:hh * factor, :ww * factor] = big
    return out


def coarse_dropout(img: np.ndarray, holes: Sequence[tuple[int, int, int, int]]) -> np.ndarray:
    """Zero each ``(row, col, height, width)`` rectangle."""
    out = img.copy()
    for r, c, hh, ww in holes:
        out[r:r + hh, c:c + ww] = 0.0
    return out


def pixel_augment(img: np.ndarray, rng: np.random.Generator, cfg: PixelAugConfig = PixelAugConfig()) -> np.ndarray:
    """Random subset of photometric and pixel-removal transforms.

    Never changes the pose label; translation is a few pixels at most.
    """
    u = rng.random(8)
    out = img
    if u[0] < cfg.p_brightness:
        out = adjust_brightness(out, rng.uniform(-cfg.brightness, cfg.brightness))
    if u[1] < cfg.p_gamma:
        out = adjust_gamma(out, rng.uniform(*cfg.gamma))
    if u[2] < cfg.p_channel_shuffle:
        out = channel_shuffle(out, rng.permutation(3))
    if u[3] < cfg.p_blur:
        out = gaussian_blur(out, rng.uniform(*cfg.blur_sigma))
    if u[4] < cfg.p_downsample:
        out = down_up(out, 2)
    if u[5] < cfg.p_translate:
        dx, dy = rng.integers(-cfg.max_shift, cfg.max_shift + 1, size=2)
        out = translate(out, int(dx), int(dy))
    if u[6] < cfg.p_noise:
        out = gaussian_noise(out, cfg.noise_std, rng)
    if u[7] < cfg.p_dropout:
        h, w = out.shape[:2]
        s = cfg.dropout_size
        holes = [(int(rng.integers(0, h - s + 1)), int(rng.integers(0, w - s + 1)), s, s)
                 for _ in range(cfg.dropout_holes)]
        out = coarse_dropout(out, holes)
    return out if out is not img else img.copy()
