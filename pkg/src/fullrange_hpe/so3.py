"""Rotation-matrix algebra for head pose labels.

Conventions (all angles in radians):

* ``R_yaw(a)``   rotation about the y-axis ``[[c,0,-s],[0,1,0],[s,0,c]]``
* ``R_pitch(b)`` rotation about the x-axis ``[[1,0,0],[0,c,-s],[0,s,c]]``
* ``R_roll(r)``  the in-plane (extrinsic z) matrix ``[[c,s,0],[-s,c,0],[0,0,1]]``

and a pose is ``R = R_roll @ R_pitch @ R_yaw``.  Functions accept a single
3x3 matrix or a stack ``(..., 3, 3)`` unless noted otherwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

ROTATION_TOL = 1e-6
GIMBAL_EPS = 1e-7
GS_EPS = 1e-8
SAFE_COS = 1.0 - 1e-7

AXES = {"x": 0, "y": 1, "z": 2}


class InvalidRotation(ValueError):
    """Raised when a matrix is not in SO(3) within tolerance."""


class DegenerateSixD(ValueError):
    """Raised when a 6D vector cannot be orthonormalised."""


@dataclass(frozen=True)
class EulerAngles:
    yaw: float
    pitch: float
    roll: float

    def as_array(self) -> np.ndarray:
        return np.array([self.yaw, self.pitch, self.roll], dtype=np.float64)

    def degrees(self) -> tuple[float, float, float]:
        return (math.degrees(self.yaw), math.degrees(self.pitch), math.degrees(self.roll))

    @classmethod
    def from_degrees(cls, yaw: float, pitch: float, roll: float) -> "EulerAngles":
        return cls(math.radians(yaw), math.radians(pitch), math.radians(roll))


@dataclass(frozen=True)
class AngleErrors:
    """Per-angle mean absolute errors in degrees."""

    yaw_mae: float
    pitch_mae: float
    roll_mae: float
    mean: float


# ---------------------------------------------------------------- basics


def rot_yaw(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    c, s = np.cos(a), np.sin(a)
    z, o = np.zeros_like(a), np.ones_like(a)
    return np.stack(
        [np.stack([c, z, -s], -1), np.stack([z, o, z], -1), np.stack([s, z, c], -1)], -2
    )


def rot_pitch(b) -> np.ndarray:
    b = np.asarray(b, dtype=np.float64)
    c, s = np.cos(b), np.sin(b)
    z, o = np.zeros_like(b), np.ones_like(b)
    return np.stack(
        [np.stack([o, z, z], -1), np.stack([z, c, -s], -1), np.stack([z, s, c], -1)], -2
    )


def rot_roll(r) -> np.ndarray:
    """The in-plane rotation matrix applied for a clockwise image rotation by ``r``."""
    r = np.asarray(r, dtype=np.float64)
    c, s = np.cos(r), np.sin(r)
    z, o = np.zeros_like(r), np.ones_like(r)
    return np.stack(
        [np.stack([c, s, z], -1), np.stack([-s, c, z], -1), np.stack([z, z, o], -1)], -2
    )


def rot_z(angle) -> np.ndarray:
    """Standard counter-clockwise rotation about z (``rot_roll(-angle)``)."""
    return rot_roll(-np.asarray(angle, dtype=np.float64))


def validate_rotation(m, tol: float = ROTATION_TOL) -> bool:
    """True iff ``max|M^T M - I| <= tol`` and ``|det M - 1| <= tol``.

    For a stack of matrices every member must pass.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    m = np.asarray(m, dtype=np.float64)
    if m.shape[-2:] != (3, 3) or not np.all(np.isfinite(m)):
        return False
    gram = np.swapaxes(m, -1, -2) @ m
    ortho = np.max(np.abs(gram - np.eye(3)), axis=(-2, -1))
    det = np.abs(np.linalg.det(m) - 1.0)
    return bool(np.all(ortho <= tol) and np.all(det <= tol))


def check_rotation(m, tol: float = ROTATION_TOL, name: str = "R") -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if not validate_rotation(m, tol):
        raise InvalidRotation(f"{name} is not a valid rotation matrix (tol={tol:g})")
    return m


# ---------------------------------------------------------------- Euler


def euler_to_rotation(e: EulerAngles | Sequence[float] | np.ndarray) -> np.ndarray:
    """``R_roll(roll) @ R_pitch(pitch) @ R_yaw(yaw)``.

    Accepts an :class:`EulerAngles` or an array whose last axis is
    ``(yaw, pitch, roll)``.
    """
    arr = e.as_array() if isinstance(e, EulerAngles) else np.asarray(e, dtype=np.float64)
    if arr.shape[-1] != 3:
        raise ValueError("expected (yaw, pitch, roll) on the last axis")
    if not np.all(np.isfinite(arr)):
        raise ValueError("Euler angles must be finite")
    yaw, pitch, roll = arr[..., 0], arr[..., 1], arr[..., 2]
    return rot_roll(roll) @ (rot_pitch(pitch) @ rot_yaw(yaw))


def _wrap_pi(a: np.ndarray) -> np.ndarray:
    # map [-pi, pi] onto (-pi, pi]
    return np.where(a <= -np.pi, a + 2 * np.pi, a)


def rotation_to_euler_array(R, validate: bool = True) -> np.ndarray:
    """Vectorised decomposition; returns ``(..., 3)`` of (yaw, pitch, roll)."""
    R = check_rotation(R) if validate else np.asarray(R, dtype=np.float64)
    r20, r21, r22 = R[..., 2, 0], R[..., 2, 1], R[..., 2, 2]
    cos_pitch = np.hypot(r20, r22)
    # atan2 form of asin(R[2][1]); better conditioned next to +-pi/2
    pitch = np.arctan2(np.clip(r21, -1.0, 1.0), cos_pitch)
    locked = cos_pitch < GIMBAL_EPS
    yaw = np.where(locked, np.arctan2(-R[..., 0, 2], R[..., 0, 0]), np.arctan2(r20, r22))
    roll = np.where(locked, 0.0, np.arctan2(R[..., 0, 1], R[..., 1, 1]))
    return np.stack([_wrap_pi(yaw), pitch, _wrap_pi(roll)], axis=-1)


def rotation_to_euler(R) -> EulerAngles:
    """Decompose a single rotation into (yaw, pitch, roll).

    At gimbal lock (``cos(pitch) < 1e-7``) roll is reported as 0 and yaw
    carries the coupled angle, so the triad is not unique there but
    ``euler_to_rotation`` still reproduces ``R``.
    """
    R = check_rotation(R)
    if R.shape != (3, 3):
        raise ValueError("rotation_to_euler takes a single 3x3 matrix")
    y, p, r = rotation_to_euler_array(R, validate=False)
    return EulerAngles(float(y), float(p), float(r))


# ---------------------------------------------------------------- metric


def trace_similarity(A, B, validate: bool = True) -> np.ndarray | float:
    """``(tr(A B^T) - 1) / 2``, the cosine of the geodesic angle, clamped to [-1, 1]."""
    if validate:
        A, B = check_rotation(A, name="A"), check_rotation(B, name="B")
    else:
        A, B = np.asarray(A, dtype=np.float64), np.asarray(B, dtype=np.float64)
    # tr(A B^T) = sum_ij A_ij B_ij
    tr = np.sum(A * B, axis=(-2, -1))
    out = np.clip((tr - 1.0) / 2.0, -1.0, 1.0)
    return float(out) if np.ndim(out) == 0 else out


def geodesic_distance(A, B, validate: bool = True) -> np.ndarray | float:
    """Rotation angle separating ``A`` and ``B``, in [0, pi].

    Evaluated as ``atan2(sin d, cos d)`` with ``sin d`` from the skew part of
    ``A B^T``; equal to the arccos of :func:`trace_similarity` but well
    conditioned near 0 and pi, and exactly 0 for identical inputs.
    """
    if validate:
        A, B = check_rotation(A, name="A"), check_rotation(B, name="B")
    else:
        A, B = np.asarray(A, dtype=np.float64), np.asarray(B, dtype=np.float64)
    c = (np.sum(A * B, axis=(-2, -1)) - 1.0) / 2.0
    # (A B^T)_ij - (A B^T)_ji, term by term so identical inputs cancel exactly
    skew = [np.sum(A[..., i, :] * B[..., j, :] - A[..., j, :] * B[..., i, :], axis=-1)
            for i, j in ((2, 1), (0, 2), (1, 0))]
    sin = np.sqrt(skew[0] ** 2 + skew[1] ** 2 + skew[2] ** 2) / 2.0
    out = np.arctan2(sin, c)
    return float(out) if np.ndim(out) == 0 else out


def pairwise_trace_similarity(poses: np.ndarray) -> np.ndarray:
    flat = np.asarray(poses, dtype=np.float64).reshape(-1, 9)
    return np.clip((flat @ flat.T - 1.0) / 2.0, -1.0, 1.0)


# ---------------------------------------------------------------- 6D head


def gram_schmidt_6d(v, eps: float = GS_EPS) -> np.ndarray:
    """Map ``(a1, a2)`` stacked as 6 numbers to a rotation with columns (b1, b2, b3).

    Works on ``(6,)`` or ``(N, 6)``; raises :class:`DegenerateSixD` when any
    row is not well posed.
    """
    v = np.asarray(v, dtype=np.float64)
    R, ok = gram_schmidt_6d_masked(v, eps)
    if not np.all(ok):
        raise DegenerateSixD("6D vector is degenerate (zero or parallel columns)")
    return R


def gram_schmidt_6d_masked(v: np.ndarray, eps: float = GS_EPS) -> tuple[np.ndarray, np.ndarray]:
    """Like :func:`gram_schmidt_6d` but returns a validity mask instead of raising.

    Degenerate rows come back as the identity.
    """
    v = np.asarray(v, dtype=np.float64)
    a1, a2 = v[..., 0:3], v[..., 3:6]
    n1 = np.linalg.norm(a1, axis=-1, keepdims=True)
    b1 = a1 / np.maximum(n1, eps)
    u2 = a2 - np.sum(b1 * a2, axis=-1, keepdims=True) * b1
    n2 = np.linalg.norm(u2, axis=-1, keepdims=True)
    b2 = u2 / np.maximum(n2, eps)
    b3 = np.cross(b1, b2)
    R = np.stack([b1, b2, b3], axis=-1)
    ok = (n1[..., 0] >= eps) & (n2[..., 0] >= eps)
    if np.any(~ok):
        R = np.where(ok[..., None, None], R, np.eye(3))
    return R, ok


def gram_schmidt_6d_backward(v: np.ndarray, grad_R: np.ndarray) -> np.ndarray:
    """Vector-Jacobian product of :func:`gram_schmidt_6d` for ``(N, 6)`` input."""
    v = np.asarray(v, dtype=np.float64)
    a1, a2 = v[..., 0:3], v[..., 3:6]
    n1 = np.maximum(np.linalg.norm(a1, axis=-1, keepdims=True), GS_EPS)
    b1 = a1 / n1
    d = np.sum(b1 * a2, axis=-1, keepdims=True)
    u2 = a2 - d * b1
    n2 = np.maximum(np.linalg.norm(u2, axis=-1, keepdims=True), GS_EPS)
    b2 = u2 / n2

    g1 = grad_R[..., :, 0].copy()
    g2 = grad_R[..., :, 1].copy()
    g3 = grad_R[..., :, 2]
    # b3 = b1 x b2
    g1 += np.cross(b2, g3)
    g2 += np.cross(g3, b1)
    # b2 = u2 / |u2|
    gu2 = (g2 - np.sum(g2 * b2, axis=-1, keepdims=True) * b2) / n2
    # u2 = a2 - (b1.a2) b1
    ga2 = gu2 - np.sum(gu2 * b1, axis=-1, keepdims=True) * b1
    g1 = g1 - d * gu2 - np.sum(gu2 * b1, axis=-1, keepdims=True) * a2
    # b1 = a1 / |a1|
    ga1 = (g1 - np.sum(g1 * b1, axis=-1, keepdims=True) * b1) / n1
    return np.concatenate([ga1, ga2], axis=-1)


def geodesic_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean geodesic distance and its gradient w.r.t. ``pred`` (``(N, 3, 3)``).

    The arccos argument is clamped to ``[-1+1e-7, 1-1e-7]`` so the gradient
    stays bounded at d = 0 and d = pi.
    """
    n = pred.shape[0]
    x = (np.sum(pred * target, axis=(-2, -1)) - 1.0) / 2.0
    xc = np.clip(x, -SAFE_COS, SAFE_COS)
    loss = float(np.mean(np.arccos(xc)))
    dx = -1.0 / np.sqrt(1.0 - xc * xc)
    dx = np.where((x > -SAFE_COS) & (x < SAFE_COS), dx, 0.0)
    grad = (dx / (2.0 * n))[:, None, None] * target
    return loss, grad


# ---------------------------------------------------------------- misc


def sphere_project(R, axis: str = "z") -> np.ndarray:
    """Image of the chosen unit basis vector under ``R`` (a point on the unit sphere)."""
    R = check_rotation(R)
    if axis not in AXES:
        raise ValueError(f"axis must be one of x, y, z; got {axis!r}")
    return R[..., :, AXES[axis]].copy()


def wrapped_abs_diff_deg(a_deg: np.ndarray, b_deg: np.ndarray) -> np.ndarray:
    d = np.abs(np.asarray(a_deg) - np.asarray(b_deg)) % 360.0
    return np.minimum(d, 360.0 - d)


def wrapped_mae(pred: Sequence[EulerAngles] | np.ndarray, gt: Sequence[EulerAngles] | np.ndarray) -> AngleErrors:
    """Per-angle MAE in degrees using the shorter way round the circle."""
    p = _euler_stack(pred)
    g = _euler_stack(gt)
    if len(p) == 0 or len(g) == 0:
        raise ValueError("wrapped_mae needs at least one sample")
    if p.shape != g.shape:
        raise ValueError(f"length mismatch: {len(p)} predictions vs {len(g)} labels")
    err = wrapped_abs_diff_deg(np.degrees(p), np.degrees(g))
    yaw, pitch, roll = (float(x) for x in err.mean(axis=0))
    return AngleErrors(yaw, pitch, roll, (yaw + pitch + roll) / 3.0)


def _euler_stack(items) -> np.ndarray:
    if isinstance(items, np.ndarray):
        return items.reshape(-1, 3).astype(np.float64)
    return np.array([e.as_array() if isinstance(e, EulerAngles) else e for e in items],
                    dtype=np.float64).reshape(-1, 3)


def random_rotations(rng: np.random.Generator, n: int) -> np.ndarray:
    """Haar-uniform rotations via normalised quaternions."""
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    w, x, y, z = q.T
    return np.stack([
        np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)], -1),
        np.stack([2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)], -1),
        np.stack([2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)], -1),
    ], -2)
