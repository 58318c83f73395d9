"""Rigid-body geometry: poses, point transforms, rigid alignment and pinhole projection.

Rotations are plain ``(3, 3)`` float arrays and translations ``(3,)`` arrays in
meters. All functions are pure and never modify their inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .exceptions import BehindCamera, DegenerateConfiguration, NonConvergence

# Tolerance accepted when a Pose is built from external data (BOP files store
# rotations with ~8 significant digits). Loaders re-orthonormalize on read.
POSE_ATOL = 1e-6


def as_generator(seed):
    """Return a ``numpy.random.Generator`` (PCG64) for ``seed``.

    ``seed`` may be None, an int, or an existing Generator, which is returned as is.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def check_rotation(R, atol=1e-9):
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got shape {R.shape}")
    if not np.all(np.isfinite(R)):
        raise ValueError("rotation has non-finite entries")
    if np.abs(R @ R.T - np.eye(3)).max() > atol:
        raise ValueError("rotation is not orthonormal")
    if abs(np.linalg.det(R) - 1.0) > atol:
        raise ValueError("rotation is not proper (det != +1)")
    return R


def check_points(pts, name="points"):
    pts = np.asarray(pts, dtype=float)
    if pts.ndim == 1 and pts.shape[0] == 3:
        pts = pts[None, :]
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"{name} must have shape (n, 3), got {pts.shape}")
    if pts.shape[0] == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(pts)):
        raise ValueError(f"{name} has non-finite coordinates")
    return pts


def nearest_rotation(M):
    """Project a 3x3 matrix onto SO(3) in the Frobenius sense."""
    U, _, Vt = np.linalg.svd(np.asarray(M, dtype=float))
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt)) or 1.0])
    return U @ D @ Vt


def axis_angle(axis, angle):
    """Rotation matrix for a right-handed rotation of ``angle`` radians about ``axis``."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    x, y, z = axis
    c, s = math.cos(angle), math.sin(angle)
    C = 1.0 - c
    return np.array([
        [c + x * x * C, x * y * C - z * s, x * z * C + y * s],
        [y * x * C + z * s, c + y * y * C, y * z * C - x * s],
        [z * x * C - y * s, z * y * C + x * s, c + z * z * C],
    ])


def rot_x(angle):
    return axis_angle((1.0, 0.0, 0.0), angle)


def rot_y(angle):
    return axis_angle((0.0, 1.0, 0.0), angle)


def rot_z(angle):
    return axis_angle((0.0, 0.0, 1.0), angle)


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform ``x -> R @ x + t`` (rotation ``R``, translation ``t`` in meters)."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        R = check_rotation(np.array(self.R, dtype=float), atol=POSE_ATOL)
        t = np.array(self.t, dtype=float).reshape(-1)
        if t.shape != (3,):
            raise ValueError(f"translation must have 3 entries, got {t.shape}")
        if not np.all(np.isfinite(t)):
            raise ValueError("translation has non-finite entries")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_rotation(cls, R):
        return cls(R, np.zeros(3))

    @classmethod
    def from_translation(cls, t):
        return cls(np.eye(3), t)

    @classmethod
    def from_matrix(cls, T):
        T = np.asarray(T, dtype=float)
        return cls(T[:3, :3], T[:3, 3])

    def as_matrix(self):
        T = np.eye(4)
        T[:3, :3] = self.R
        T[:3, 3] = self.t
        return T

    def __matmul__(self, other):
        if isinstance(other, Pose):
            return compose(self, other)
        return transform_points(self, other)

    def __repr__(self):
        return f"Pose(R={self.R.tolist()}, t={self.t.tolist()})"


# Products are spelled out term by term instead of calling BLAS so that single and
# batched evaluations round identically; symmetry metrics rely on pred = gt o S
# reproducing gt o S bit for bit.


def matmul3(A, B):
    """``A @ B`` for (..., 3, 3) stacks with a fixed summation order."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    return (A[..., :, 0, None] * B[..., None, 0, :]
            + A[..., :, 1, None] * B[..., None, 1, :]
            + A[..., :, 2, None] * B[..., None, 2, :])


def apply_rt(R, t, pts):
    """``pts @ R.T + t``; ``R`` and ``t`` may carry a leading batch axis (m, 3, 3) / (m, 3)."""
    R = np.asarray(R, dtype=float)
    t = np.asarray(t, dtype=float)
    if R.ndim == 3:
        R = R[:, None]
        t = t[:, None]
    return (pts[..., 0, None] * R[..., :, 0]
            + pts[..., 1, None] * R[..., :, 1]
            + pts[..., 2, None] * R[..., :, 2]) + t


def transform_points(pose, pts):
    """Apply ``pose`` to every row of ``pts``; order and length are preserved."""
    pts = check_points(pts)
    return apply_rt(pose.R, pose.t, pts)


def compose(a, b):
    """Pose equivalent to applying ``b`` first, then ``a``."""
    return Pose(matmul3(a.R, b.R), apply_rt(a.R, a.t, b.t[None, :])[0])


def inverse(a):
    Rt = a.R.T
    return Pose(Rt, -(Rt @ a.t))


def pose_allclose(a, b, atol=1e-9):
    return np.allclose(a.R, b.R, rtol=0, atol=atol) and np.allclose(a.t, b.t, rtol=0, atol=atol)


def kabsch(src, dst):
    """Least-squares rigid transform mapping ``src`` onto ``dst``.

    Minimizes ``sum ||R @ src[i] + t - dst[i]||^2`` over proper rotations via an
    SVD of the 3x3 cross-covariance with the usual reflection fix.

    Raises:
        DegenerateConfiguration: fewer than 3 points, mismatched lengths, or the
            centered source has rank < 2 (all points collinear).
    """
    src = check_points(src, "src")
    dst = check_points(dst, "dst")
    if src.shape != dst.shape:
        raise DegenerateConfiguration(f"src and dst differ in length ({len(src)} vs {len(dst)})")
    if len(src) < 3:
        raise DegenerateConfiguration("need at least 3 correspondences")
    src_mean = src.mean(axis=0)
    dst_mean = dst.mean(axis=0)
    A = src - src_mean
    B = dst - dst_mean
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[0] == 0.0 or sv[1] <= 1e-12 * sv[0]:
        raise DegenerateConfiguration("source points are collinear or coincident")
    U, _, Vt = np.linalg.svd(A.T @ B)
    d = np.sign(np.linalg.det(Vt.T @ U.T)) or 1.0
    R = Vt.T @ np.diag([1.0, 1.0, d]) @ U.T
    return Pose(R, dst_mean - R @ src_mean)


class RobustFit(NamedTuple):
    pose: Pose
    inliers: np.ndarray
    residual_rms: float
    n_iter: int


def robust_procrustes(src, dst, trim_fraction=0.2, max_iter=20, min_threshold=1e-6, k_sigma=3.0):
    """Kabsch alignment with iterative trimming of gross outliers.

    Each round refits on the current inliers, then recomputes residuals for all
    correspondences. A correspondence is dropped only if it is among the
    ``floor(trim_fraction * n)`` worst residuals *and* its residual exceeds
    ``max(min_threshold, k_sigma * 1.4826 * median residual)``, so clean data keeps
    every point. Iteration stops once the inlier set repeats.

    Returns:
        RobustFit with the pose, boolean inlier flags, the RMS residual over
        inliers (meters), and the number of rounds used.

    Raises:
        DegenerateConfiguration: as :func:`kabsch`, or fewer than 3 inliers remain.
        NonConvergence: the inlier set still changes after ``max_iter`` rounds.
    """
    if not 0.0 <= trim_fraction < 0.5:
        raise ValueError("trim_fraction must lie in [0, 0.5)")
    src = check_points(src, "src")
    dst = check_points(dst, "dst")
    if src.shape != dst.shape:
        raise DegenerateConfiguration("src and dst differ in length")
    n = len(src)
    n_trim = int(math.floor(trim_fraction * n))
    if n - n_trim < 3:
        raise DegenerateConfiguration("fewer than 3 correspondences survive trimming")

    inliers = np.ones(n, dtype=bool)
    for it in range(1, max_iter + 1):
        pose = kabsch(src[inliers], dst[inliers])
        res = np.linalg.norm(transform_points(pose, src) - dst, axis=1)
        threshold = max(min_threshold, k_sigma * 1.4826 * float(np.median(res)))
        # stable sort keeps the choice deterministic under equal residuals
        worst = np.argsort(-res, kind="stable")[:n_trim]
        new = np.ones(n, dtype=bool)
        new[worst[res[worst] > threshold]] = False
        if np.array_equal(new, inliers):
            rms = float(np.sqrt(np.mean(res[inliers] ** 2)))
            return RobustFit(pose, inliers, rms, it)
        inliers = new
    raise NonConvergence(f"inlier set did not stabilize within {max_iter} iterations")


@dataclass(frozen=True)
class PinholeCamera:
    """Pinhole intrinsics in pixels. ``(u, v) = (fx*x/z + cx, fy*y/z + cy)``."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if int(self.width) <= 0 or int(self.height) <= 0:
            raise ValueError("image size must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def K(self):
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @classmethod
    def from_K(cls, K, width, height):
        K = np.asarray(K, dtype=float).reshape(3, 3)
        return cls(K[0, 0], K[1, 1], K[0, 2], K[1, 2], int(width), int(height))

    def project_points(self, pts):
        """Vectorized projection; returns ``(uv, z)`` and raises if any z <= 0."""
        pts = check_points(pts)
        z = pts[:, 2]
        if np.any(z <= 0):
            raise BehindCamera("point at or behind the camera plane")
        uv = np.empty((len(pts), 2))
        uv[:, 0] = self.fx * pts[:, 0] / z + self.cx
        uv[:, 1] = self.fy * pts[:, 1] / z + self.cy
        return uv, z


def project(cam, pt):
    x, y, z = (float(c) for c in np.asarray(pt, dtype=float).reshape(3))
    if not z > 0:
        raise BehindCamera(f"depth {z} is not positive")
    return cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy, z


def unproject(cam, u, v, z):
    if not z > 0:
        raise BehindCamera(f"depth {z} is not positive")
    return np.array([(u - cam.cx) * z / cam.fx, (v - cam.cy) * z / cam.fy, float(z)])


def check_depth_map(depth, cam=None):
    depth = np.asarray(depth, dtype=float)
    if depth.ndim != 2:
        raise ValueError("depth map must be 2-D")
    if cam is not None and depth.shape != (cam.height, cam.width):
        raise ValueError(f"depth map shape {depth.shape} does not match camera {(cam.height, cam.width)}")
    if not np.all(np.isfinite(depth)) or np.any(depth < 0):
        raise ValueError("depth values must be finite and >= 0")
    return depth


def _quaternion_to_matrix(q):
    x, y, z, w = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def random_rotation(seed=None):
    """Uniform random rotation (Shoemake's unit-quaternion method).

    ``seed`` is an int or a ``numpy.random.Generator``; with an int the result is
    reproducible bit for bit (PCG64 stream, three uniform draws).
    """
    rng = as_generator(seed)
    u1, u2, u3 = rng.random(3)
    a, b = math.sqrt(1.0 - u1), math.sqrt(u1)
    q = (a * math.sin(2 * math.pi * u2), a * math.cos(2 * math.pi * u2),
         b * math.sin(2 * math.pi * u3), b * math.cos(2 * math.pi * u3))
    return _quaternion_to_matrix(q)


def random_unit_vector(seed=None):
    rng = as_generator(seed)
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def rotation_angle(a, b):
    """Geodesic distance between two rotations, in radians within [0, pi]."""
    M = np.asarray(a, dtype=float).T @ np.asarray(b, dtype=float)
    cos = (np.trace(M) - 1.0) / 2.0
    sin = 0.5 * np.linalg.norm([M[2, 1] - M[1, 2], M[0, 2] - M[2, 0], M[1, 0] - M[0, 1]])
    return float(math.atan2(sin, cos))
