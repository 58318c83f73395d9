"""Procedures around the data: depth-scale calibration, line-search depth
refinement of predicted poses, cross-view annotation validation and Nakagami
fitting of error samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .exceptions import (
    DegenerateSamples,
    EmptyInput,
    NonPositiveDepth,
    NoValidPixels,
    TooFewObjects,
)
from .geometry import Pose, as_generator, check_depth_map, compose, inverse, robust_procrustes, transform_points
from .metrics import add

# -- depth scale ---------------------------------------------------------------------


@dataclass(frozen=True)
class DepthCalibration:
    scale: float
    mae_before: float
    mae_after: float
    sample_count: int


def fit_depth_scale(reference_depths, measured_depths):
    """Least-squares scale ``s`` with ``s * measured ~ reference``.

    ``s = sum(m * r) / sum(m * m)``. The mean absolute difference is reported
    before (``s = 1``) and after scaling.
    """
    r = np.asarray(reference_depths, dtype=float).ravel()
    m = np.asarray(measured_depths, dtype=float).ravel()
    if r.size == 0 or m.size == 0:
        raise EmptyInput("no depth pairs given")
    if r.shape != m.shape:
        raise ValueError(f"got {r.size} reference but {m.size} measured depths")
    if not (np.all(np.isfinite(r)) and np.all(np.isfinite(m))):
        raise ValueError("depths must be finite")
    if np.any(r <= 0) or np.any(m <= 0):
        raise NonPositiveDepth("all depths must be positive")
    scale = float(np.dot(m, r) / np.dot(m, m))
    return DepthCalibration(
        scale=scale,
        mae_before=float(np.mean(np.abs(m - r))),
        mae_after=float(np.mean(np.abs(scale * m - r))),
        sample_count=int(r.size),
    )


# -- line-search depth refinement ----------------------------------------------------


@dataclass(frozen=True, eq=False)
class LineSearchResult:
    pose: Pose
    alpha: float
    objective: float
    alphas: np.ndarray
    objectives: np.ndarray


def _auto_cell_px(uv, n_points):
    lo, hi = uv.min(axis=0), uv.max(axis=0)
    area = max(1.0, float(np.prod(hi - lo + 1.0)))
    # about eight projected model points per visibility cell over the bounding box
    return max(1, int(round(math.sqrt(8.0 * area / max(n_points, 1)))))


def depth_residuals(pose, model, cam, depth, mask=None, eps=0.005, cell_px=1):
    """Absolute depth residuals (meters) of the visible model points that hit valid pixels.

    A point is visible if its depth is within ``eps`` of the smallest model-point
    depth in its ``cell_px x cell_px`` pixel cell. Pixels with depth 0, or outside
    ``mask`` when one is given, are skipped.
    """
    pts = transform_points(pose, model.points)
    z = pts[:, 2]
    front = z > 0
    if not np.any(front):
        return np.empty(0)
    pts, z = pts[front], z[front]
    u = np.floor(cam.fx * pts[:, 0] / z + cam.cx).astype(np.int64)
    v = np.floor(cam.fy * pts[:, 1] / z + cam.cy).astype(np.int64)
    inside = (u >= 0) & (u < cam.width) & (v >= 0) & (v < cam.height)
    u, v, z = u[inside], v[inside], z[inside]
    if z.size == 0:
        return np.empty(0)
    ncx = cam.width // cell_px + 1
    cell = (v // cell_px) * ncx + (u // cell_px)
    zmin = np.full(int(cell.max()) + 1, np.inf)
    np.minimum.at(zmin, cell, z)
    visible = z <= zmin[cell] + eps
    measured = depth[v, u]
    keep = visible & (measured > 0)
    if mask is not None:
        keep &= mask[v, u]
    return np.abs(z[keep] - measured[keep])


def refine_depth_ls(pose, model, cam, depth, alpha_range=(0.7, 1.3), steps=121, mask=None,
                    eps=0.005, cell_px=None):
    """Rescale a predicted translation so visible model points agree with a depth map.

    Candidates ``(R, alpha * t)`` for ``alpha`` on an even grid over ``alpha_range``
    are scored by the mean absolute depth residual from :func:`depth_residuals`;
    the lowest score wins (smallest alpha on ties). ``cell_px=None`` sizes the
    visibility cells from the projected extent of the model at ``alpha = 1``.

    Raises:
        NoValidPixels: no candidate projects any visible point onto a valid pixel.
    """
    if steps < 2:
        raise ValueError("steps must be >= 2")
    if not pose.t[2] > 0:
        raise ValueError("pose translation must have positive z")
    depth = check_depth_map(depth, cam)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != depth.shape:
            raise ValueError("mask shape must match the depth map")
    if cell_px is None:
        pts = transform_points(pose, model.points)
        ok = pts[:, 2] > 0
        if not np.any(ok):
            raise NoValidPixels("model lies behind the camera")
        uv = np.column_stack([cam.fx * pts[ok, 0] / pts[ok, 2] + cam.cx,
                              cam.fy * pts[ok, 1] / pts[ok, 2] + cam.cy])
        cell_px = _auto_cell_px(uv, int(ok.sum()))
    alphas = np.linspace(alpha_range[0], alpha_range[1], steps)
    scores = np.full(steps, np.inf)
    for i, a in enumerate(alphas):
        res = depth_residuals(Pose(pose.R, a * pose.t), model, cam, depth, mask, eps, cell_px)
        if res.size:
            scores[i] = res.mean()
    if not np.any(np.isfinite(scores)):
        raise NoValidPixels("no projected model point hits a valid depth pixel")
    best = int(np.argmin(scores))
    a = float(alphas[best])
    return LineSearchResult(Pose(pose.R, a * pose.t), a, float(scores[best]), alphas, scores)


def render_point_depth(points_cam, cam):
    """Z-buffer of camera-frame points splatted to single pixels (0 where empty).

    A deliberately simple renderer for synthetic tests and demos.
    """
    pts = np.asarray(points_cam, dtype=float)
    pts = pts[pts[:, 2] > 0]
    u = np.floor(cam.fx * pts[:, 0] / pts[:, 2] + cam.cx).astype(np.int64)
    v = np.floor(cam.fy * pts[:, 1] / pts[:, 2] + cam.cy).astype(np.int64)
    ok = (u >= 0) & (u < cam.width) & (v >= 0) & (v < cam.height)
    flat = np.full(cam.width * cam.height, np.inf)
    np.minimum.at(flat, v[ok] * cam.width + u[ok], pts[ok, 2])
    flat[~np.isfinite(flat)] = 0.0
    return flat.reshape(cam.height, cam.width)


# -- cross-view validation -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ViewValidationResult:
    object_id: int
    add_error: float
    extrinsics: Pose  # maps view-A camera coordinates to view-B camera coordinates
    inliers: np.ndarray
    residual_rms: float


def frame_points(pose, half_diameter):
    """Object origin and the three axis tips at ``half_diameter``, placed by ``pose``."""
    local = np.vstack([np.zeros(3), half_diameter * np.eye(3)])
    return transform_points(pose, local)


def _as_dict(view, name):
    out = {}
    for obj, pose in view:
        obj = int(obj)
        if obj in out:
            raise ValueError(f"object {obj} appears twice in view {name}")
        out[obj] = pose
    return out


def cross_view_validate(view_a, view_b, models, trim_fraction=0.2, half_diameters=None):
    """Leave-one-out transfer of annotated poses between two views of a static scene.

    For each object present in both views, the view-A to view-B extrinsics are
    estimated with :func:`robust_procrustes` from the frame points of all *other*
    common objects; the held-out pose is carried over to view B and scored with ADD
    against its own view-B annotation.

    Args:
        view_a, view_b: iterables of ``(object_id, Pose)`` in each camera frame.
        models: mapping object_id -> SampledModel (ADD and default half-diameters).
        half_diameters: optional mapping object_id -> axis length in meters.

    Returns:
        list of ViewValidationResult ordered by object id.

    Raises:
        TooFewObjects: fewer than 4 objects are shared by the two views.
    """
    a = _as_dict(view_a, "a")
    b = _as_dict(view_b, "b")
    common = sorted(set(a) & set(b))
    if len(common) < 4:
        raise TooFewObjects(f"need at least 4 objects in both views, got {len(common)}")
    half = {o: (half_diameters[o] if half_diameters and o in half_diameters else models[o].diameter / 2)
            for o in common}
    src = {o: frame_points(a[o], half[o]) for o in common}
    dst = {o: frame_points(b[o], half[o]) for o in common}
    results = []
    for held in common:
        rest = [o for o in common if o != held]
        fit = robust_procrustes(np.vstack([src[o] for o in rest]), np.vstack([dst[o] for o in rest]),
                                trim_fraction=trim_fraction)
        transferred = compose(fit.pose, a[held])
        results.append(ViewValidationResult(
            object_id=held,
            add_error=add(b[held], transferred, models[held]),
            extrinsics=fit.pose,
            inliers=fit.inliers,
            residual_rms=fit.residual_rms,
        ))
    return results


def relative_pose(view_a_pose, view_b_pose):
    """Extrinsics mapping camera A to camera B implied by one object seen in both views."""
    return compose(view_b_pose, inverse(view_a_pose))


# -- Nakagami ------------------------------------------------------------------------


@dataclass(frozen=True)
class NakagamiFit:
    m: float
    omega: float
    sample_mean: float
    mode: float
    n: int

    @property
    def mean(self):
        """Mean of the fitted distribution."""
        return float(math.exp(gammaln(self.m + 0.5) - gammaln(self.m)) * math.sqrt(self.omega / self.m))


def nakagami_mode(m, omega):
    if m < 0.5:
        return 0.0
    return math.sqrt(omega * (2.0 * m - 1.0) / (2.0 * m))


def fit_nakagami(samples):
    """Method-of-moments Nakagami fit: ``omega = E[x^2]``, ``m = omega^2 / Var[x^2]``.

    Raises:
        DegenerateSamples: fewer than 3 samples, non-positive values, or zero
            variance of the squared samples.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 3:
        raise DegenerateSamples("need at least 3 samples")
    if not np.all(np.isfinite(x)) or np.any(x <= 0):
        raise DegenerateSamples("samples must be finite and positive")
    x2 = x * x
    omega = float(x2.mean())
    var = float(x2.var())
    if var <= 1e-15 * omega * omega:
        raise DegenerateSamples("squared samples have zero variance")
    m = omega * omega / var
    return NakagamiFit(m=m, omega=omega, sample_mean=float(x.mean()), mode=nakagami_mode(m, omega),
                       n=int(x.size))


def sample_nakagami(m, omega, size, seed=None):
    """Draw Nakagami(m, omega) samples as square roots of Gamma(m, scale=omega/m) draws."""
    rng = as_generator(seed)
    return np.sqrt(rng.gamma(shape=m, scale=omega / m, size=size))
