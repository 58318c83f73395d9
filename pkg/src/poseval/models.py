"""Object models as used by the metrics: a bounded vertex subsample plus metadata."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .geometry import check_points
from .symmetry import SymmetryClass, SymmetrySet, generate_symmetries

DEFAULT_N_POINTS = 500


def subsample(points, k=DEFAULT_N_POINTS):
    """Indices of a farthest-point subsample of ``points``, sorted ascending.

    Sampling starts at the lexicographically smallest vertex (by x, then y, then
    z) and repeatedly adds the vertex farthest from the current sample, taking the
    lowest index on ties. If ``k >= len(points)`` all indices are returned.
    """
    points = check_points(points)
    if k < 1:
        raise ValueError("k must be >= 1")
    n = len(points)
    if k >= n:
        return np.arange(n)
    first = int(np.lexsort(points.T[::-1])[0])
    chosen = np.empty(k, dtype=np.intp)
    chosen[0] = first
    dist = np.linalg.norm(points - points[first], axis=1)
    for i in range(1, k):
        nxt = int(np.argmax(dist))
        chosen[i] = nxt
        np.minimum(dist, np.linalg.norm(points - points[nxt], axis=1), out=dist)
    return np.sort(chosen)


def _max_pairwise(points, chunk=2048):
    best = 0.0
    for s in range(0, len(points), chunk):
        block = points[s:s + chunk]
        d2 = ((block[:, None, :] - points[None, :, :]) ** 2).sum(axis=2)
        best = max(best, float(d2.max()))
    return math.sqrt(best)


def diameter(points):
    """Largest distance between any two vertices (hull vertices only when possible)."""
    points = np.unique(check_points(points), axis=0)
    if len(points) > 16:
        try:
            points = points[ConvexHull(points).vertices]
        except QhullError:
            # flat or collinear input: fall back to all points
            pass
    return _max_pairwise(points)


@dataclass(frozen=True, eq=False)
class SampledModel:
    """Vertex subsample of an object mesh, in meters and in the object frame.

    ``diameter`` is measured on the full vertex set, not on the subsample.
    """

    points: np.ndarray
    source_count: int
    diameter: float
    symmetries: SymmetrySet = field(default_factory=lambda: generate_symmetries("none"))
    object_id: int = 0
    indices: np.ndarray = None

    def __post_init__(self):
        pts = check_points(self.points).copy()
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if len(pts) > self.source_count:
            raise ValueError("sample is larger than the source vertex set")
        if not self.diameter > 0:
            raise ValueError("diameter must be positive")

    @classmethod
    def from_vertices(cls, vertices, symmetry_class="none", object_id=0, k=DEFAULT_N_POINTS,
                      increment_deg=1.0):
        vertices = check_points(vertices, "vertices")
        idx = subsample(vertices, k)
        return cls(
            points=vertices[idx],
            source_count=len(vertices),
            diameter=diameter(vertices),
            symmetries=generate_symmetries(symmetry_class, increment_deg),
            object_id=int(object_id),
            indices=idx,
        )

    @property
    def symmetry_class(self):
        return self.symmetries.symmetry_class

    def __len__(self):
        return len(self.points)


# -- procedural shapes ------------------------------------------------------------
# Each generator returns vertices (meters) whose set is mapped onto itself by every
# element of its category's symmetry set, and stays within the 500-vertex budget.


def cylinder_vertices(radius=0.035, height=0.10, n_axis=140):
    """A rim ring at mid-height sampled every 1 degree plus points along the axis.

    Only a full 360-vertex ring is invariant under every 1 degree rotation, so
    this is the densest cylinder-like set invariant under the cylinder group.
    """
    theta = np.radians(np.arange(360))
    ring = np.column_stack([radius * np.cos(theta), radius * np.sin(theta), np.zeros(360)])
    z = np.linspace(-height / 2, height / 2, n_axis)
    axis = np.column_stack([np.zeros(n_axis), np.zeros(n_axis), z])
    return np.vstack([ring, axis])


def cuboid_vertices(size=(0.06, 0.09, 0.14), n=8):
    """Regular grids on the six faces of a box centered at the origin."""
    hx, hy, hz = (s / 2 for s in size)
    g = np.linspace(-1.0, 1.0, n)
    a, b = np.meshgrid(g, g, indexing="ij")
    a, b = a.ravel(), b.ravel()
    faces = []
    for sign in (-1.0, 1.0):
        faces.append(np.column_stack([np.full_like(a, sign * hx), a * hy, b * hz]))
        faces.append(np.column_stack([a * hx, np.full_like(a, sign * hy), b * hz]))
        faces.append(np.column_stack([a * hx, b * hy, np.full_like(a, sign * hz)]))
    pts = np.vstack(faces)
    return np.unique(np.round(pts, 12), axis=0)


def bottle_vertices(width=0.07, depth=0.04, height=0.18, n_angles=24, n_rings=18):
    """Flattened bottle: elliptical sections narrowing into a neck, plus two axis points."""
    z = np.linspace(-height / 2, height / 2, n_rings)
    rel = (z - z[0]) / height
    taper = np.where(rel < 0.6, 1.0, 1.0 - 0.75 * np.clip((rel - 0.6) / 0.25, 0.0, 1.0))
    theta = np.radians(np.arange(n_angles) * 360.0 / n_angles)
    rings = [
        np.column_stack([
            0.5 * depth * s * np.cos(theta),
            0.5 * width * s * np.sin(theta),
            np.full(n_angles, zz),
        ])
        for zz, s in zip(z, taper)
    ]
    caps = np.array([[0.0, 0.0, -height / 2], [0.0, 0.0, height / 2]])
    return np.vstack(rings + [caps])


def procedural_model(symmetry_class, object_id=0, increment_deg=1.0, **shape):
    cls = SymmetryClass.parse(symmetry_class)
    if cls is SymmetryClass.CYLINDER:
        verts = cylinder_vertices(**shape)
    elif cls is SymmetryClass.CUBOID:
        verts = cuboid_vertices(**shape)
    elif cls is SymmetryClass.BOTTLE:
        verts = bottle_vertices(**shape)
    else:
        rng = np.random.default_rng(shape.pop("seed", 0))
        verts = rng.normal(scale=0.03, size=(shape.pop("n", 300), 3)) * np.array([1.0, 1.6, 2.2])
    return SampledModel.from_vertices(verts, cls, object_id=object_id, increment_deg=increment_deg)


def cylinder_surface(radius=0.035, height=0.10, n_theta=96, n_z=24, n_cap=6):
    """Dense cylinder surface (side wall plus cap discs), for rendering and sampling tests."""
    theta = np.linspace(0.0, 2 * np.pi, n_theta, endpoint=False)
    z = np.linspace(-height / 2, height / 2, n_z)
    T, Z = np.meshgrid(theta, z)
    side = np.column_stack([radius * np.cos(T).ravel(), radius * np.sin(T).ravel(), Z.ravel()])
    caps = []
    for r in np.linspace(0.0, radius, n_cap, endpoint=False)[1:]:
        m = max(6, int(n_theta * r / radius))
        th = np.linspace(0.0, 2 * np.pi, m, endpoint=False)
        for zz in (-height / 2, height / 2):
            caps.append(np.column_stack([r * np.cos(th), r * np.sin(th), np.full(m, zz)]))
    caps.append(np.array([[0.0, 0.0, -height / 2], [0.0, 0.0, height / 2]]))
    return np.vstack([side] + caps)


def box_surface(size=(0.06, 0.09, 0.14), n=24):
    return cuboid_vertices(size, n)
