"""Discrete symmetry sets for the three geometric object categories.

Canonical object frame: ``z`` is the vertical axis and ``x`` points to the
front. Meshes in another convention are re-oriented when they are loaded (see
``poseval.io.load_models_config``).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .exceptions import InvalidIncrement
from .geometry import rot_x, rot_y, rot_z


class SymmetryClass(str, enum.Enum):
    CYLINDER = "cylinder"
    CUBOID = "cuboid"
    BOTTLE = "bottle"
    NONE = "none"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "").replace("-", "")
        aliases = {"nosymmetry": cls.NONE, "asymmetric": cls.NONE, "": cls.NONE}
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown symmetry class {value!r}") from None


@dataclass(frozen=True, eq=False)
class SymmetrySet:
    """Ordered, duplicate-free rotations about the object origin; element 0 is the identity."""

    rotations: tuple
    symmetry_class: SymmetryClass
    increment_deg: float

    def __len__(self):
        return len(self.rotations)

    def __iter__(self):
        return iter(self.rotations)

    def __getitem__(self, i):
        return self.rotations[i]

    def as_array(self):
        return np.stack(self.rotations)


def _freeze(R):
    R = np.array(R, dtype=float)
    R.setflags(write=False)
    return R


def generate_symmetries(symmetry_class, increment_deg=1.0):
    """Build the symmetry set of a category.

    * cylinder: every rotation about z at ``increment_deg`` steps, each with and
      without a 180 degree flip about x (``2 * 360 / increment`` elements)
    * cuboid: identity and 180 degree turns about x, y and z
    * bottle: identity and a 180 degree turn about z
    * none: identity only

    Raises:
        InvalidIncrement: ``increment_deg`` is not positive or does not divide 360.
    """
    cls = SymmetryClass.parse(symmetry_class)
    increment_deg = float(increment_deg)
    if not increment_deg > 0:
        raise InvalidIncrement(f"increment must be positive, got {increment_deg}")
    steps = 360.0 / increment_deg
    if abs(steps - round(steps)) > 1e-9:
        raise InvalidIncrement(f"{increment_deg} deg does not divide 360")

    if cls is SymmetryClass.NONE:
        rots = [np.eye(3)]
    elif cls is SymmetryClass.BOTTLE:
        rots = [np.eye(3), rot_z(math.pi)]
    elif cls is SymmetryClass.CUBOID:
        rots = [np.eye(3), rot_x(math.pi), rot_y(math.pi), rot_z(math.pi)]
    else:
        flip = rot_x(math.pi)
        sweep = [np.eye(3)] + [rot_z(math.radians(k * increment_deg)) for k in range(1, int(round(steps)))]
        rots = sweep + [R @ flip for R in sweep]
    return SymmetrySet(tuple(_freeze(R) for R in rots), cls, increment_deg)


def min_pairwise_angle(symset):
    """Smallest geodesic distance between two distinct elements (radians)."""
    R = symset.as_array()
    n = len(R)
    if n < 2:
        return math.inf
    best = math.inf
    for i in range(n - 1):
        M = np.einsum("ji,njk->nik", R[i], R[i + 1:])
        cos = np.clip((np.trace(M, axis1=1, axis2=2) - 1.0) / 2.0, -1.0, 1.0)
        best = min(best, float(np.arccos(cos).min()))
    return best


def is_closed(symset, atol=1e-9):
    """Whether the product of any two elements is again (numerically) an element."""
    R = symset.as_array()
    tree = cKDTree(R.reshape(len(R), 9))
    for A in R:
        prods = np.einsum("ij,njk->nik", A, R).reshape(len(R), 9)
        dist, _ = tree.query(prods, p=np.inf)
        if np.any(dist > atol):
            return False
    return True


__all__ = [
    "SymmetryClass",
    "SymmetrySet",
    "generate_symmetries",
    "is_closed",
    "min_pairwise_angle",
]
