"""Pose-error metrics: ADD, ADD-S, MeanSSD, MSSD and ADD-H.

All metrics take a ground-truth pose, a predicted pose and a
:class:`~poseval.models.SampledModel`, and return a distance in meters.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .assignment import solve_lap
from .geometry import apply_rt, matmul3, transform_points


class MetricKind(str, enum.Enum):
    ADD = "add"
    ADDS = "add-s"
    MEANSSD = "meanssd"
    MSSD = "mssd"
    ADDH = "add-h"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "").replace("-", "")
        table = {"add": cls.ADD, "adds": cls.ADDS, "meanssd": cls.MEANSSD, "mssd": cls.MSSD,
                 "addh": cls.ADDH}
        if key not in table:
            raise ValueError(f"unknown metric {value!r}; expected one of {[m.value for m in cls]}")
        return table[key]

    @property
    def label(self):
        return {"add": "ADD", "add-s": "ADD-S", "meanssd": "MeanSSD", "mssd": "MSSD",
                "add-h": "ADD-H"}[self.value]


def _placed(gt, pred, model):
    return transform_points(gt, model.points), transform_points(pred, model.points)


def add(gt, pred, model):
    """Mean distance between corresponding vertices under the two poses."""
    a, b = _placed(gt, pred, model)
    return float(np.linalg.norm(a - b, axis=1).mean())


def add_s(gt, pred, model):
    """Mean over ground-truth-placed vertices of the distance to the nearest predicted vertex."""
    a, b = _placed(gt, pred, model)
    return float(cdist(a, b).min(axis=1).mean())


def _symmetry_distances(gt, pred, model):
    # (|S_O|, k) distances ||gt(S x) - pred(x)|| for every symmetry S
    syms = model.symmetries.as_array()
    R = matmul3(gt.R, syms)
    t = np.broadcast_to(gt.t, (len(syms), 3))
    a = apply_rt(R, t, model.points)
    b = transform_points(pred, model.points)
    return np.linalg.norm(a - b[None], axis=2)


def mean_ssd_with_index(gt, pred, model):
    """MeanSSD and the index of the minimizing symmetry (first one on ties)."""
    per_sym = _symmetry_distances(gt, pred, model).mean(axis=1)
    i = int(np.argmin(per_sym))
    return float(per_sym[i]), i


def mean_ssd(gt, pred, model):
    return mean_ssd_with_index(gt, pred, model)[0]


def mssd_with_index(gt, pred, model):
    per_sym = _symmetry_distances(gt, pred, model).max(axis=1)
    i = int(np.argmin(per_sym))
    return float(per_sym[i]), i


def mssd(gt, pred, model):
    """Smallest, over the symmetry set, of the largest vertex displacement."""
    return mssd_with_index(gt, pred, model)[0]


def add_h(gt, pred, model):
    """Mean distance under the minimum-cost bijection between placed vertex sets.

    Builds ``cost[i, j] = ||gt(x_i) - pred(x_j)||`` and solves the linear sum
    assignment exactly, so no symmetry set is needed.
    """
    a, b = _placed(gt, pred, model)
    return solve_lap(cdist(a, b)).total_cost / len(a)


_FUNCS = {
    MetricKind.ADD: add,
    MetricKind.ADDS: add_s,
    MetricKind.MEANSSD: mean_ssd,
    MetricKind.MSSD: mssd,
    MetricKind.ADDH: add_h,
}


def pose_error(kind, gt, pred, model):
    """Dispatch to the metric named by ``kind`` (a MetricKind or its name)."""
    return _FUNCS[MetricKind.parse(kind)](gt, pred, model)


@dataclass(frozen=True)
class CorrespondenceMap:
    """Vertex pairing used by a metric.

    ``pairs[k] = (gt vertex index, pred vertex index)`` and ``distances[k]`` is the
    distance between those placed vertices. For MeanSSD/MSSD the ground-truth
    vertex is additionally moved by ``chosen_symmetry``.
    """

    metric: MetricKind
    pairs: np.ndarray
    distances: np.ndarray
    chosen_symmetry: int | None = None

    @property
    def error(self):
        if self.metric is MetricKind.MSSD:
            return float(self.distances.max())
        return float(self.distances.mean())


def correspondence_map(kind, gt, pred, model):
    kind = MetricKind.parse(kind)
    a, b = _placed(gt, pred, model)
    n = len(a)
    ident = np.column_stack([np.arange(n), np.arange(n)])
    if kind is MetricKind.ADD:
        return CorrespondenceMap(kind, ident, np.linalg.norm(a - b, axis=1))
    if kind is MetricKind.ADDS:
        d = cdist(a, b)
        nearest = d.argmin(axis=1)
        return CorrespondenceMap(kind, np.column_stack([np.arange(n), nearest]),
                                 d[np.arange(n), nearest])
    if kind is MetricKind.ADDH:
        d = cdist(a, b)
        perm = solve_lap(d).permutation
        return CorrespondenceMap(kind, np.column_stack([np.arange(n), perm]), d[np.arange(n), perm])
    dist = _symmetry_distances(gt, pred, model)
    score = dist.mean(axis=1) if kind is MetricKind.MEANSSD else dist.max(axis=1)
    i = int(np.argmin(score))
    return CorrespondenceMap(kind, ident, dist[i], chosen_symmetry=i)
