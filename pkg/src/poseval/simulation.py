"""Metric comparison under a rotation followed by growing translations."""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .geometry import Pose, as_generator, random_rotation, random_unit_vector
from .metrics import MetricKind, pose_error

DEFAULT_METRICS = (MetricKind.ADD, MetricKind.ADDS, MetricKind.MEANSSD, MetricKind.ADDH)


class RotationMode(str, enum.Enum):
    SYMMETRY_PRESERVING = "symmetry_preserving"
    ARBITRARY = "arbitrary"
    IDENTITY = "identity"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        return cls(str(value).strip().lower().replace("-", "_"))


@dataclass
class SimulationTable:
    """``mean[metric][k]`` and ``std[metric][k]`` in cm at translation ``steps_cm[k]``."""

    mode: RotationMode
    steps_cm: list
    metrics: tuple
    mean: dict
    std: dict
    samples: dict  # metric -> (n_steps, trials * objects) raw errors in cm
    seed: int | None


def _draws(models, trials, mode, rng):
    """Rotation and unit direction for every (trial, object), drawn in a fixed order."""
    out = []
    for _ in range(trials):
        for model in models:
            if mode is RotationMode.SYMMETRY_PRESERVING:
                R = model.symmetries[int(rng.integers(len(model.symmetries)))]
            elif mode is RotationMode.ARBITRARY:
                R = random_rotation(rng)
            else:
                R = np.eye(3)
            out.append((model, np.array(R), random_unit_vector(rng)))
    return out


def simulate_metric_comparison(models, max_translation_cm=10.0, step_cm=1.0, trials=5,
                               rotation_mode=RotationMode.SYMMETRY_PRESERVING, seed=0,
                               metrics=DEFAULT_METRICS, jobs=1):
    """Average each metric over trials x objects as the prediction drifts away.

    For every trial and object a rotation is drawn (a random member of the
    object's symmetry set, a uniform random rotation, or the identity) together
    with a uniform random direction. The ground truth stays at the identity pose
    and the prediction is that rotation translated by ``k * step_cm`` along the
    direction, for ``k = 0 .. max_translation_cm / step_cm``.
    """
    if not models:
        raise ValueError("simulation needs at least one model")
    mode = RotationMode.parse(rotation_mode)
    metrics = tuple(MetricKind.parse(m) for m in metrics)
    n_steps = int(round(max_translation_cm / step_cm)) + 1
    steps_cm = [k * step_cm for k in range(n_steps)]
    draws = _draws(list(models), trials, mode, as_generator(seed))
    gt = Pose.identity()

    def run(draw):
        model, R, direction = draw
        vals = np.empty((len(metrics), n_steps))
        for k, d in enumerate(steps_cm):
            pred = Pose(R, direction * (d / 100.0))
            for m, kind in enumerate(metrics):
                vals[m, k] = 100.0 * pose_error(kind, gt, pred, model)
        return vals

    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(run, draws))
    else:
        results = [run(d) for d in draws]
    stacked = np.stack(results, axis=2)  # (metrics, steps, samples)
    return SimulationTable(
        mode=mode,
        steps_cm=steps_cm,
        metrics=metrics,
        mean={m: stacked[i].mean(axis=1) for i, m in enumerate(metrics)},
        std={m: stacked[i].std(axis=1) for i, m in enumerate(metrics)},
        samples={m: stacked[i] for i, m in enumerate(metrics)},
        seed=seed if isinstance(seed, (int, type(None))) else None,
    )
