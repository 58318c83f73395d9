"""Matching predictions to ground truth, detection-rate curves and result tables.

Distances are meters internally; report rows are expressed in centimeters and
percentages.
"""

from __future__ import annotations

import math
import statistics
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .exceptions import MissingModel
from .geometry import Pose
from .metrics import MetricKind, pose_error

REPORT_THRESHOLDS_CM = (2.0, 10.0)
TRUE_POSITIVE_THRESHOLD_CM = 10.0


def default_curve_thresholds_cm(lo=0.5, hi=10.0, step=0.1):
    n = int(round((hi - lo) / step))
    return tuple(round(lo + i * step, 10) for i in range(n + 1))


@dataclass(frozen=True, eq=False)
class GroundTruthInstance:
    scene_id: int
    image_id: int
    object_id: int
    pose: Pose
    visibility: float | None = None
    tag: str | None = None

    def __post_init__(self):
        if min(self.scene_id, self.image_id, self.object_id) < 0:
            raise ValueError("ids must be >= 0")
        if self.visibility is not None and not 0.0 <= self.visibility <= 1.0:
            raise ValueError("visibility must lie in [0, 1]")

    @property
    def image_key(self):
        return (self.scene_id, self.image_id)


@dataclass(frozen=True, eq=False)
class Prediction:
    scene_id: int
    image_id: int
    object_id: int
    pose: Pose
    score: float
    time: float | None = None

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise ValueError("prediction score must be finite")

    @property
    def image_key(self):
        return (self.scene_id, self.image_id)


def _pose_key(pose):
    return tuple(pose.t.tolist()) + tuple(pose.R.ravel().tolist())


def _gt_order(g):
    return (g.scene_id, g.image_id, g.object_id) + _pose_key(g.pose)


def _pred_order(p):
    # descending confidence; the remaining fields make ties independent of input order
    return (-p.score, p.scene_id, p.image_id, p.object_id) + _pose_key(p.pose)


@dataclass(frozen=True)
class Match:
    gt: GroundTruthInstance
    pred: Prediction
    error: float


@dataclass
class MatchSet:
    matched: list = field(default_factory=list)
    unmatched_gt: list = field(default_factory=list)
    unmatched_pred: list = field(default_factory=list)

    def extend(self, other):
        self.matched.extend(other.matched)
        self.unmatched_gt.extend(other.unmatched_gt)
        self.unmatched_pred.extend(other.unmatched_pred)


@dataclass(frozen=True, eq=False)
class _ClassErrors:
    gts: list
    preds: list
    errors: np.ndarray  # (len(preds), len(gts)), meters


def _lookup(models, object_id):
    try:
        return models[object_id]
    except KeyError:
        raise MissingModel(object_id) from None


def _image_errors(gts, preds, metric, models):
    """Per object class: canonically ordered records and the pred x gt error matrix."""
    by_class = defaultdict(lambda: ([], []))
    for g in gts:
        by_class[g.object_id][0].append(g)
    for p in preds:
        by_class[p.object_id][1].append(p)
    out = {}
    for obj in sorted(by_class):
        cg, cp = by_class[obj]
        cg = sorted(cg, key=_gt_order)
        cp = sorted(cp, key=_pred_order)
        err = np.empty((len(cp), len(cg)))
        if cg and cp:
            model = _lookup(models, obj)
            for i, p in enumerate(cp):
                for j, g in enumerate(cg):
                    err[i, j] = pose_error(metric, g.pose, p.pose, model)
        out[obj] = _ClassErrors(cg, cp, err)
    return out


def _greedy(ce, threshold):
    """Confidence-ordered claiming: each prediction takes its closest free GT, kept if within threshold."""
    result = MatchSet()
    free = np.ones(len(ce.gts), dtype=bool)
    for i, p in enumerate(ce.preds):
        if not free.any():
            result.unmatched_pred.append(p)
            continue
        row = np.where(free, ce.errors[i], np.inf)
        j = int(np.argmin(row))
        if row[j] <= threshold:
            free[j] = False
            result.matched.append(Match(ce.gts[j], p, float(row[j])))
        else:
            result.unmatched_pred.append(p)
    result.unmatched_gt.extend(g for g, f in zip(ce.gts, free) if f)
    return result


def _check_models(gts, preds, models):
    for obj in sorted({r.object_id for r in list(gts) + list(preds)}):
        _lookup(models, obj)


def match_instances(gts, preds, metric, models, threshold):
    """Match the records of a single image at ``threshold`` meters.

    Within each object class, predictions are visited by descending score. Each
    claims the still-unmatched GT instance with the smallest error; the pair is
    kept if the error is at most ``threshold``, otherwise the prediction is
    unmatched and the GT stays available.

    Raises:
        MissingModel: a record refers to an object id absent from ``models``.
    """
    metric = MetricKind.parse(metric)
    _check_models(gts, preds, models)
    keys = {r.image_key for r in list(gts) + list(preds)}
    if len(keys) > 1:
        raise ValueError("match_instances expects records from a single image")
    result = MatchSet()
    for ce in _image_errors(gts, preds, metric, models).values():
        result.extend(_greedy(ce, threshold))
    return result


def group_by_image(gts, preds):
    groups = defaultdict(lambda: ([], []))
    for g in gts:
        groups[g.image_key][0].append(g)
    for p in preds:
        groups[p.image_key][1].append(p)
    return {k: groups[k] for k in sorted(groups)}


class ErrorTable:
    """Metric errors of every same-class (prediction, GT) pair, grouped by image.

    Errors are computed once (optionally on ``jobs`` threads) and reused for every
    threshold. Assembly order is fixed by the sorted image keys, so the result
    does not depend on ``jobs``.
    """

    def __init__(self, gts, preds, metric, models, jobs=1):
        self.metric = MetricKind.parse(metric)
        self.gts = list(gts)
        self.preds = list(preds)
        _check_models(self.gts, self.preds, models)
        groups = group_by_image(self.gts, self.preds)
        keys = list(groups)

        def work(key):
            g, p = groups[key]
            return _image_errors(g, p, self.metric, models)

        if jobs and jobs > 1 and len(keys) > 1:
            with ThreadPoolExecutor(max_workers=jobs) as ex:
                tables = list(ex.map(work, keys))
        else:
            tables = [work(k) for k in keys]
        self.images = dict(zip(keys, tables))

    def match(self, threshold):
        result = MatchSet()
        for key in self.images:
            for ce in self.images[key].values():
                result.extend(_greedy(ce, threshold))
        return result


def detection_curve(gts, preds, metric, models, thresholds_cm=None, jobs=1, table=None):
    """Recall (fraction of GT instances matched) at each threshold in centimeters.

    Returns a list of ``(threshold_cm, recall)`` pairs.
    """
    if not gts:
        raise ValueError("detection curve needs at least one ground-truth instance")
    thresholds_cm = default_curve_thresholds_cm() if thresholds_cm is None else thresholds_cm
    table = table or ErrorTable(gts, preds, metric, models, jobs=jobs)
    n = len(table.gts)
    return [(float(tau), len(table.match(tau / 100.0).matched) / n) for tau in thresholds_cm]


def _mean(values):
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


def _pct(num, den):
    return 100.0 * num / den if den else None


@dataclass
class ReportRow:
    """One line of the results table; lengths in cm, rates in percent, None when undefined."""

    name: str
    category: str
    n_gt: int
    n_pred: int
    diameter_cm: float | None
    visibility_pct: float | None
    distance_cm: float | None
    median_error_cm: float | None
    precision: dict
    recall: dict

    def as_dict(self):
        d = {
            "name": self.name,
            "category": self.category,
            "n_gt": self.n_gt,
            "n_pred": self.n_pred,
            "diameter_cm": self.diameter_cm,
            "visibility_pct": self.visibility_pct,
            "distance_cm": self.distance_cm,
            "median_error_cm": self.median_error_cm,
        }
        for tau, v in self.precision.items():
            d[f"precision@{tau:g}cm"] = v
        for tau, v in self.recall.items():
            d[f"recall@{tau:g}cm"] = v
        return d


@dataclass
class EvalReport:
    metric: MetricKind
    objects: list
    categories: list
    overall: ReportRow
    curve: list
    category_curves: dict

    def rows(self):
        return self.objects + self.categories + [self.overall]

    def as_dict(self):
        return {
            "metric": self.metric.label,
            "objects": [r.as_dict() for r in self.objects],
            "categories": [r.as_dict() for r in self.categories],
            "overall": self.overall.as_dict(),
            "curve": [{"threshold_cm": t, "recall_pct": 100.0 * r} for t, r in self.curve],
            "category_curves": {
                c: [{"threshold_cm": t, "recall_pct": 100.0 * r} for t, r in cur]
                for c, cur in self.category_curves.items()
            },
        }


def _row(name, category, gts, preds, matches_by_tau, tp_matches, thresholds, diameter_cm):
    vis = [g.visibility for g in gts if g.visibility is not None]
    tp = [m.error * 100.0 for m in tp_matches]
    return ReportRow(
        name=name,
        category=category,
        n_gt=len(gts),
        n_pred=len(preds),
        diameter_cm=diameter_cm,
        visibility_pct=100.0 * float(np.mean(vis)) if vis else None,
        distance_cm=100.0 * float(np.mean([np.linalg.norm(g.pose.t) for g in gts])) if gts else None,
        median_error_cm=float(statistics.median(tp)) if tp else None,
        precision={tau: _pct(len(matches_by_tau[tau]), len(preds)) for tau in thresholds},
        recall={tau: _pct(len(matches_by_tau[tau]), len(gts)) for tau in thresholds},
    )


def build_report(gts, preds, metric, models, thresholds_cm=REPORT_THRESHOLDS_CM,
                 tp_threshold_cm=TRUE_POSITIVE_THRESHOLD_CM, curve_thresholds_cm=None, jobs=1):
    """Per-object, per-category and overall result rows plus detection-rate curves.

    The median error is taken over true positives at ``tp_threshold_cm``.
    Precision is TP / predictions and recall TP / GT instances at each threshold;
    precision is None when there are no predictions. Category rows are
    equal-weight means of their object rows (skipping undefined cells); the
    overall row pools every instance.
    """
    if not gts:
        raise ValueError("report needs at least one ground-truth instance")
    metric = MetricKind.parse(metric)
    thresholds_cm = tuple(float(t) for t in thresholds_cm)
    table = ErrorTable(gts, preds, metric, models, jobs=jobs)
    all_taus = sorted(set(thresholds_cm) | {float(tp_threshold_cm)})
    matches = {tau: table.match(tau / 100.0).matched for tau in all_taus}

    def category_of(obj):
        return models[obj].symmetry_class.value

    object_ids = sorted({g.object_id for g in table.gts} | {p.object_id for p in table.preds})
    object_rows = []
    for obj in object_ids:
        og = [g for g in table.gts if g.object_id == obj]
        op = [p for p in table.preds if p.object_id == obj]
        by_tau = {tau: [m for m in matches[tau] if m.gt.object_id == obj] for tau in all_taus}
        object_rows.append(_row(str(obj), category_of(obj), og, op, by_tau, by_tau[float(tp_threshold_cm)],
                                thresholds_cm, 100.0 * models[obj].diameter))

    category_rows = []
    for cat in sorted({r.category for r in object_rows}):
        rows = [r for r in object_rows if r.category == cat]
        category_rows.append(ReportRow(
            name=f"mean:{cat}",
            category=cat,
            n_gt=sum(r.n_gt for r in rows),
            n_pred=sum(r.n_pred for r in rows),
            diameter_cm=_mean(r.diameter_cm for r in rows),
            visibility_pct=_mean(r.visibility_pct for r in rows),
            distance_cm=_mean(r.distance_cm for r in rows),
            median_error_cm=_mean(r.median_error_cm for r in rows),
            precision={tau: _mean(r.precision[tau] for r in rows) for tau in thresholds_cm},
            recall={tau: _mean(r.recall[tau] for r in rows) for tau in thresholds_cm},
        ))

    overall = _row("overall", "all", table.gts, table.preds, matches, matches[float(tp_threshold_cm)],
                   thresholds_cm, _mean(100.0 * models[o].diameter for o in object_ids))

    curve_taus = default_curve_thresholds_cm() if curve_thresholds_cm is None else curve_thresholds_cm
    curve = detection_curve(table.gts, table.preds, metric, models, curve_taus, table=table)
    category_curves = {}
    for cat in sorted({r.category for r in object_rows}):
        n = sum(1 for g in table.gts if category_of(g.object_id) == cat)
        if not n:
            continue
        category_curves[cat] = [
            (float(tau), sum(1 for m in table.match(tau / 100.0).matched
                             if category_of(m.gt.object_id) == cat) / n)
            for tau in curve_taus
        ]
    return EvalReport(metric, object_rows, category_rows, overall, curve, category_curves)


@dataclass
class ObjectStats:
    object_id: int
    count: int
    diameter_cm: float | None
    distance_cm: float
    visibility_pct: float | None


def dataset_stats(gts, models=None):
    """Per-object instance counts, mean camera distance and visibility, plus an overall summary."""
    by_obj = defaultdict(list)
    for g in gts:
        by_obj[g.object_id].append(g)
    rows = []
    for obj in sorted(by_obj):
        items = by_obj[obj]
        vis = [g.visibility for g in items if g.visibility is not None]
        rows.append(ObjectStats(
            object_id=obj,
            count=len(items),
            diameter_cm=100.0 * models[obj].diameter if models and obj in models else None,
            distance_cm=100.0 * float(np.mean([np.linalg.norm(g.pose.t) for g in items])),
            visibility_pct=100.0 * float(np.mean(vis)) if vis else None,
        ))
    dists = [100.0 * float(np.linalg.norm(g.pose.t)) for g in gts]
    vis = [g.visibility for g in gts if g.visibility is not None]
    summary = {
        "instances": len(dists),
        "distance_cm_min": min(dists) if dists else None,
        "distance_cm_max": max(dists) if dists else None,
        "distance_cm_mean": float(np.mean(dists)) if dists else None,
        "visibility_pct_mean": 100.0 * float(np.mean(vis)) if vis else None,
    }
    return rows, summary
