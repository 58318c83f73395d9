import json

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from poseval import io as pio
from poseval.evaluation import GroundTruthInstance, Prediction
from poseval.geometry import Pose, random_rotation
from poseval.models import SampledModel, bottle_vertices, cuboid_vertices, cylinder_vertices, procedural_model

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def proc_models():
    return {
        1: procedural_model("cylinder", object_id=1),
        2: procedural_model("cuboid", object_id=2),
        3: procedural_model("bottle", object_id=3),
    }


@pytest.fixture(scope="session")
def small_models():
    """Light versions of the procedural shapes for fast property tests."""
    return {
        "cylinder": SampledModel.from_vertices(cylinder_vertices(n_axis=20), "cylinder", 1, k=120,
                                               increment_deg=30.0),
        "cuboid": SampledModel.from_vertices(cuboid_vertices(n=4), "cuboid", 2, k=80),
        "bottle": SampledModel.from_vertices(bottle_vertices(n_angles=8, n_rings=6), "bottle", 3, k=60),
    }


def random_pose(rng, scale=0.3):
    return Pose(random_rotation(rng), rng.uniform(-scale, scale, 3))


def offset_pose(pose, d):
    return Pose(pose.R, pose.t + np.asarray(d, dtype=float))


def crafted_records():
    """Three objects over two scenes; predictions sit 1, 3 and 12 cm from their GT."""
    base = {
        1: Pose(np.eye(3), [0.05, 0.0, 0.7]),
        2: Pose(np.eye(3), [-0.10, 0.05, 0.9]),
        3: Pose(np.eye(3), [0.00, -0.05, 0.8]),
    }
    where = {1: (1, 0), 2: (1, 0), 3: (2, 0)}
    shift = {1: [0.01, 0.0, 0.0], 2: [0.0, 0.03, 0.0], 3: [0.0, 0.0, 0.12]}
    gts = [GroundTruthInstance(*where[o], o, base[o], visibility=0.8) for o in (1, 2, 3)]
    preds = [Prediction(*where[o], o, offset_pose(base[o], shift[o]), score=0.9) for o in (1, 2, 3)]
    return gts, preds


def write_models(root, models_vertices):
    """Write each mesh as PLY (mm) and a models config next to them."""
    root.mkdir(parents=True, exist_ok=True)
    config = {}
    for obj, (verts, sym) in models_vertices.items():
        name = f"obj_{obj:06d}.ply"
        pio.write_ply(root / name, verts)
        config[str(obj)] = {"mesh": name, "symmetry": sym}
    path = root / "models.json"
    path.write_text(json.dumps(config))
    return path


@pytest.fixture
def crafted_dataset(tmp_path):
    """On-disk copy of :func:`crafted_records` with models, GT dirs and predictions."""
    gts, preds = crafted_records()
    verts = cuboid_vertices(n=4)
    models_path = write_models(tmp_path / "models", {o: (verts, "none") for o in (1, 2, 3)})
    gt_dir = tmp_path / "gt"
    for scene in (1, 2):
        pio.save_scene_gt(gt_dir / f"{scene:06d}" / "scene_gt.json", [g for g in gts if g.scene_id == scene])
    pred_path = tmp_path / "preds.csv"
    pio.save_predictions(pred_path, preds)
    return {"gt": gt_dir, "preds": pred_path, "models": models_path, "root": tmp_path}


# -- synthetic field scenes ---------------------------------------------------------------

from poseval.fieldcal import render_point_depth  # noqa: E402
from poseval.geometry import PinholeCamera, axis_angle, compose, random_unit_vector, transform_points  # noqa: E402
from poseval.models import box_surface, cylinder_surface  # noqa: E402

LS_CAMERA = PinholeCamera(600.0, 600.0, 320.0, 240.0, 640, 480)


@pytest.fixture(scope="session")
def ls_models():
    """Sampled models paired with the dense surfaces used to render their depth."""
    out = []
    for surf, cls in ((cylinder_surface(), "cylinder"), (box_surface(), "cuboid")):
        out.append((SampledModel.from_vertices(surf, cls, k=500), surf))
    return out


def ls_trial(rng, factor, ls_models, cam=LS_CAMERA):
    """True pose, rendered depth, and a prediction whose translation is scaled by ``factor``."""
    model, surface = ls_models[int(rng.integers(len(ls_models)))]
    t = np.array([rng.uniform(-0.15, 0.15), rng.uniform(-0.1, 0.1), rng.uniform(0.5, 1.2)])
    truth = Pose(random_rotation(rng), t)
    depth = render_point_depth(transform_points(truth, surface), cam)
    return model, truth, depth, Pose(truth.R, factor * truth.t)


def perturb(pose, rng, sigma, half_diameter):
    """Annotation noise: N(0, sigma) per translation axis and a small rotation about a random axis."""
    if sigma == 0:
        return pose
    dR = axis_angle(random_unit_vector(rng), rng.normal(scale=sigma / half_diameter))
    return Pose(pose.R @ dR, pose.t + rng.normal(scale=sigma, size=3))


def two_view_scene(seed, models, sigma=0.002):
    """Ten objects seen from two cameras related by a known rigid transform."""
    rng = np.random.default_rng(seed)
    ext = Pose(axis_angle(random_unit_vector(rng), np.pi / 2), rng.uniform(-0.3, 0.3, 3))
    view_a, view_b = [], []
    for obj, model in models.items():
        pose_a = Pose(random_rotation(rng), [rng.uniform(-0.3, 0.3), rng.uniform(-0.2, 0.2),
                                             rng.uniform(0.6, 1.2)])
        half = model.diameter / 2
        view_a.append((obj, perturb(pose_a, rng, sigma, half)))
        view_b.append((obj, perturb(compose(ext, pose_a), rng, sigma, half)))
    return view_a, view_b, ext


@pytest.fixture(scope="session")
def ten_models():
    classes = ("cylinder", "cuboid", "bottle")
    return {i: procedural_model(classes[i % 3], object_id=i) for i in range(10)}


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for num in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[num])
