import json

import numpy as np
import pytest

from poseval import io as pio
from poseval.cli import main
from poseval.evaluation import Prediction
from poseval.fieldcal import render_point_depth
from poseval.geometry import Pose, random_rotation, transform_points
from poseval.models import cuboid_vertices

from conftest import LS_CAMERA, crafted_records, two_view_scene, write_models


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def eval_args(ds, out, *extra):
    return ("eval", "--gt", ds["gt"], "--predictions", ds["preds"], "--models", ds["models"],
            "--metric", "add", "--out", out, *extra)


def test_eval_fixture(crafted_dataset, capsys):
    out = crafted_dataset["root"] / "report"
    code, stdout, _ = run(capsys, *eval_args(crafted_dataset, out))
    assert code == 0
    report = json.loads(out.with_suffix(".json").read_text())
    overall = report["overall"]
    assert overall["recall@2cm"] == pytest.approx(100 / 3)
    assert overall["recall@10cm"] == pytest.approx(200 / 3)
    assert overall["median_error_cm"] == pytest.approx(2.0, abs=1e-9)
    assert report["meta"]["seed"] == 0 and report["meta"]["version"]
    csv_text = out.with_suffix(".csv").read_text()
    assert csv_text.startswith("# tool=poseval")
    curve = (crafted_dataset["root"] / "report_curve.csv").read_text().splitlines()
    assert curve[1] == "threshold_cm,recall" and len(curve) == 2 + 96
    assert "recall 33.33%" in stdout


def test_eval_parallel_byte_identical(crafted_dataset, capsys, monkeypatch):
    root = crafted_dataset["root"]
    assert run(capsys, *eval_args(crafted_dataset, root / "serial", "--jobs", 1))[0] == 0
    monkeypatch.setenv("POSEVAL_JOBS", "4")
    assert run(capsys, *eval_args(crafted_dataset, root / "serial", "--jobs", 4))[0] == 0
    first = (root / "serial.json").read_bytes()
    assert run(capsys, *eval_args(crafted_dataset, root / "serial", "--jobs", 1))[0] == 0
    assert (root / "serial.json").read_bytes() == first


def test_eval_missing_model(crafted_dataset, capsys):
    ds = crafted_dataset
    gts, preds = crafted_records()
    extra = Prediction(1, 0, 7, preds[0].pose, 0.3)
    pio.save_predictions(ds["preds"], preds + [extra])
    code, _, err = run(capsys, *eval_args(ds, ds["root"] / "r"))
    assert code == 3 and "7" in err
    assert not (ds["root"] / "r.json").exists()


def test_eval_malformed_predictions(crafted_dataset, capsys):
    ds = crafted_dataset
    lines = ds["preds"].read_text().splitlines()
    lines[2] = lines[2].replace(",0.9,", ",oops,")
    ds["preds"].write_text("\n".join(lines) + "\n")
    code, _, err = run(capsys, *eval_args(ds, ds["root"] / "r"))
    assert code == 2 and "preds.csv:3" in err


def test_eval_empty_predictions(crafted_dataset, capsys):
    ds = crafted_dataset
    ds["preds"].write_text(",".join(pio.PREDICTION_HEADER) + "\n")
    assert run(capsys, *eval_args(ds, ds["root"] / "r"))[0] == 0
    overall = json.loads((ds["root"] / "r.json").read_text())["overall"]
    assert overall["recall@10cm"] == 0.0 and overall["precision@10cm"] is None


def test_eval_missing_input_path(crafted_dataset, capsys):
    ds = dict(crafted_dataset, gt=crafted_dataset["root"] / "nowhere")
    assert run(capsys, *eval_args(ds, ds["root"] / "r"))[0] == 2


def test_eval_tag_filter(crafted_dataset, capsys):
    ds = crafted_dataset
    gts, _ = crafted_records()
    for scene in (1, 2):
        path = ds["gt"] / f"{scene:06d}" / "scene_gt.json"
        data = json.loads(path.read_text())
        for recs in data.values():
            for r in recs:
                r["tag"] = "dark" if scene == 1 else "bright"
        path.write_text(json.dumps(data))
    assert run(capsys, *eval_args(ds, ds["root"] / "r", "--tag", "dark"))[0] == 0
    overall = json.loads((ds["root"] / "r.json").read_text())["overall"]
    assert overall["n_gt"] == 2 and overall["recall@10cm"] == 100.0


def test_curve_and_stats(crafted_dataset, capsys):
    ds = crafted_dataset
    code, out, _ = run(capsys, "curve", "--gt", ds["gt"], "--predictions", ds["preds"], "--models", ds["models"],
                       "--metric", "add-h", "--min-cm", 1, "--max-cm", 4, "--step-cm", 1)
    assert code == 0
    assert out.splitlines()[2:] == ["1.000000,0.333333", "2.000000,0.333333", "3.000000,0.666667",
                                    "4.000000,0.666667"]
    code, out, _ = run(capsys, "stats", "--gt", ds["gt"])
    assert code == 0 and out.splitlines()[1].startswith("obj_id,count")


def test_simulate_byte_identical(tmp_path, capsys):
    args = ("simulate", "--trials", 1, "--max-cm", 2, "--seed", 5)
    assert run(capsys, *args, "--out", tmp_path / "a.csv")[0] == 0
    assert run(capsys, *args, "--out", tmp_path / "b.csv", "--jobs", 3)[0] == 0
    a = (tmp_path / "a.csv").read_text()
    assert a.splitlines()[1] == "mode,translation_cm,metric,mean_cm,std_cm"
    assert a.split("\n", 1)[1] == (tmp_path / "b.csv").read_text().split("\n", 1)[1]
    assert run(capsys, *args, "--out", tmp_path / "a.csv")[0] == 0
    assert (tmp_path / "a.csv").read_text() == a
    modes = {line.split(",")[0] for line in a.splitlines()[2:]}
    assert modes == {"symmetry_preserving", "arbitrary"}


def test_simulate_identity_mode_step_zero(capsys):
    code, out, _ = run(capsys, "simulate", "--trials", 1, "--max-cm", 1, "--modes", "identity")
    assert code == 0
    rows = [line.split(",") for line in out.splitlines()[2:]]
    assert all(float(r[3]) == 0.0 for r in rows if r[1] == "0.000000")


def test_simulate_bad_config(tmp_path, capsys):
    (tmp_path / "m.json").write_text("{not json")
    assert run(capsys, "simulate", "--models", tmp_path / "m.json")[0] == 2


def test_lap_example(tmp_path, capsys):
    (tmp_path / "c.csv").write_text("1,2,3\n2,4,6\n3,6,9\n")
    code, out, _ = run(capsys, "lap", "--matrix", tmp_path / "c.csv")
    assert code == 0 and "cost 10" in out and "permutation 2 1 0" in out


def test_lap_bench(capsys):
    code, out, _ = run(capsys, "lap", "--bench", 50, "--repeats", 2)
    assert code == 0 and out.startswith("n=50")


def test_lap_bad_matrix(tmp_path, capsys):
    (tmp_path / "c.csv").write_text("1,2\n3,nan\n")
    assert run(capsys, "lap", "--matrix", tmp_path / "c.csv")[0] == 2


def test_symmetries(capsys):
    code, out, _ = run(capsys, "symmetries", "--class", "cuboid")
    mats = json.loads(out)
    assert code == 0 and len(mats) == 4 and all(len(m) == 9 for m in mats)
    code, out, _ = run(capsys, "symmetries", "--class", "cylinder", "--increment", 90)
    assert len(json.loads(out)) == 8
    assert run(capsys, "symmetries", "--class", "cylinder", "--increment", 7)[0] == 2


def test_sample_mesh(tmp_path, capsys):
    pio.write_ply(tmp_path / "m.ply", np.random.default_rng(0).normal(scale=0.05, size=(200, 3)))
    code, out, err = run(capsys, "sample-mesh", "--mesh", tmp_path / "m.ply")
    assert code == 0 and len(out.splitlines()) == 2 + 200 and "200 of 200" in err
    code, out, _ = run(capsys, "sample-mesh", "--mesh", tmp_path / "m.ply", "--k", 20)
    assert len(out.splitlines()) == 2 + 20


def test_metric_and_assignments(tmp_path, capsys):
    pio.write_ply(tmp_path / "m.ply", cuboid_vertices(n=3))
    gt = "1 0 0 0 1 0 0 0 1 0 0 500"
    pred = "1 0 0 0 1 0 0 0 1 30 40 500"
    code, out, _ = run(capsys, "metric", "--kind", "add-h", "--gt", gt, "--pred", pred, "--model", tmp_path / "m.ply")
    assert code == 0 and float(out) == pytest.approx(5.0)
    code, out, _ = run(capsys, "assignments", "--kind", "add", "--gt", gt, "--pred", pred,
                       "--model", tmp_path / "m.ply", "--symmetry", "cuboid")
    rows = out.splitlines()
    assert code == 0 and rows[1] == "gt_index,pred_index,distance_cm" and rows[2] == "0,0,5.000000"
    assert run(capsys, "metric", "--kind", "add", "--gt", "1 2 3", "--pred", pred,
               "--model", tmp_path / "m.ply")[0] == 2
    assert run(capsys, "metric", "--kind", "add", "--gt", gt, "--pred", pred)[0] == 2


def test_calibrate_depth(tmp_path, capsys):
    rng = np.random.default_rng(0)
    m = rng.uniform(0.4, 1.4, 2000)
    r = 0.9804 * m + rng.normal(scale=0.005, size=m.size)
    (tmp_path / "p.csv").write_text("reference_m,measured_m\n" + "".join(f"{a:.17g},{b:.17g}\n" for a, b in zip(r, m)))
    code, out, _ = run(capsys, "calibrate-depth", "--pairs", tmp_path / "p.csv")
    assert code == 0
    assert abs(float(out.split()[1]) - 0.9804) < 0.002
    (tmp_path / "bad.csv").write_text("reference_m,measured_m\n1.0,-1\n")
    assert run(capsys, "calibrate-depth", "--pairs", tmp_path / "bad.csv")[0] == 2


def test_refine_ls(tmp_path, capsys):
    cam = LS_CAMERA
    verts = cuboid_vertices(n=24)
    models = write_models(tmp_path / "models", {1: (verts, "cuboid")})
    truth = Pose(random_rotation(1), [0.02, -0.01, 0.8])
    pio.save_depth_raw(tmp_path / "d.raw", render_point_depth(transform_points(truth, verts), cam))
    (tmp_path / "cam.json").write_text(json.dumps({"fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy,
                                                   "width": cam.width, "height": cam.height}))
    pio.save_predictions(tmp_path / "p.csv", [Prediction(0, 0, 1, Pose(truth.R, 1.1 * truth.t), 0.8)])
    code, out, _ = run(capsys, "refine-ls", "--depth", tmp_path / "d.raw", "--camera", tmp_path / "cam.json",
                       "--models", models, "--predictions", tmp_path / "p.csv", "--out", tmp_path / "o.csv")
    assert code == 0
    (refined,) = pio.load_predictions(tmp_path / "o.csv")
    # depth is quantized to whole millimeters on disk
    assert np.linalg.norm(refined.pose.t - truth.t) < 0.006
    assert (tmp_path / "o.csv").read_text().startswith("# tool=poseval")


def test_validate_views(tmp_path, capsys, ten_models):
    verts = {o: (m.points, m.symmetry_class.value) for o, m in ten_models.items()}
    models = write_models(tmp_path / "models", verts)
    argv = ["validate-views", "--models", models, "--out", tmp_path / "v.csv"]
    for seed in (0, 1):
        a, b, _ = two_view_scene(seed, ten_models)
        pio.save_view(tmp_path / f"a{seed}.json", a)
        pio.save_view(tmp_path / f"b{seed}.json", b)
        argv += ["--a", tmp_path / f"a{seed}.json", "--b", tmp_path / f"b{seed}.json"]
    code, _, err = run(capsys, *argv)
    assert code == 0 and "Nakagami fit" in err
    rows = (tmp_path / "v.csv").read_text().splitlines()
    assert rows[1] == "scene,obj_id,add_mm,inliers,correspondences" and len(rows) == 2 + 20
    assert all(0 <= float(r.split(",")[2]) < 30 for r in rows[2:])


def test_validate_views_errors(tmp_path, capsys, ten_models):
    verts = {o: (m.points, m.symmetry_class.value) for o, m in list(ten_models.items())[:9]}
    models = write_models(tmp_path / "models", verts)
    a, b, _ = two_view_scene(0, ten_models)
    pio.save_view(tmp_path / "a.json", a)
    pio.save_view(tmp_path / "b.json", b)
    code, _, err = run(capsys, "validate-views", "--a", tmp_path / "a.json", "--b", tmp_path / "b.json",
                       "--models", models)
    assert code == 3 and "9" in err
    pio.save_view(tmp_path / "a.json", a[:3])
    pio.save_view(tmp_path / "b.json", b[:3])
    code, _, _ = run(capsys, "validate-views", "--a", tmp_path / "a.json", "--b", tmp_path / "b.json",
                     "--models", models)
    assert code == 3


def test_help_documents_formats(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    for word in ("scene_gt.json", "cam_t_m2c", "uint16", "reference_m", "models config"):
        assert word in out


def test_unknown_command_exit_code(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
