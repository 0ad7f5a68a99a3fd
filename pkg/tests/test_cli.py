import csv
import io

import numpy as np
import pytest
import yaml

from src.cli import EXTRACT_COLUMNS, REGISTER_COLUMNS, build_parser, main
from src.config import Config
from src.evaluation import select_keypoints
from src.evaluation.robustness import REPEATABILITY_COLUMNS, RETRIEVAL_COLUMNS
from src.fileio import load_cloud, load_model
from src.fileio.dataset import MANIFEST_NAME
from src.geometry import center_cloud
from src.net import extract

from .conftest import toy_pipeline


def _rows(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    config = toy_pipeline(training={"positives": 1, "negatives": 2}).config
    config_path = root / "config.yaml"
    config_path.write_text(yaml.safe_dump(config))
    common = ["--config", str(config_path)]
    assert main(["synth", *common, "--count", "6", "--points", "200", "--out", str(root / "data")]) == 0
    assert main([
        "train-local", *common, "--data", str(root / "data"), "--out", str(root / "local.dhmd"),
        "--steps", "2", "--log", str(root / "local.csv"),
    ]) == 0
    return root, common


class TestPipeline:
    def test_synth_writes_dataset(self, workspace):
        root, _ = workspace
        assert (root / "data" / MANIFEST_NAME).exists()
        assert len(list((root / "data").glob("*.dhpc"))) == 6

    def test_train_local_outputs(self, workspace):
        root, _ = workspace
        assert (root / "local.dhmd").stat().st_size > 0
        header = (root / "local.csv").read_text().splitlines()[0]
        assert header == "step,epoch,lr,loss,desc,det"
        assert "Saved phase-1 model" in (root / "local.log").read_text()

    def test_train_global(self, workspace):
        root, common = workspace
        code = main([
            "train-global", *common, "--data", str(root / "data"), "--model", str(root / "local.dhmd"),
            "--out", str(root / "global.dhmd"), "--steps", "2",
        ])
        assert code == 0
        assert (root / "global.dhmd").exists()
        run_log = (root / "global.log").read_text()
        assert "Encoder digest before global training" in run_log
        assert "Encoder digest unchanged after global training" in run_log

    def test_extract(self, workspace, capsys):
        root, common = workspace
        out = root / "scene.npz"
        code = main([
            "extract", *common, "--model", str(root / "local.dhmd"),
            "--cloud", str(root / "data" / "scene_0000.dhpc"), "--out", str(out), "--keypoints", "8",
        ])
        assert code == 0
        rows = _rows(capsys.readouterr().out)
        assert list(rows[0]) == EXTRACT_COLUMNS
        assert rows[0]["points"] == "200"
        assert rows[0]["keypoints"] == "8"
        with np.load(out) as data:
            assert data["descriptors"].shape == (200, 8)
            assert data["keypoints"].shape == (8,)
            assert data["global_descriptor"].shape == (5,)

    def test_extract_matches_manual_composition(self, workspace, tmp_path):
        root, common = workspace
        cloud_path = root / "data" / "scene_0001.dhpc"
        out = tmp_path / "scene.npz"
        assert main([
            "extract", *common, "--model", str(root / "local.dhmd"),
            "--cloud", str(cloud_path), "--out", str(out), "--keypoints", "8", "--nms", "0.3",
        ]) == 0
        config = Config(str(root / "config.yaml"))
        model = load_model(str(root / "local.dhmd"), config.pipeline.architecture)
        cloud = load_cloud(str(cloud_path))
        centered, _ = center_cloud(cloud)
        forward = extract(centered, model)
        selected = select_keypoints(forward.local.saliency, cloud, 8, 0.3)
        with np.load(out) as data:
            np.testing.assert_array_equal(data["descriptors"], forward.local.x)
            np.testing.assert_array_equal(data["saliency"], forward.local.saliency)
            np.testing.assert_array_equal(data["keypoints"], selected.indices)
            np.testing.assert_array_equal(data["global_descriptor"], forward.global_.descriptor)

    def test_register_with_itself(self, workspace, tmp_path):
        root, common = workspace
        truth = tmp_path / "truth.txt"
        np.savetxt(truth, np.eye(4))
        out = tmp_path / "register.csv"
        cloud = str(root / "data" / "scene_0001.dhpc")
        code = main([
            "register", *common, "--model", str(root / "local.dhmd"), "--source", cloud, "--target", cloud,
            "--truth", str(truth), "--out", str(out),
        ])
        assert code == 0
        row = _rows(out.read_text())[0]
        assert list(row) == REGISTER_COLUMNS
        assert row["success"] == "True"
        assert len(row["transform"].split()) == 16

    def test_eval_repeatability(self, workspace, tmp_path):
        root, common = workspace
        out = tmp_path / "rep.csv"
        code = main([
            "eval", *common, "--model", str(root / "local.dhmd"), "--data", str(root / "data"),
            "--task", "repeatability", "--noise", "0.05", "--out", str(out),
        ])
        assert code == 0
        rows = _rows(out.read_text())
        assert list(rows[0]) == REPEATABILITY_COLUMNS
        assert len(rows) == 2
        assert float(rows[0]["repeatability"]) == 1.0

    def test_eval_retrieval(self, workspace, tmp_path):
        root, common = workspace
        out = tmp_path / "ret.csv"
        code = main([
            "eval", *common, "--model", str(root / "local.dhmd"), "--data", str(root / "data"),
            "--task", "retrieval", "--rotation", "30", "--out", str(out),
        ])
        assert code == 0
        rows = _rows(out.read_text())
        assert list(rows[0]) == RETRIEVAL_COLUMNS
        assert [r["rotation"] for r in rows] == ["0.0", "30.0"]


class TestExitCodes:
    def test_global_training_without_model(self, workspace):
        root, common = workspace
        code = main(["train-global", *common, "--data", str(root / "data"), "--out", str(root / "g.dhmd")])
        assert code == 2

    def test_global_training_with_missing_model(self, workspace):
        root, common = workspace
        code = main([
            "train-global", *common, "--data", str(root / "data"), "--model", str(root / "absent.dhmd"),
            "--out", str(root / "g.dhmd"),
        ])
        assert code == 2

    def test_corrupt_cloud_is_a_parse_error(self, workspace, tmp_path):
        root, common = workspace
        bad = tmp_path / "bad.dhpc"
        bad.write_bytes(b"DHPC\x01\x00\x05\x00\x00\x00")
        code = main(["extract", *common, "--model", str(root / "local.dhmd"), "--cloud", str(bad), "--out", str(tmp_path / "x.npz")])
        assert code == 3

    def test_model_for_another_architecture(self, workspace, tmp_path):
        root, _ = workspace
        config_path = tmp_path / "config.yaml"
        config_path.write_text(yaml.safe_dump(toy_pipeline(architecture={"global_dim": 7}).config))
        code = main([
            "extract", "--config", str(config_path), "--model", str(root / "local.dhmd"),
            "--cloud", str(root / "data" / "scene_0000.dhpc"), "--out", str(tmp_path / "x.npz"),
        ])
        assert code == 2

    def test_unknown_config_key(self, tmp_path):
        config_path = tmp_path / "config.yaml"
        config_path.write_text("training:\n  learning_rate: 0.1\n")
        assert main(["synth", "--config", str(config_path), "--count", "1", "--out", str(tmp_path / "d")]) == 2

    def test_missing_dataset_is_insufficient_data(self, workspace, tmp_path):
        _, common = workspace
        code = main(["train-local", *common, "--data", str(tmp_path / "none"), "--out", str(tmp_path / "m.dhmd")])
        assert code == 5

    def test_undecodable_manifest_is_a_parse_error(self, workspace, tmp_path):
        _, common = workspace
        (tmp_path / MANIFEST_NAME).write_bytes(b"\xff\xfe\x00bad\n")
        code = main(["train-local", *common, "--data", str(tmp_path), "--out", str(tmp_path / "m.dhmd")])
        assert code == 3

    def test_bad_sweep_values(self):
        with pytest.raises(SystemExit) as info:
            build_parser().parse_args(["eval", "--model", "m", "--data", "d", "--task", "retrieval", "--noise", "a,b"])
        assert info.value.code == 2

    def test_downsample_below_one(self, workspace):
        root, common = workspace
        code = main([
            "eval", *common, "--model", str(root / "local.dhmd"), "--data", str(root / "data"),
            "--task", "repeatability", "--downsample", "0.5",
        ])
        assert code == 2


@pytest.mark.slow
def test_gradcheck_command(tmp_path):
    out = tmp_path / "gradcheck.csv"
    assert main(["gradcheck", "--out", str(out)]) == 0
    rows = _rows(out.read_text())
    assert rows and all(r["passed"] == "True" for r in rows)
