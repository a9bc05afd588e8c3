import json

import numpy as np
import pytest
from typer.testing import CliRunner

from main import app
from src.storage.codecs import read_label, write_label, write_logits
from src.storage.models import ImageDims, LabelMap, LogitsMap
from src.storage.rle import masks_from_bitmaps, write_masks

runner = CliRunner()

SMALL_WINDOWS = ["--h-window", "64x16", "--v-window", "32x32"]


@pytest.fixture(scope="module")
def scene_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("scene")
    result = runner.invoke(app, ["synth", "--out", str(out), "--seed", "3", "--json"])
    assert result.exit_code == 0, result.output
    return out


class TestPlan:
    def test_default_windows_json(self):
        result = runner.invoke(app, ["plan", "400x2048", "--json"])
        assert result.exit_code == 0
        data = json.loads(result.stdout)
        assert data["dims"] == [400, 2048]
        assert len(data["horizontal"]) == 8
        assert len(data["vertical"]) == 8
        assert len(data["overlaps"]) == 16
        assert all(o["rect"][2:] == [200, 256] for o in data["overlaps"])

    def test_text_listing(self):
        result = runner.invoke(app, ["plan", "400x2048"])
        assert result.exit_code == 0
        assert "Overlap regions: 16" in result.stdout

    def test_window_larger_than_image(self):
        result = runner.invoke(app, ["plan", "100x100", "--h-window", "400x256"])
        assert result.exit_code == 2

    def test_bad_dims(self):
        assert runner.invoke(app, ["plan", "400by2048"]).exit_code == 2

    def test_config_file_and_flag_precedence(self, tmp_path):
        config = tmp_path / "exp.json"
        config.write_text(json.dumps({"h_window": [10, 5], "v_window": [5, 10]}))
        result = runner.invoke(app, ["plan", "10x20", "--config", str(config), "--h-window", "10x10", "--json"])
        data = json.loads(result.stdout)
        assert len(data["horizontal"]) == 2
        assert len(data["vertical"]) == 4


class TestSynth:
    def test_writes_scene(self, scene_dir):
        for name in ("gt.plbl", "ta_logits.plgt", "ta_logits_v.plgt", "masks.json", "student_logits.plgt", "synth.json"):
            assert (scene_dir / name).exists()
        assert json.loads((scene_dir / "synth.json").read_text())["seed"] == 3

    def test_same_seed_is_byte_identical(self, tmp_path, scene_dir):
        runner.invoke(app, ["synth", "--out", str(tmp_path), "--seed", "3"])
        for name in ("gt.plbl", "ta_logits.plgt", "masks.json", "student_logits.plgt"):
            assert (tmp_path / name).read_bytes() == (scene_dir / name).read_bytes()

    def test_invalid_spec(self, tmp_path):
        result = runner.invoke(app, ["synth", "--out", str(tmp_path), "--noise", "2.0"])
        assert result.exit_code == 2


class TestFuse:
    def test_unanimous_fixture(self, tmp_path):
        labels = np.array([[0, 0, 1, 1], [0, 0, 1, 1]])
        write_logits(tmp_path / "ta.plgt", LogitsMap(np.eye(2, dtype=np.float32)[labels] * 5))
        left = labels == 0
        write_masks(tmp_path / "masks.json", masks_from_bitmaps([left], ImageDims(2, 4)))
        result = runner.invoke(app, ["fuse", "--masks", str(tmp_path / "masks.json"),
                                     "--ta-logits", str(tmp_path / "ta.plgt"), "--out", str(tmp_path / "out"), "--json"])
        assert result.exit_code == 0, result.output
        assert json.loads(result.stdout)["direct_lcr"] == 1
        assert read_label(tmp_path / "out" / "pseudo.plbl").labels.tolist() == labels.tolist()
        decisions = json.loads((tmp_path / "out" / "decisions.json").read_text())
        assert decisions["variant"] == "ctcfv2+bev2"
        assert decisions["decisions"][0]["path"] == "direct_lcr"

    def test_dimension_mismatch(self, tmp_path):
        write_logits(tmp_path / "ta.plgt", LogitsMap(np.zeros((3, 3, 2), dtype=np.float32)))
        write_masks(tmp_path / "masks.json", masks_from_bitmaps([np.ones((2, 2))], ImageDims(2, 2)))
        result = runner.invoke(app, ["fuse", "--masks", str(tmp_path / "masks.json"),
                                     "--ta-logits", str(tmp_path / "ta.plgt"), "--out", str(tmp_path / "out")])
        assert result.exit_code == 3
        assert not (tmp_path / "out").exists()

    def test_bad_magic(self, tmp_path):
        (tmp_path / "ta.plgt").write_bytes(b"XXXX" + bytes(12))
        write_masks(tmp_path / "masks.json", masks_from_bitmaps([np.ones((2, 2))], ImageDims(2, 2)))
        result = runner.invoke(app, ["fuse", "--masks", str(tmp_path / "masks.json"),
                                     "--ta-logits", str(tmp_path / "ta.plgt"), "--out", str(tmp_path / "out")])
        assert result.exit_code == 2

    @pytest.mark.parametrize("rle", [[0, 1.5, 2.5], [0, 1, 5]])
    def test_bad_run_lengths(self, tmp_path, rle):
        write_logits(tmp_path / "ta.plgt", LogitsMap(np.zeros((2, 2, 2), dtype=np.float32)))
        (tmp_path / "masks.json").write_text(json.dumps(
            {"height": 2, "width": 2, "masks": [{"id": 0, "area": 1, "rle": rle}]}))
        result = runner.invoke(app, ["fuse", "--masks", str(tmp_path / "masks.json"),
                                     "--ta-logits", str(tmp_path / "ta.plgt"), "--out", str(tmp_path / "out")])
        assert result.exit_code == 2
        assert not (tmp_path / "out").exists()


class TestRefine:
    def test_alpha_zero_keeps_only_agreement(self, tmp_path, scene_dir):
        fused = tmp_path / "fused"
        runner.invoke(app, ["fuse", "--masks", str(scene_dir / "masks.json"),
                            "--ta-logits", str(scene_dir / "ta_logits.plgt"), "--out", str(fused)])
        result = runner.invoke(app, [
            "refine", "--bundle", str(fused), "--masks", str(scene_dir / "masks.json"),
            "--ta-i", str(scene_dir / "ta_logits.plgt"), "--ta-j", str(scene_dir / "ta_logits_v.plgt"),
            "--out", str(tmp_path / "refined"), "--alpha", "0", "--json",
        ])
        assert result.exit_code == 0, result.output
        data = json.loads(result.stdout)
        assert data["counts"]["sam_snap_accepted"] == 0
        assert data["b_ref_pixels"] == data["counts"]["ta_agreement"]
        assert (tmp_path / "refined" / "b_ref.plbd").exists()
        assert json.loads((tmp_path / "refined" / "trace.json").read_text())["variant"] == "ctcfv2+bev2"

    def test_single_class_logits(self, tmp_path, scene_dir):
        fused = tmp_path / "fused"
        runner.invoke(app, ["fuse", "--masks", str(scene_dir / "masks.json"),
                            "--ta-logits", str(scene_dir / "ta_logits.plgt"), "--out", str(fused)])
        write_logits(tmp_path / "one.plgt", LogitsMap(np.zeros((64, 128, 1))))
        result = runner.invoke(app, [
            "refine", "--bundle", str(fused), "--masks", str(scene_dir / "masks.json"),
            "--ta-i", str(tmp_path / "one.plgt"), "--ta-j", str(tmp_path / "one.plgt"),
            "--out", str(tmp_path / "refined"), "--be", "v1",
        ])
        assert result.exit_code == 2
        assert not (tmp_path / "refined").exists()

    def test_bundle_of_other_size_with_bev1(self, tmp_path, scene_dir):
        other = tmp_path / "other"
        runner.invoke(app, ["synth", "--out", str(other), "--height", "32"])
        fused = tmp_path / "fused"
        runner.invoke(app, ["fuse", "--masks", str(other / "masks.json"),
                            "--ta-logits", str(other / "ta_logits.plgt"), "--out", str(fused)])
        result = runner.invoke(app, [
            "refine", "--bundle", str(fused), "--masks", str(scene_dir / "masks.json"),
            "--ta-i", str(scene_dir / "ta_logits.plgt"), "--ta-j", str(scene_dir / "ta_logits_v.plgt"),
            "--out", str(tmp_path / "refined"), "--be", "v1",
        ])
        assert result.exit_code == 3
        assert not (tmp_path / "refined").exists()


class TestLosses:
    def test_report_from_scene(self, scene_dir):
        result = runner.invoke(app, ["losses", "--scene", str(scene_dir), *SMALL_WINDOWS])
        assert result.exit_code == 0, result.output
        data = json.loads(result.stdout)
        assert data["total_student"] == pytest.approx(data["ce_whole"] + data["ce_patch_student"] + data["bd_student"])
        assert data["total_ta"] == pytest.approx(data["ce_patch_ta"] + data["cc"] + data["bd_ta"])
        assert data["lambda"] == 0.2

    def test_missing_student_logits(self, scene_dir):
        result = runner.invoke(app, ["losses", "--ta-logits", str(scene_dir / "ta_logits.plgt"),
                                     "--masks", str(scene_dir / "masks.json"), *SMALL_WINDOWS])
        assert result.exit_code == 2


class TestEval:
    def test_identical_maps(self, tmp_path):
        write_label(tmp_path / "gt.plbl", LabelMap(np.array([[0, 1], [2, 2]]), 3))
        result = runner.invoke(app, ["eval", str(tmp_path / "gt.plbl"), str(tmp_path / "gt.plbl"), "--json"])
        assert result.exit_code == 0
        assert json.loads(result.stdout)["miou"] == 1.0

    def test_odd_number_of_paths(self, tmp_path):
        write_label(tmp_path / "gt.plbl", LabelMap(np.array([[0]]), 1))
        assert runner.invoke(app, ["eval", str(tmp_path / "gt.plbl")]).exit_code == 2

    def test_missing_file(self, tmp_path):
        result = runner.invoke(app, ["eval", str(tmp_path / "a.plbl"), str(tmp_path / "b.plbl")])
        assert result.exit_code == 2


class TestPipeline:
    def test_synth_scene(self, scene_dir, tmp_path):
        out = tmp_path / "pass"
        result = runner.invoke(app, ["pipeline", "--scene", str(scene_dir), "--out", str(out), *SMALL_WINDOWS, "--json"])
        assert result.exit_code == 0, result.output
        summary = json.loads(result.stdout)
        assert summary["gain"] >= 0.05
        assert summary["overlaps"] == 16
        for name in ("pseudo.plbl", "confidence.plbd", "decisions.json", "b_ref.plbd",
                     "trace.json", "losses.json", "quality.json"):
            assert (out / name).exists()

    def test_fixed_theta_variant(self, scene_dir, tmp_path):
        out = tmp_path / "fixed"
        result = runner.invoke(app, ["pipeline", "--scene", str(scene_dir), "--out", str(out),
                                     *SMALL_WINDOWS, "--ctcf", "fixed:0.5", "--json"])
        assert result.exit_code == 0, result.output
        assert json.loads(result.stdout)["variant"] == "ctcf_fixed_theta(0.5)+bev2"
        assert json.loads((out / "quality.json").read_text())["variant"] == "ctcf_fixed_theta(0.5)+bev2"

    def test_missing_logits_writes_nothing(self, scene_dir, tmp_path):
        out = tmp_path / "none"
        result = runner.invoke(app, ["pipeline", "--masks", str(scene_dir / "masks.json"),
                                     "--ta-logits", str(tmp_path / "absent.plgt"), "--out", str(out)])
        assert result.exit_code == 2
        assert not out.exists()

    def test_class_count_flag_mismatch(self, scene_dir, tmp_path):
        out = tmp_path / "mismatch"
        result = runner.invoke(app, ["pipeline", "--scene", str(scene_dir), "--out", str(out),
                                     *SMALL_WINDOWS, "--classes", "4"])
        assert result.exit_code == 3
        assert not out.exists()

    def test_thread_setting_from_environment(self, scene_dir, tmp_path):
        one = runner.invoke(app, ["pipeline", "--scene", str(scene_dir), "--out", str(tmp_path / "a"), *SMALL_WINDOWS],
                            env={"PANOFUSE_THREADS": "1"})
        many = runner.invoke(app, ["pipeline", "--scene", str(scene_dir), "--out", str(tmp_path / "b"), *SMALL_WINDOWS],
                             env={"PANOFUSE_THREADS": "8"})
        assert one.exit_code == many.exit_code == 0
        for name in ("pseudo.plbl", "b_ref.plbd", "losses.json", "decisions.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_unknown_variant(self, scene_dir, tmp_path):
        result = runner.invoke(app, ["pipeline", "--scene", str(scene_dir), "--out", str(tmp_path / "x"),
                                     "--be", "v3"])
        assert result.exit_code == 2
