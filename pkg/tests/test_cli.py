"""CLI surface: subcommands, outputs, config echo, exit codes."""

import json
import subprocess
import sys

import numpy as np
import pytest

from slicseg.cli import main
from slicseg.slic import load_label_map


def _read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


@pytest.fixture(scope="module")
def toy(tmp_path_factory):
    """A tiny on-disk dataset pair plus a speed-oriented config file."""
    root = tmp_path_factory.mktemp("toy")
    config = {
        "synth": {"count": 4, "size": [48, 48]},
        "slic": {"k": 24},
        "train": {"epochs": 1},
        "augment": {
            "hflip": False,
            "rotation_frac": 0,
            "shift_frac": 0,
            "shear_frac": 0,
            "zoom_frac": 0,
        },
    }
    config_path = root / "config.json"
    config_path.write_text(json.dumps(config))
    data_dir = root / "data"
    rc = main(["synth", "--config", str(config_path), "--out", str(data_dir), "--seed", "4"])
    assert rc == 0
    return {
        "config": str(config_path),
        "source": str(data_dir / "source"),
        "target": str(data_dir / "target"),
        "image": str(data_dir / "source" / "images" / "img_0000.png"),
        "mask": str(data_dir / "source" / "masks" / "img_0000.png"),
    }


class TestSynth:
    def test_tree_layout_and_manifest(self, toy, tmp_path):
        out = tmp_path / "s"
        rc = main(["synth", "--config", toy["config"], "--out", str(out), "--seed", "4", "--count", "3"])
        assert rc == 0
        for modality in ("source", "target"):
            images = sorted((out / modality / "images").iterdir())
            masks = sorted((out / modality / "masks").iterdir())
            assert len(images) == 3 and len(masks) == 3
            manifest = _read_json(out / modality / "manifest.json")
            assert manifest["seed"] == 4
            assert len(manifest["foreground_fraction"]) == 3
            for frac in manifest["foreground_fraction"].values():
                assert 0.01 <= frac <= 0.6
        assert (out / "config.json").exists()

    def test_same_seed_byte_identical_trees(self, toy, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        for out in (out_a, out_b):
            assert main(["synth", "--config", toy["config"], "--out", str(out), "--seed", "9"]) == 0
        for rel in ("source/images/img_0000.png", "source/manifest.json", "target/masks/img_0003.png"):
            assert (out_a / rel).read_bytes() == (out_b / rel).read_bytes()


class TestSlic:
    def test_outputs_and_summary(self, toy, tmp_path):
        out = tmp_path / "slic"
        rc = main(["slic", toy["image"], "--k", "16", "--out", str(out)])
        assert rc == 0
        summary = _read_json(out / "summary.json")
        assert summary["S"] == pytest.approx(np.sqrt(48 * 48 / 16), abs=1e-9)
        label_map = load_label_map(out / "labels.splm")
        assert label_map.num_segments == summary["num_segments"]
        assert summary["mean_segment_area"] == pytest.approx(
            48 * 48 / summary["num_segments"]
        )
        from slicseg.imgcore import load_png

        overlay = load_png(out / "overlay.png")
        assert overlay.shape == (48, 48, 3)

    def test_flag_overrides_echoed_into_config(self, toy, tmp_path):
        out = tmp_path / "slic"
        main(["slic", toy["image"], "--k", "16", "--m", "25", "--out", str(out)])
        echoed = _read_json(out / "config.json")
        assert echoed["slic"]["k"] == 16 and echoed["slic"]["m"] == 25

    def test_bad_path_exits_2(self, tmp_path, capsys):
        rc = main(["slic", "/no/such/image.png", "--out", str(tmp_path / "x")])
        assert rc == 2
        assert "error" in capsys.readouterr().err


class TestLossEval:
    def test_perfect_aligned_prediction(self, tmp_path):
        # Two-tone image with a large Lab gap and low compactness: SLIC
        # segments adhere to the color edge, so a prediction equal to the
        # ground truth is consistent in every segment.
        from slicseg.imgcore import save_png

        image = np.full((48, 48, 3), 220, dtype=np.uint8)
        image[:, :24] = 30
        mask = np.zeros((48, 48), dtype=np.uint8)
        mask[:, :24] = 1
        image_path, mask_path = tmp_path / "img.png", tmp_path / "mask.png"
        save_png(image, image_path)
        save_png(mask, mask_path)
        config_path = tmp_path / "c.json"
        config_path.write_text(json.dumps({"slic": {"k": 16, "m": 10.0}}))
        out = tmp_path / "le"
        rc = main(
            ["loss-eval", str(image_path), str(mask_path), str(mask_path),
             "--config", str(config_path), "--out", str(out)]
        )
        assert rc == 0
        report = _read_json(out / "loss_report.json")
        assert report["hard_consistency"]["penalty"] == 0.0
        assert report["hard"]["consistency"] == 0.0
        assert sum(report["occupancy_histogram"]["counts"]) == report["num_segments"]

    def test_lambda_zero_total_equals_bce(self, toy, tmp_path):
        config_path = tmp_path / "l0.json"
        config_path.write_text(json.dumps({"loss": {"lambda": 0.0}, "slic": {"k": 24}}))
        out = tmp_path / "le"
        rc = main(
            ["loss-eval", toy["image"], toy["mask"], toy["mask"], "--config", str(config_path), "--out", str(out)]
        )
        assert rc == 0
        report = _read_json(out / "loss_report.json")
        assert report["soft"]["total"] == report["soft"]["bce"]
        assert report["hard"]["total"] == report["hard"]["bce"]

    def test_dimension_mismatch_exits_2(self, toy, tmp_path, capsys):
        from slicseg.imgcore import save_png

        small = tmp_path / "small.png"
        save_png(np.zeros((8, 8), dtype=np.uint8), small)
        rc = main(["loss-eval", toy["image"], toy["mask"], str(small), "--out", str(tmp_path / "x")])
        assert rc == 2
        assert "error" in capsys.readouterr().err


class TestTrain:
    def test_writes_weights_report_and_echo(self, toy, tmp_path):
        out = tmp_path / "run"
        rc = main(["train", "--config", toy["config"], "--data", toy["source"], "--out", str(out), "--seed", "2"])
        assert rc == 0
        report = _read_json(out / "report.json")
        assert len(report["train_loss"]) == 1
        assert report["best_epoch"] == 1
        assert (out / "weights.json").exists() and (out / "weights.bin").exists()
        echoed = _read_json(out / "config.json")
        assert echoed["seed"] == 2
        assert echoed["data"]["train_root"] == toy["source"]

    def test_rerun_byte_identical_report(self, toy, tmp_path):
        outs = [tmp_path / "r1", tmp_path / "r2"]
        for out in outs:
            args = ["train", "--config", toy["config"], "--data", toy["source"],
                    "--loss", "slicloss", "--out", str(out), "--seed", "5"]
            assert main(args) == 0
        assert (outs[0] / "report.json").read_bytes() == (outs[1] / "report.json").read_bytes()
        assert (outs[0] / "weights.bin").read_bytes() == (outs[1] / "weights.bin").read_bytes()

    def test_missing_data_root_exits_1(self, toy, tmp_path, capsys):
        rc = main(["train", "--config", toy["config"], "--out", str(tmp_path / "x")])
        assert rc == 1
        assert "train_root" in capsys.readouterr().err

    def test_config_echo_written_before_failing_work(self, toy, tmp_path, capsys):
        out = tmp_path / "run"
        rc = main(["train", "--config", toy["config"], "--data", str(tmp_path / "missing"), "--out", str(out)])
        assert rc == 2
        assert (out / "config.json").exists()


@pytest.fixture(scope="module")
def trained(toy, tmp_path_factory):
    out = tmp_path_factory.mktemp("trained")
    assert main(["train", "--config", toy["config"], "--data", toy["source"], "--out", str(out), "--seed", "2"]) == 0
    return str(out / "weights.json")


class TestEval:
    def test_eval_json_schema(self, toy, trained, tmp_path):
        out = tmp_path / "ev"
        rc = main(["eval", trained, toy["target"], "--out", str(out)])
        assert rc == 0
        payload = _read_json(out / "eval.json")
        assert set(payload) == {"per_image", "mean_iou", "mean_dice", "n"}
        assert payload["n"] == 4
        assert len(payload["per_image"]) == 4

    def test_save_predictions(self, toy, trained, tmp_path):
        out = tmp_path / "ev"
        rc = main(["eval", trained, toy["target"], "--out", str(out), "--save-predictions"])
        assert rc == 0
        preds = sorted((out / "predictions").iterdir())
        assert [p.name for p in preds] == [f"img_{i:04d}.png" for i in range(4)]

    def test_empty_dataset_exits_2(self, trained, tmp_path, capsys):
        (tmp_path / "empty" / "images").mkdir(parents=True)
        (tmp_path / "empty" / "masks").mkdir(parents=True)
        rc = main(["eval", trained, str(tmp_path / "empty"), "--out", str(tmp_path / "x")])
        assert rc == 2


@pytest.fixture(scope="module")
def mini_grid_config(toy, tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "grid.json"
    config = json.loads(open(toy["config"]).read())
    config["grid"] = {
        "lambda_values": [0.5],
        "k_values": [16, 100000],  # second value exceeds the pixel count
        "m_values": [30.0],
    }
    path.write_text(json.dumps(config))
    return str(path)


class TestGridsearch:
    def test_report_structure_and_failure_recording(self, toy, mini_grid_config, tmp_path):
        out = tmp_path / "grid"
        rc = main(
            ["gridsearch", "--config", mini_grid_config, "--train-data", toy["source"],
             "--target-data", toy["target"], "--out", str(out), "--seed", "1"]
        )
        assert rc == 0
        report = _read_json(out / "grid.json")
        assert report["mode"] == "axis-sweep"
        assert report["base"] == {"lambda": 0.25, "k": 100, "m": 40.0}
        assert len(report["cells"]) == 4
        statuses = {(c["axis"], str(c["value"])): c["status"] for c in report["cells"]}
        assert statuses[("k", "100000")] == "failed"
        assert statuses[("k", "16")] == "ok"
        failed = next(c for c in report["cells"] if c["status"] == "failed")
        assert failed["error"] and failed["td_iou"] is None
        assert report["best"]["k"] == 16  # failure ignored by selection
        markdown = (out / "grid.md").read_text()
        assert "SD IoU | TD IoU | SD Dice | TD Dice" in markdown
        assert "failed" in markdown

    def test_threads_do_not_change_results(self, toy, mini_grid_config, tmp_path):
        outs = [tmp_path / "g1", tmp_path / "g4"]
        for out, threads in zip(outs, ("1", "4")):
            rc = main(
                ["gridsearch", "--config", mini_grid_config, "--train-data", toy["source"],
                 "--target-data", toy["target"], "--out", str(out), "--seed", "1", "--threads", threads]
            )
            assert rc == 0
        assert (outs[0] / "grid.json").read_bytes() == (outs[1] / "grid.json").read_bytes()

    def test_missing_roots_exit_1(self, mini_grid_config, tmp_path):
        rc = main(["gridsearch", "--config", mini_grid_config, "--out", str(tmp_path / "x")])
        assert rc == 1


class TestEntryPoints:
    def test_usage_error_exits_1(self):
        assert main([]) == 1
        assert main(["no-such-command"]) == 1

    def test_help_exits_0(self, capsys):
        assert main(["--help"]) == 0
        assert "COMMAND" in capsys.readouterr().out

    def test_module_invocation(self):
        proc = subprocess.run(
            [sys.executable, "-m", "slicseg", "--help"], capture_output=True, text=True
        )
        assert proc.returncode == 0
        assert "slicseg" in proc.stdout
