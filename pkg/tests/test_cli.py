"""CLI tests: subcommands, config layering, error line format, PPM previews."""

import json

import numpy as np
import pytest

from entaug import cli, transforms
from entaug.image import Image, write_ppm


def run_cli(args):
    return cli.main(args)


class TestTrainCommand:
    def test_writes_outputs_and_exits_zero(self, data_root, tmp_path, capsys):
        out = tmp_path / "run"
        code = run_cli([
            "train", "--dataset", "synth", "--data-dir", data_root, "--subset", "300",
            "--test-subset", "150", "--arch", "mlp", "--epochs", "1", "--seed", "5",
            "--out", str(out),
        ])
        assert code == 0
        for name in ("metrics.csv", "metrics.json", "run_curves.png", "final_checkpoint.bin"):
            assert (out / name).is_file()
        assert "final test accuracy" in capsys.readouterr().out

    def test_config_file_with_cli_override(self, data_root, tmp_path):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text(
            "# desk-scale settings\n"
            "dataset = synth\n"
            f"data_dir = {data_root}\n"
            "subset = 300\n"
            "test_subset = 150\n"
            "arch = mlp\n"
            "epochs = 2\n"
            "use_ent_loss = true\n"
            f"out_dir = {tmp_path / 'from_file'}\n"
        )
        code = run_cli(["train", "--config", str(cfg_file), "--epochs", "1"])
        assert code == 0
        meta = json.loads((tmp_path / "from_file" / "meta.json").read_text())
        assert meta["config"]["epochs"] == 1  # CLI wins over the file
        assert meta["config"]["use_ent_loss"] is True  # file wins over the default
        assert meta["config"]["subset"] == 300

    def test_env_var_supplies_data_dir(self, data_root, tmp_path, monkeypatch):
        monkeypatch.setenv("ENTAUG_DATA_DIR", data_root)
        code = run_cli([
            "train", "--dataset", "synth", "--subset", "300", "--test-subset", "150",
            "--arch", "mlp", "--epochs", "1", "--out", str(tmp_path / "envrun"),
        ])
        assert code == 0

    def test_bad_config_key_fails_with_machine_readable_line(self, tmp_path, capsys):
        cfg_file = tmp_path / "bad.cfg"
        cfg_file.write_text("no_such_key = 1\n")
        code = run_cli(["train", "--config", str(cfg_file)])
        assert code == 1
        err = capsys.readouterr().err.strip()
        parsed = json.loads(err)
        assert "no_such_key" in parsed["error"]["message"]

    def test_config_error_line(self, data_root, tmp_path, capsys):
        code = run_cli([
            "train", "--dataset", "synth", "--data-dir", data_root, "--arch", "mlp",
            "--epochs", "0", "--out", str(tmp_path / "x"),
        ])
        assert code == 1
        parsed = json.loads(capsys.readouterr().err.strip())
        assert parsed["error"]["kind"] == "ConfigError"


class TestCompareCommand:
    def test_small_matrix(self, data_root, tmp_path, capsys):
        code = run_cli([
            "compare", "--dataset", "synth", "--data-dir", data_root, "--subset", "300",
            "--test-subset", "150", "--arch", "mlp", "--epochs", "1",
            "--seeds", "1,2,3", "--arms", "ce|baseline_only,ce|entaugment",
            "--out", str(tmp_path / "cmp"),
        ])
        assert code == 0
        report = json.loads((tmp_path / "cmp" / "comparison.json").read_text())
        assert set(report["arms"]) == {"ce|baseline_only", "ce|entaugment"}
        assert "median accuracy" in capsys.readouterr().out

    def test_too_few_seeds(self, data_root, tmp_path, capsys):
        code = run_cli([
            "compare", "--dataset", "synth", "--data-dir", data_root, "--arch", "mlp",
            "--seeds", "1", "--out", str(tmp_path / "cmp"),
        ])
        assert code == 1
        assert json.loads(capsys.readouterr().err.strip())["error"]["kind"] == "ConfigError"


class TestPreviewCommand:
    def test_ppm_files_named_by_convention(self, data_root, tmp_path):
        out = tmp_path / "previews"
        code = run_cli([
            "preview-augment", "--dataset", "synth", "--data-dir", data_root,
            "--split", "train", "--count", "2", "--m", "0.75", "--out", str(out),
        ])
        assert code == 0
        files = sorted(p.name for p in out.glob("*.ppm"))
        assert len(files) == 2 * 14
        assert "train_0_rotate_750.ppm" in files
        assert "train_1_solarize_750.ppm" in files

    def test_single_kind_and_p6_payload(self, data_root, tmp_path):
        out = tmp_path / "one"
        code = run_cli([
            "preview-augment", "--dataset", "synth", "--data-dir", data_root,
            "--count", "1", "--m", "0.0", "--kind", "identity", "--out", str(out),
        ])
        assert code == 0
        blob = (out / "train_0_identity_0.ppm").read_bytes()
        assert blob.startswith(b"P6\n28 28\n255\n")
        assert len(blob) == len(b"P6\n28 28\n255\n") + 28 * 28 * 3


class TestBenchCommand:
    def test_bench_smoke(self, data_root, tmp_path, capsys):
        code = run_cli([
            "bench-throughput", "--dataset", "synth", "--data-dir", data_root,
            "--subset", "512", "--arch", "mlp", "--n-batches", "10",
            "--out", str(tmp_path / "bench"),
        ])
        assert code == 0
        assert (tmp_path / "bench" / "bench.csv").is_file()
        assert "entaugment_cached" in capsys.readouterr().out


class TestEvalCommand:
    def test_eval_prints_json(self, data_root, tmp_path, capsys):
        out = tmp_path / "run"
        assert run_cli([
            "train", "--dataset", "synth", "--data-dir", data_root, "--subset", "300",
            "--test-subset", "150", "--arch", "mlp", "--epochs", "1", "--out", str(out),
        ]) == 0
        capsys.readouterr()
        code = run_cli(["eval", "--checkpoint", str(out / "final_checkpoint.bin"), "--data-dir", data_root])
        assert code == 0
        report = json.loads(capsys.readouterr().out.strip())
        assert 0.0 <= report["test_accuracy"] <= 1.0

    def test_missing_checkpoint_error_line(self, tmp_path, capsys):
        code = run_cli(["eval", "--checkpoint", str(tmp_path / "nope.bin")])
        assert code == 1
        parsed = json.loads(capsys.readouterr().err.strip())
        assert "kind" in parsed["error"]


class TestPpmWriter:
    def test_rgb_bytes_are_verbatim(self, tmp_path):
        px = np.arange(2 * 2 * 3, dtype=np.uint8).reshape(2, 2, 3)
        path = tmp_path / "img.ppm"
        write_ppm(Image(px), path)
        assert path.read_bytes() == b"P6\n2 2\n255\n" + px.tobytes()

    def test_grayscale_replicates_channels(self, tmp_path):
        px = np.array([[[7]]], dtype=np.uint8)
        path = tmp_path / "gray.ppm"
        write_ppm(Image(px), path)
        assert path.read_bytes().endswith(bytes([7, 7, 7]))
