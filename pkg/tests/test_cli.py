import json
import os
from pathlib import Path

import numpy as np
import pytest

from conftest import two_cluster_table
from tabsynth.cli import (
    EXIT_OK,
    EXIT_USER_ERROR,
    OUTPUT_ROOT_ENV,
    load_config,
    main,
)
from tabsynth.schema import write_csv_table


TINY_OVERRIDES = {
    "preprocess": {"modes": 2, "seed": 0},
    "networks": {
        "base_channels": 4,
        "grid": [2, 4],
        "disc_channels": [4, 8, 8],
        "disc_grid": [2, 4],
    },
    "training": {"batch_size": 32, "max_epochs": 2, "checkpoint_every": 1},
}


@pytest.fixture
def workspace(tmp_path, monkeypatch):
    """CSV + schema + config for a tiny end-to-end run rooted in tmp_path."""
    table = two_cluster_table(128, seed=0)
    csv_path = tmp_path / "data.csv"
    write_csv_table(csv_path, table)
    schema_path = tmp_path / "schema.json"
    schema_path.write_text(json.dumps(table.schema.to_dict()))
    config = {
        "run_id": "tiny",
        "output_dir": str(tmp_path / "runs"),
        "data": {
            "csv": str(csv_path),
            "schema": str(schema_path),
            "target": "label",
            "task": "classification",
        },
        **TINY_OVERRIDES,
    }
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps(config))
    monkeypatch.delenv(OUTPUT_ROOT_ENV, raising=False)
    return tmp_path, config_path


def run(config_path, *args):
    return main(["--config", str(config_path), *args])


class TestConfigLoading:
    def test_defaults_overlaid_by_file(self, workspace):
        _, config_path = workspace
        config = load_config(config_path)
        assert config["training"]["batch_size"] == 32
        assert config["training"]["learning_rate"] == 1.8e-3  # default survives
        assert config["conditioning"]["beta"] == 2

    def test_dotted_overrides(self, workspace):
        _, config_path = workspace
        config = load_config(config_path, overrides=["training.max_epochs=7", "run_id=other"])
        assert config["training"]["max_epochs"] == 7
        assert config["run_id"] == "other"

    def test_bad_override_rejected(self, workspace):
        _, config_path = workspace
        from tabsynth.cli import UserError

        with pytest.raises(UserError):
            load_config(config_path, overrides=["no_equals_sign"])

    def test_output_root_env_wins(self, workspace, monkeypatch):
        tmp_path, config_path = workspace
        monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path / "elsewhere"))
        config = load_config(config_path)
        assert config["output_dir"] == str(tmp_path / "elsewhere")

    def test_missing_config_is_user_error(self, tmp_path):
        assert run(tmp_path / "nope.json", "fit") == EXIT_USER_ERROR


class TestFit:
    def test_writes_transformer(self, workspace):
        tmp_path, config_path = workspace
        assert run(config_path, "fit") == EXIT_OK
        assert (tmp_path / "runs" / "tiny" / "transformer.json").exists()

    def test_invalid_cell_is_user_error(self, workspace):
        tmp_path, config_path = workspace
        csv_path = tmp_path / "data.csv"
        lines = csv_path.read_text().splitlines()
        lines[1] = lines[1].rsplit(",", 1)[0] + ",zebra"
        csv_path.write_text("\n".join(lines) + "\n")
        assert run(config_path, "fit") == EXIT_USER_ERROR

    def test_missing_data_file_is_user_error(self, workspace):
        tmp_path, config_path = workspace
        os.remove(tmp_path / "data.csv")
        assert run(config_path, "fit") == EXIT_USER_ERROR


class TestPipeline:
    def test_train_before_fit_is_user_error(self, workspace):
        _, config_path = workspace
        assert run(config_path, "train") == EXIT_USER_ERROR

    def test_sample_before_train_is_user_error(self, workspace):
        _, config_path = workspace
        assert run(config_path, "fit") == EXIT_OK
        assert run(config_path, "sample", "-n", "5") == EXIT_USER_ERROR

    def test_full_pipeline(self, workspace):
        tmp_path, config_path = workspace
        out = tmp_path / "runs" / "tiny"
        assert run(config_path, "fit") == EXIT_OK
        assert run(config_path, "train") == EXIT_OK
        assert (out / "checkpoint.pt").exists()
        assert (out / "manifest.json").exists()
        log_lines = (out / "train_log.jsonl").read_text().splitlines()
        assert log_lines
        rec = json.loads(log_lines[0])
        assert {"epoch", "step", "g_loss", "d1_loss", "d2_loss", "wall_ms"} <= set(rec)

        assert run(config_path, "sample", "-n", "40") == EXIT_OK
        synth_lines = (out / "synthetic.csv").read_text().splitlines()
        assert len(synth_lines) == 41  # header + rows
        assert synth_lines[0] == "x1,x2,label"

        assert run(config_path, "evaluate") == EXIT_OK
        report = json.loads((out / "report.json").read_text())
        entry = report["datasets"]["tiny"]
        assert "fitness" in entry and "efficacy" in entry
        assert np.isfinite(entry["fitness"]["l_test"])

        assert run(config_path, "report") == EXIT_OK
        assert (out / "report.txt").exists()
        assert (out / "report.csv").exists()

    def test_resume_appends_log(self, workspace):
        tmp_path, config_path = workspace
        out = tmp_path / "runs" / "tiny"
        assert run(config_path, "fit") == EXIT_OK
        assert run(config_path, "train") == EXIT_OK
        first = len((out / "train_log.jsonl").read_text().splitlines())
        assert run(config_path, "--set", "training.max_epochs=3", "train") == EXIT_OK
        second = len((out / "train_log.jsonl").read_text().splitlines())
        assert second > first
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["epoch"] == 3


class TestReproducibility:
    def _artifacts(self, root: Path):
        out = {}
        for name in ("transformer.json", "synthetic.csv", "report.json"):
            out[name] = (root / name).read_bytes()
        log = [
            {k: v for k, v in json.loads(line).items() if k != "wall_ms"}
            for line in (root / "train_log.jsonl").read_text().splitlines()
        ]
        out["train_log"] = log
        return out

    def test_reruns_byte_identical_modulo_wall_clock(self, workspace, monkeypatch):
        tmp_path, config_path = workspace
        results = []
        for trial in ("one", "two"):
            root = tmp_path / f"out_{trial}"
            monkeypatch.setenv(OUTPUT_ROOT_ENV, str(root))
            assert run(config_path, "fit") == EXIT_OK
            assert run(config_path, "train") == EXIT_OK
            assert run(config_path, "sample", "-n", "30") == EXIT_OK
            assert run(config_path, "evaluate") == EXIT_OK
            results.append(self._artifacts(root / "tiny"))
        a, b = results
        assert a["transformer.json"] == b["transformer.json"]
        assert a["synthetic.csv"] == b["synthetic.csv"]
        assert a["report.json"] == b["report.json"]
        assert a["train_log"] == b["train_log"]
