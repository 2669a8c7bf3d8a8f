import json

import numpy as np
import pytest

from ear.cli import main
from ear.config import RunConfig, parse_config
from ear.errors import ConfigError

FAST_CONFIG = """
[scenario]
num_tasks = 2
classes_per_task = 3
repeats = 2
separation = 10.0
class_spread = 4.0
noise_scale = 0.8
raw_dim = 10
test_per_class = 20
train_per_task = 200

[encoder]
tap_dims = 16,12,10

[stream]
segment = 300
window = 20
buffer = 120

[train]
epochs = 60
batch = 16
hidden_width = 32
depth = 1

[nas]
budget = 6
warmup = 3
batch = 64
width_min = 8
width_max = 32

[seeds]
master = 7
"""


@pytest.fixture()
def cfg_path(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text(FAST_CONFIG)
    return p


class TestConfigParsing:
    def test_defaults_carry_protocol_constants(self):
        cfg = RunConfig()
        assert cfg.hd.gamma_focal == 2.0
        assert cfg.train.lr == 1e-3
        assert cfg.train.batch == 128
        assert cfg.train.epochs == 40
        assert cfg.nas.beta0 == 3e-6
        assert cfg.nas.beta1 == 5.0
        assert cfg.nas.gamma_spectral == 3.0
        assert cfg.nas.knn == 2
        assert cfg.nas.batch == 128
        assert cfg.nas.budget == 50
        assert cfg.nas.warmup == 10
        assert cfg.nas.kappa == 2.5
        assert cfg.nas.shrink == 0.9
        assert cfg.stream.window == 50
        assert cfg.stream.trigger_fraction == 0.6
        assert cfg.stream.ood_threshold == 0.7
        assert cfg.stream.buffer == 1000
        assert cfg.stream.segment == 2000

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            parse_config("[train]\nlr = 0.001\nwarp_speed = 9\n")

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError):
            parse_config("[quantum]\nq = 1\n")

    def test_out_of_range_rejected(self):
        with pytest.raises(ConfigError):
            parse_config("[stream]\ntrigger_fraction = 1.5\n")

    def test_hash_stable_and_sensitive(self):
        a = parse_config(FAST_CONFIG)
        b = parse_config(FAST_CONFIG)
        assert a.hash() == b.hash()
        c = parse_config(FAST_CONFIG.replace("master = 7", "master = 8"))
        assert a.hash() != c.hash()

    def test_ini_round_trip(self):
        cfg = parse_config(FAST_CONFIG)
        again = parse_config(cfg.to_ini())
        assert cfg.hash() == again.hash()

    def test_env_var_supplies_path(self, cfg_path, monkeypatch):
        monkeypatch.setenv("EAR_CONFIG", str(cfg_path))
        from ear.config import load_config
        assert load_config().hash() == parse_config(FAST_CONFIG).hash()


class TestCliPipeline:
    def test_gen_synthetic_deterministic(self, cfg_path, tmp_path):
        d1, d2 = tmp_path / "a", tmp_path / "b"
        assert main(["--config", str(cfg_path), "gen-synthetic", "--out-dir", str(d1)]) == 0
        assert main(["--config", str(cfg_path), "gen-synthetic", "--out-dir", str(d2)]) == 0
        for name in ("task00_train.earf", "task00_test.earf", "task01_train.earf"):
            assert (d1 / name).read_bytes() == (d2 / name).read_bytes()
        manifest = json.loads((d1 / "manifest.json").read_text())
        assert manifest["config_hash"] == parse_config(FAST_CONFIG).hash()
        assert manifest["schema_version"] == 1

    def test_train_eval_nas_stream_metrics(self, cfg_path, tmp_path):
        data_dir = tmp_path / "data"
        assert main(["--config", str(cfg_path), "gen-synthetic",
                     "--out-dir", str(data_dir)]) == 0

        model_path = tmp_path / "task0.earm"
        assert main(["--config", str(cfg_path), "train",
                     "--data", str(data_dir / "task00_train.earf"),
                     "--out", str(model_path)]) == 0
        assert model_path.exists()
        train_summary = json.loads(model_path.with_suffix(".train.json").read_text())
        assert train_summary["embedding_dim"] >= 3

        metrics_path = tmp_path / "ood.json"
        csv_path = tmp_path / "ood.csv"
        assert main(["--config", str(cfg_path), "eval-ood",
                     "--model", str(model_path),
                     "--id-data", str(data_dir / "task00_test.earf"),
                     "--ood-data", str(data_dir / "task01_test.earf"),
                     "--out", str(metrics_path), "--csv", str(csv_path)]) == 0
        metrics = json.loads(metrics_path.read_text())
        for key in ("auroc", "macro_f1", "tnr_at_tpr95", "tnr_at_tpr90",
                    "id_accuracy", "config_hash"):
            assert key in metrics
        assert metrics["auroc"] > 0.8  # tasks are far apart
        assert csv_path.read_text().startswith("# schema_version=1")

        nas_dir = tmp_path / "nas"
        assert main(["--config", str(cfg_path), "nas",
                     "--data", str(data_dir / "task00_train.earf"),
                     "--out-dir", str(nas_dir)]) == 0
        best = json.loads((nas_dir / "best.json").read_text())
        assert best["choices"]
        trace_lines = (nas_dir / "trace.jsonl").read_text().splitlines()
        assert json.loads(trace_lines[0])["config_hash"] == best["config_hash"]
        scores = [json.loads(l)["score"] for l in trace_lines[1:]]
        assert max(scores) == pytest.approx(best["score"])

        stream_dir = tmp_path / "stream"
        assert main(["--config", str(cfg_path), "stream",
                     "--out-dir", str(stream_dir)]) == 0
        summary = json.loads((stream_dir / "summary.json").read_text())
        assert summary["models_learned"] == 2
        assert summary["triggers"] >= 2  # at least one per distinct task

        out_csv = tmp_path / "summary.csv"
        assert main(["--config", str(cfg_path), "metrics",
                     "--log", str(stream_dir / "events.jsonl"),
                     "--out", str(out_csv)]) == 0
        text = out_csv.read_text()
        assert "overall_accuracy" in text and "task0_accuracy" in text

    def test_exit_codes(self, cfg_path, tmp_path):
        bad_cfg = tmp_path / "bad.ini"
        bad_cfg.write_text("[train]\nepochs = banana\n")
        assert main(["--config", str(bad_cfg), "gen-synthetic",
                     "--out-dir", str(tmp_path / "x")]) == 2

        assert main(["--config", str(cfg_path), "train",
                     "--data", str(tmp_path / "nope.earf"),
                     "--out", str(tmp_path / "m.earm")]) == 3

        junk = tmp_path / "junk.earf"
        junk.write_bytes(b"XXXXGARBAGEGARBAGE")
        assert main(["--config", str(cfg_path), "train",
                     "--data", str(junk),
                     "--out", str(tmp_path / "m.earm")]) == 4

    def test_missing_config_file(self, tmp_path):
        assert main(["--config", str(tmp_path / "ghost.ini"), "gen-synthetic",
                     "--out-dir", str(tmp_path / "y")]) == 2
