import hashlib
import json

import numpy as np

from countnet.cli import main


def write_config(tmp_path, name, payload):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return path


def file_hashes(root):
    out = {}
    for path in sorted(root.rglob("*")):
        if path.is_file():
            out[str(path.relative_to(root))] = hashlib.sha256(path.read_bytes()).hexdigest()
    return out


def hawkes_config():
    return {
        "params": {"mu": [2.0, 1.0], "beta": [5.0, 5.0], "alpha": [[0.5, 0.2], [0.0, 1.0]]},
        "dt": 0.1,
        "n_steps": 60,
    }


class TestValidate:
    def test_valid_config_passes(self, tmp_path, capsys):
        cfg = write_config(tmp_path, "c.json", {**hawkes_config(), "mode": "simulate-hawkes"})
        assert main(["validate", "--config", str(cfg), "--seed", "1"]) == 0
        assert "ok: 0 issue(s)" in capsys.readouterr().err

    def test_tiny_ensemble_rejected(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path,
            "c.json",
            {"mode": "filter", "counts_path": "x.csv", "ensemble_size": 1, "priors": {}, "seed": 0},
        )
        assert main(["validate", "--config", str(cfg)]) == 1
        assert "at least 2 members" in capsys.readouterr().err

    def test_unstable_simulation_rejected(self, tmp_path, capsys):
        bad = {**hawkes_config(), "mode": "simulate-hawkes"}
        bad["params"]["beta"] = [20.0, 5.0]
        cfg = write_config(tmp_path, "c.json", bad)
        assert main(["validate", "--config", str(cfg), "--seed", "0"]) == 1
        assert "oscillate" in capsys.readouterr().err

    def test_missing_seed_flagged(self, tmp_path, capsys):
        cfg = write_config(tmp_path, "c.json", {**hawkes_config(), "mode": "simulate-hawkes"})
        assert main(["validate", "--config", str(cfg)]) == 1
        assert "seed" in capsys.readouterr().err


class TestExitCodes:
    def test_unknown_mode_is_validation_error(self, capsys):
        assert main(["frobnicate"]) == 1

    def test_missing_config_file(self, tmp_path):
        assert main(["simulate-hawkes", "--config", str(tmp_path / "nope.json"), "--seed", "1"]) == 1

    def test_runtime_failure_maps_to_two(self, tmp_path):
        cfg = write_config(
            tmp_path,
            "c.json",
            {
                "counts_path": str(tmp_path / "missing.csv"),
                "ensemble_size": 8,
                "priors": {
                    "baseline": {"mean": 2.0, "variance": 1.0},
                    "decay": {"mean": 5.0, "variance": 1.0},
                    "excitation": {"mean": 1.0, "variance": 0.2},
                },
            },
        )
        assert main(["filter", "--config", str(cfg), "--seed", "1", "--out-dir", str(tmp_path / "o")]) == 2


class TestPipelines:
    def test_simulate_hawkes_artifacts_and_determinism(self, tmp_path):
        cfg = write_config(tmp_path, "c.json", hawkes_config())
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        assert main(["simulate-hawkes", "--config", str(cfg), "--seed", "9", "--out-dir", str(out1)]) == 0
        assert main(["simulate-hawkes", "--config", str(cfg), "--seed", "9", "--out-dir", str(out2)]) == 0
        assert (out1 / "counts.csv").exists()
        assert (out1 / "manifest.json").exists()
        assert file_hashes(out1) == file_hashes(out2)
        manifest = json.loads((out1 / "manifest.json").read_text())
        assert manifest["seed"] == 9
        assert "config_sha256" in manifest

    def test_filter_pipeline_on_simulated_counts(self, tmp_path):
        sim_cfg = write_config(tmp_path, "sim.json", hawkes_config())
        sim_out = tmp_path / "sim"
        assert main(["simulate-hawkes", "--config", str(sim_cfg), "--seed", "3", "--out-dir", str(sim_out)]) == 0
        flt_cfg = write_config(
            tmp_path,
            "flt.json",
            {
                "counts_path": str(sim_out / "counts.csv"),
                "ensemble_size": 30,
                "priors": {
                    "baseline": {"mean": 2.0, "variance": 1.0},
                    "decay": {"mean": 5.0, "variance": 2.0},
                    "excitation": {"mean": 0.5, "variance": 0.2},
                },
                "record_intensity_history": True,
            },
        )
        flt_out = tmp_path / "flt"
        assert main(["filter", "--config", str(flt_cfg), "--seed", "3", "--out-dir", str(flt_out)]) == 0
        for name in ("result.json", "alpha_mean.csv", "edges.csv", "network.json", "diagnostics.csv"):
            assert (flt_out / name).exists(), name
        assert (flt_out / "ensembles" / "node_0000.csv").exists()

        ana_cfg = write_config(
            tmp_path,
            "ana.json",
            {"result_dir": str(flt_out), "measure": "out_degree", "threshold": {"relative_factor": 1.0}},
        )
        ana_out = tmp_path / "ana"
        assert main(["analyze", "--config", str(ana_cfg), "--seed", "0", "--out-dir", str(ana_out)]) == 0
        assert (ana_out / "rank_out_degree.csv").exists()
        assert (ana_out / "subnetwork.json").exists()

    def test_aggregate_mode(self, tmp_path):
        events = tmp_path / "events.csv"
        events.write_text("timestamp,sender\n0.05,a\n0.07,a\n0.15,b\n")
        cfg = write_config(
            tmp_path, "agg.json",
            {"events_path": str(events), "dt": 0.1, "t0": 0.0, "t1": 0.2},
        )
        out = tmp_path / "agg"
        assert main(["aggregate", "--config", str(cfg), "--seed", "0", "--out-dir", str(out)]) == 0
        rows = (out / "counts.csv").read_text().splitlines()
        assert rows[0] == "t,a,b"
        assert rows[1].split(",")[1:] == ["2", "0"]
        assert rows[2].split(",")[1:] == ["0", "1"]

    def test_experiment_1_small(self, tmp_path):
        cfg = write_config(
            tmp_path,
            "e1.json",
            {"s1": 1.5, "s2": 1.5, "n_steps": 150, "ensemble_size": 40,
             "record_intensity_history": True},
        )
        out = tmp_path / "e1"
        assert main(["experiment-1", "--config", str(cfg), "--seed", "2", "--out-dir", str(out)]) == 0
        for name in ("truth.json", "counts.csv", "alpha_mean.csv", "excitation_error.csv",
                     "frobenius.csv", "metrics.json", "diagnostics.csv"):
            assert (out / name).exists(), name
        curve = np.loadtxt(out / "excitation_error.csv", delimiter=",")
        assert curve.shape == (151, 6)
        header = (out / "diagnostics.csv").read_text().splitlines()[0]
        assert header.endswith("rmse_norm")

    def test_experiment_2_small(self, tmp_path):
        cfg = write_config(tmp_path, "e2.json", {"n_steps": 250, "ensemble_size": 30})
        out = tmp_path / "e2"
        assert main(["experiment-2", "--config", str(cfg), "--seed", "2", "--out-dir", str(out)]) == 0
        structure = json.loads((out / "structure.json").read_text())
        assert 0 <= structure["overlap_with_generator"] <= 5

    def test_sweep_small(self, tmp_path):
        cfg = write_config(
            tmp_path,
            "sw.json",
            {"s1_values": [1.5], "s2_values": [0.5, 1.5], "seeds": [0], "n_steps": 120, "ensemble_size": 30},
        )
        out = tmp_path / "sw"
        assert main(["sweep", "--config", str(cfg), "--seed", "0", "--out-dir", str(out)]) == 0
        rows = (out / "sweep.csv").read_text().splitlines()
        assert rows[0] == "s1,s2,frobenius_mean"
        assert len(rows) == 3

    def test_mode_mismatch_rejected(self, tmp_path):
        cfg = write_config(tmp_path, "c.json", {**hawkes_config(), "mode": "simulate-hawkes"})
        assert main(["aggregate", "--config", str(cfg), "--seed", "0"]) == 1
