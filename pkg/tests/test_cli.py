import json

import pytest

from hai_sbi import cli


def write_config(path, config):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config, fh, indent=2)


def homogeneous_config(**overrides):
    config = {
        "schema_version": 1,
        "model": {"kind": "homogeneous", "n_floors": 1, "locations_per_floor": 20,
                  "beds_per_room": 2, "horizon": 12, "alpha": 0.1, "gamma": 0.05},
        "rates": 0.15,
        "prior": {"mu0": -3.0, "sigma0": 1.0},
        "estimator": {"kind": "abc", "budget": 60, "top_k": 20},
        "paths": {"observed_summary": "sim/summary.csv", "fit_dir": "fit"},
        "analysis": {"posterior_draws": 200, "band_draws": 4,
                     "interventions": [{"label": "noop"}]},
        "seeds": {"data": 3, "fit": 4, "analysis": 5},
    }
    config.update(overrides)
    return config


def run(argv):
    return cli.main(argv)


@pytest.fixture
def workspace(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


class TestSimulate:
    def test_writes_all_outputs(self, workspace):
        write_config("run.json", homogeneous_config())
        assert run(["simulate", "--config", "run.json", "--out", "sim"]) == 0
        for name in ("epidemic.csv", "summary.csv", "summary_scale.json",
                     "epidemic.png", "manifest.json"):
            assert (workspace / "sim" / name).exists()

    def test_rerun_byte_identical(self, workspace):
        write_config("run.json", homogeneous_config())
        run(["simulate", "--config", "run.json", "--out", "a"])
        run(["simulate", "--config", "run.json", "--out", "b"])
        for name in ("epidemic.csv", "summary.csv", "summary_scale.json",
                     "manifest.json", "epidemic.png"):
            assert (workspace / "a" / name).read_bytes() == \
                   (workspace / "b" / name).read_bytes()

    def test_seed_override_changes_data(self, workspace):
        write_config("run.json", homogeneous_config())
        run(["simulate", "--config", "run.json", "--out", "a"])
        run(["simulate", "--config", "run.json", "--out", "c", "--seed", "77"])
        assert (workspace / "a" / "epidemic.csv").read_text() != \
               (workspace / "c" / "epidemic.csv").read_text()

    def test_missing_traces_path_fails_cleanly(self, workspace, capsys):
        config = homogeneous_config()
        config["model"] = {"kind": "trace", "traces": "nope.csv",
                           "layout": "nolayout.csv", "alpha": 0.0, "gamma": 0.0}
        write_config("bad.json", config)
        assert run(["simulate", "--config", "bad.json", "--out", "simbad"]) == 1
        assert "does not exist" in capsys.readouterr().err
        assert not (workspace / "simbad" / "epidemic.csv").exists()

    def test_invalid_schema_version(self, workspace, capsys):
        write_config("bad.json", homogeneous_config(schema_version=99))
        assert run(["simulate", "--config", "bad.json", "--out", "x"]) == 1
        assert "schema_version" in capsys.readouterr().err


class TestFit:
    def setup_observed(self):
        write_config("run.json", homogeneous_config())
        run(["simulate", "--config", "run.json", "--out", "sim"])

    def test_abc_fit_reports_acceptance(self, workspace):
        self.setup_observed()
        assert run(["fit", "--config", "run.json", "--out", "fit"]) == 0
        report = json.loads((workspace / "fit" / "fit_report.json").read_text())
        assert report["estimator"] == "abc"
        assert report["accepted"] == 20
        assert report["acceptance_rate"] == pytest.approx(20 / 60)
        assert (workspace / "fit" / "draws.csv").exists()

    def test_npe_fit_writes_weights_and_losses(self, workspace):
        self.setup_observed()
        config = homogeneous_config()
        config["estimator"] = {
            "kind": "npe", "budget": 64,
            "encoder": {"hidden_width": 8, "head_kind": "scalar-gaussian",
                        "target_transform": "log"},
            "train": {"max_epochs": 3, "patience": 3, "batch_size": 16},
        }
        write_config("npe.json", config)
        assert run(["fit", "--config", "npe.json", "--out", "fit_npe"]) == 0
        report = json.loads((workspace / "fit_npe" / "fit_report.json").read_text())
        assert {"final_train_loss", "final_val_loss", "budget"} <= set(report)
        assert (workspace / "fit_npe" / "weights.json").exists()
        posterior = json.loads((workspace / "fit_npe" / "posterior.json").read_text())
        assert posterior["kind"] == "parametric"
        assert posterior["transform"] == "log"
        assert posterior["truncate_at_zero"] is False  # log heads never need it

    def test_npe_natural_head_truncates_by_default(self, workspace):
        self.setup_observed()
        config = homogeneous_config()
        config["estimator"] = {
            "kind": "npe", "budget": 64,
            "encoder": {"hidden_width": 8, "head_kind": "scalar-gaussian",
                        "target_transform": "natural"},
            "train": {"max_epochs": 3, "patience": 3, "batch_size": 16},
        }
        write_config("npe_nat.json", config)
        assert run(["fit", "--config", "npe_nat.json", "--out", "fit_nat"]) == 0
        posterior = json.loads((workspace / "fit_nat" / "posterior.json").read_text())
        assert posterior["truncate_at_zero"] is True

    def test_reject_fit(self, workspace):
        self.setup_observed()
        config = homogeneous_config()
        config["estimator"] = {"kind": "reject", "target_accept": 15,
                               "bound_budget": 120, "max_proposals": 20000}
        config["paths"]["observed_epidemic"] = "sim/epidemic.csv"
        write_config("rej.json", config)
        assert run(["fit", "--config", "rej.json", "--out", "fit_rej"]) == 0
        report = json.loads((workspace / "fit_rej" / "fit_report.json").read_text())
        assert report["estimator"] == "rejection"
        assert report["accepted"] == 15
        assert report["total_proposals"] >= 15

    def test_missing_observed_summary(self, workspace, capsys):
        write_config("run.json", homogeneous_config())
        assert run(["fit", "--config", "run.json", "--out", "fit"]) == 1
        assert "observed summary" in capsys.readouterr().err

    def test_unknown_estimator(self, workspace, capsys):
        self.setup_observed()
        write_config("bad.json", homogeneous_config(
            estimator={"kind": "magic", "budget": 10}))
        assert run(["fit", "--config", "bad.json", "--out", "fit2"]) == 1
        assert "magic" in capsys.readouterr().err


class TestAnalyze:
    def run_pipeline(self):
        write_config("run.json", homogeneous_config())
        run(["simulate", "--config", "run.json", "--out", "sim"])
        run(["fit", "--config", "run.json", "--out", "fit"])
        return run(["analyze", "--config", "run.json", "--out", "analysis"])

    def test_writes_tables_and_figures(self, workspace):
        assert self.run_pipeline() == 0
        out = workspace / "analysis"
        for name in ("posterior_summary.csv", "posterior_summary.png",
                     "ppc_bands.csv", "ppc_bands.png",
                     "intervention_bands.csv", "intervention_bands.png",
                     "manifest.json"):
            assert (out / name).exists()
        # homogeneous posterior is scalar: correlation must be skipped
        assert not (out / "correlation.csv").exists()
        header = (out / "posterior_summary.csv").read_text().splitlines()[0]
        assert header == "component,mean,sd,q05,q95"

    def test_identity_intervention_equals_baseline(self, workspace):
        self.run_pipeline()
        rows = (workspace / "analysis" / "intervention_bands.csv").read_text().splitlines()
        baseline = [r.split(",", 2)[2] for r in rows[1:] if r.startswith("no intervention,")]
        noop = [r.split(",", 2)[2] for r in rows[1:] if r.startswith("noop,")]
        assert baseline == noop

    def test_rerun_byte_identical(self, workspace):
        self.run_pipeline()
        run(["analyze", "--config", "run.json", "--out", "analysis2"])
        for name in ("posterior_summary.csv", "ppc_bands.csv",
                     "intervention_bands.csv", "manifest.json"):
            assert (workspace / "analysis" / name).read_bytes() == \
                   (workspace / "analysis2" / name).read_bytes()

    def test_heterogeneous_gets_correlation(self, workspace):
        config = homogeneous_config()
        config["model"]["kind"] = "heterogeneous"
        config["rates"] = [0.05, 0.1, 0.05]
        config["prior"] = {"mu0": -3.0, "sigma0": 1.0}
        write_config("het.json", config)
        run(["simulate", "--config", "het.json", "--out", "sim"])
        run(["fit", "--config", "het.json", "--out", "fit"])
        assert run(["analyze", "--config", "het.json", "--out", "anal_het"]) == 0
        assert (workspace / "anal_het" / "correlation.csv").exists()
        assert (workspace / "anal_het" / "correlation.png").exists()

    def test_missing_fit_dir(self, workspace, capsys):
        write_config("run.json", homogeneous_config())
        run(["simulate", "--config", "run.json", "--out", "sim"])
        assert run(["analyze", "--config", "run.json", "--out", "a"]) == 1
        assert "fit outputs" in capsys.readouterr().err


class TestSynthData:
    CONFIG = {
        "schema_version": 1,
        "synth": {"n_floors": 5, "rooms_per_floor": 19, "beds_per_room": 2,
                  "horizon": 53, "admission_rate": 0.5, "mean_stay": 3.0,
                  "screen_positive_rate": 0.35},
        "seeds": {"data": 99},
    }

    def test_default_schema_shape(self, workspace):
        write_config("synth.json", self.CONFIG)
        assert run(["synth-data", "--config", "synth.json", "--out", "synth"]) == 0
        layout_lines = (workspace / "synth" / "layout.csv").read_text().splitlines()
        assert len(layout_lines) == 96  # header + 95 rooms
        traces = (workspace / "synth" / "traces.csv").read_text().splitlines()
        assert traces[0] == "patient_id,week,floor,room,screen_result"
        weeks = {int(r.split(",")[1]) for r in traces[1:]}
        assert max(weeks) == 53

    def test_deterministic(self, workspace):
        write_config("synth.json", self.CONFIG)
        run(["synth-data", "--config", "synth.json", "--out", "a"])
        run(["synth-data", "--config", "synth.json", "--out", "b"])
        assert (workspace / "a" / "traces.csv").read_bytes() == \
               (workspace / "b" / "traces.csv").read_bytes()

    def test_validator_accepts_output(self, workspace, capsys):
        write_config("synth.json", self.CONFIG)
        run(["synth-data", "--config", "synth.json", "--out", "synth"])
        assert run(["validate", "--traces", "synth/traces.csv",
                    "--layout", "synth/layout.csv"]) == 0
        assert "ok" in capsys.readouterr().out


class TestValidateCommand:
    def test_corrupted_traces_flagged(self, workspace, capsys):
        write_config("synth.json", TestSynthData.CONFIG)
        run(["synth-data", "--config", "synth.json", "--out", "synth"])
        lines = (workspace / "synth" / "traces.csv").read_text().splitlines()
        # put the first data row's patient on a floor its room is not on
        pid, week, floor, room, screen = lines[1].split(",")
        lines[1] = ",".join([pid, week, str(int(floor) % 5 + 1), room, screen])
        (workspace / "synth" / "bad.csv").write_text("\n".join(lines) + "\n")
        assert run(["validate", "--traces", "synth/bad.csv",
                    "--layout", "synth/layout.csv"]) == 1
        out = capsys.readouterr().out
        assert "violations" in out


def test_trace_model_end_to_end(workspace):
    write_config("synth.json", TestSynthData.CONFIG)
    run(["synth-data", "--config", "synth.json", "--out", "synth"])
    config = {
        "schema_version": 1,
        "model": {"kind": "trace", "traces": "synth/traces.csv",
                  "layout": "synth/layout.csv", "alpha": 0.0, "gamma": 0.0},
        "rates": [0.05, 0.02, 0.04, 0.06, 0.08, 0.1, 0.05],
        "prior": {"mu0": -3.0, "sigma0": 1.0},
        "estimator": {"kind": "abc", "budget": 24, "top_k": 20},
        "paths": {"observed_summary": "sim/summary.csv", "fit_dir": "fit"},
        "analysis": {"posterior_draws": 100, "band_draws": 2,
                     "interventions": [{"label": "room off", "room_scale": 0.0}]},
        "seeds": {"data": 11, "fit": 12, "analysis": 13},
    }
    write_config("trace.json", config)
    assert run(["simulate", "--config", "trace.json", "--out", "sim"]) == 0
    assert run(["fit", "--config", "trace.json", "--out", "fit"]) == 0
    assert run(["analyze", "--config", "trace.json", "--out", "analysis"]) == 0
    content = (workspace / "sim" / "epidemic.csv").read_text()
    assert "NA" in content  # tri-state export for absent patient-weeks


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--version"])
    assert exc.value.code == 0


def test_log_env_var_accepted(workspace, monkeypatch):
    monkeypatch.setenv("HAI_SBI_LOG", "INFO")
    write_config("run.json", homogeneous_config())
    assert run(["simulate", "--config", "run.json", "--out", "sim"]) == 0
