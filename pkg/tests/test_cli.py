import json
import xml.etree.ElementTree as ET
from pathlib import Path

import pytest

from mfjump import cli
from mfjump.cli import RunReport, emit_plots, euler_theory, main, monotone_within, run
from mfjump.config import ConfigError, ExperimentConfig
from mfjump.levy import CompoundPoisson, StablePositive
from mfjump.model import builtin_intensity_model, builtin_lipschitz_model

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SMALL_EULER = {
    "experiment": "rate-euler", "seed": 4, "replications": 4,
    "model": {"kind": "lipschitz"},
    "levy": {"family": "cpoisson", "rate": 2.0, "jump_law": "uniform", "jump_params": [0.0, 1.0]},
    "init": {"dist": "uniform", "params": [0.0, 1.0], "beta": 4.0},
    "grid": {"n_list": [4, 8, 16], "n_ref": 128},
    "population": {"N": 32},
}
SMALL_SIM = {
    "experiment": "simulate", "seed": 2, "replications": 3,
    "model": {"kind": "intensity", "positive_part": True},
    "grid": {"n": 16}, "population": {"N": 10}, "simulate": {"record": True},
}


def write_config(tmp_path, raw, name="c.toml"):
    path = tmp_path / name
    path.write_text(ExperimentConfig.from_dict(raw).dumps("json" if name.endswith(".json") else "toml"))
    return path


class TestConfig:
    @pytest.mark.parametrize("fmt", ["toml", "json"])
    def test_round_trip(self, fmt):
        cfg = ExperimentConfig.from_dict(SMALL_EULER)
        again = ExperimentConfig.loads(cfg.dumps(fmt), fmt)
        assert again == cfg

    @pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.toml")), ids=lambda p: p.stem)
    def test_shipped_configs_load(self, path):
        ExperimentConfig.load(path)

    @pytest.mark.parametrize("patch,key", [
        ({"replications": 0}, "replications"),
        ({"seed": -1}, "seed"),
        ({"seed": 2**64}, "seed"),
        ({"workers": 0}, "workers"),
        ({"bogus": 1}, "bogus"),
        ({"grid": {"n_list": [4, 8, 16], "n_ref": 64}}, "grid.n_ref"),
        ({"grid": {"n_list": [4, 6], "n_ref": 128}}, "grid.n_list"),
        ({"grid": {"n_list": [8, 4], "n_ref": 128}}, "grid.n_list"),
        ({"levy": {"family": "gamma"}}, "levy.family"),
        ({"model": {"kind": "lipschitz", "sigma1": 1.0}}, "model.sigma1"),
        ({"experiment": "fit"}, "experiment"),
    ])
    def test_invalid_values_name_the_key(self, patch, key):
        raw = {**SMALL_EULER, **patch}
        with pytest.raises(ConfigError) as exc:
            ExperimentConfig.from_dict(raw)
        assert exc.value.key == key and str(exc.value).startswith(key)

    def test_seed_is_mandatory(self):
        raw = {k: v for k, v in SMALL_EULER.items() if k != "seed"}
        with pytest.raises(ConfigError, match="seed"):
            ExperimentConfig.from_dict(raw)

    def test_inadmissible_model_reported_against_model(self):
        raw = {**SMALL_SIM, "model": {"kind": "intensity", "q": 4.0}}
        with pytest.raises(ConfigError, match="^model"):
            ExperimentConfig.from_dict(raw)

    def test_chaos_reference_population(self):
        raw = {**SMALL_SIM, "experiment": "rate-chaos", "population": {"N_list": [8, 16], "N_ref": 8}}
        with pytest.raises(ConfigError, match="N_ref"):
            ExperimentConfig.from_dict(raw)


class TestTheoryHelpers:
    def test_lipschitz_falls_back_to_classical_order(self):
        theta, pred, note = euler_theory(builtin_lipschitz_model(0.0, 0.5, 1.0, 1.0), CompoundPoisson(1.0))
        assert theta == 0.5 and pred is None and "classical" in note

    def test_square_root_diffusion_is_logarithmic(self):
        theta, pred, _ = euler_theory(builtin_intensity_model(1.0, 0.5, 0.5, 0.3), StablePositive(1.5))
        assert theta is None and pred["branch"] == "log"

    def test_monotone_within(self):
        assert monotone_within([1.0, 0.5, 0.52], [0.01, 0.01, 0.01])
        assert not monotone_within([1.0, 0.5, 0.6], [0.01, 0.01, 0.01])


class TestRuns:
    def test_rate_euler_artifacts(self, tmp_path):
        report = run(ExperimentConfig.from_dict(SMALL_EULER), tmp_path)
        names = {p.name for p in tmp_path.iterdir()}
        assert names == {"config.toml", "report.json", "report.txt", "errors.csv", "rate.svg", "rate.gp"}
        data = json.loads((tmp_path / "report.json").read_text())
        assert data["passed"] == report.passed and len(data["table"]) == 3
        assert ExperimentConfig.load(tmp_path / "config.toml") == ExperimentConfig.from_dict(SMALL_EULER)
        ET.parse(tmp_path / "rate.svg")

    def test_reruns_are_byte_identical_across_workers(self, tmp_path):
        for raw in (SMALL_EULER, SMALL_SIM):
            cfg = ExperimentConfig.from_dict(raw)
            a, b, c = tmp_path / f"{cfg.experiment}1", tmp_path / f"{cfg.experiment}4", tmp_path / f"{cfg.experiment}r"
            run(cfg, a, workers=1)
            run(cfg, b, workers=4)
            run(cfg, c, workers=1)
            for f in sorted(a.iterdir()):
                assert f.read_bytes() == (b / f.name).read_bytes(), f.name
                assert f.read_bytes() == (c / f.name).read_bytes(), f.name

    def test_simulate_trajectories(self, tmp_path):
        report = run(ExperimentConfig.from_dict(SMALL_SIM), tmp_path)
        lines = (tmp_path / "trajectories.csv").read_text().splitlines()
        assert lines[0] == "replication,particle,t,x"
        assert len(lines) == 1 + 3 * 10 * 17
        assert report.summary["negative_fraction"] >= 0 and report.passed


class TestMain:
    def test_predict_rate_log_branch(self, tmp_path, capsys):
        raw = {"experiment": "predict-rate", "seed": 0,
               "rate": {"gamma": 0.5, "eta": 1.0, "rho": 1.0, "alpha_nu": 1.5, "beta_nu": 2.0}}
        assert main(["predict-rate", "--config", str(write_config(tmp_path, raw)), "--out", str(tmp_path)]) == 0
        assert json.loads(capsys.readouterr().out)["branch"] == "log"

    def test_predict_rate_outside_admissible_range_exits_1(self, tmp_path, capsys):
        raw = {"experiment": "predict-rate", "seed": 0, "model": {"kind": "lipschitz"}}
        assert main(["predict-rate", "--config", str(write_config(tmp_path, raw)), "--out", str(tmp_path)]) == 1
        assert "beta_nu/2" in capsys.readouterr().err

    def test_bad_config_exits_1(self, tmp_path, capsys):
        path = tmp_path / "bad.toml"
        path.write_text('experiment = "simulate"\nreplications = 2\n')
        assert main(["simulate", "--config", str(path)]) == 1
        assert "seed" in capsys.readouterr().err

    def test_failed_verdict_exits_2(self, tmp_path, monkeypatch):
        monkeypatch.setattr(cli, "run", lambda cfg, workers=None: RunReport(cfg.experiment, cfg.to_dict(), verdicts={"x": False}))
        assert main(["simulate", "--config", str(write_config(tmp_path, SMALL_SIM))]) == 2

    def test_overrides(self, tmp_path, monkeypatch):
        seen = {}

        def fake_run(cfg, workers=None):
            seen["cfg"], seen["workers"] = cfg, workers
            return RunReport(cfg.experiment, cfg.to_dict(), verdicts={"x": True})

        monkeypatch.setattr(cli, "run", fake_run)
        monkeypatch.setenv("MFJUMP_WORKERS", "3")
        path = write_config(tmp_path, SMALL_EULER, "c.json")
        assert main(["rate-euler", "--config", str(path), "--seed", "77", "--out", "elsewhere"]) == 0
        cfg = seen["cfg"]
        assert (cfg.seed, cfg.workers, cfg.out, seen["workers"]) == (77, 1, "elsewhere", 3)
        assert main(["rate-euler", "--config", str(path), "--workers", "auto"]) == 0
        assert seen["workers"] == "auto"

    def test_worker_count_does_not_reach_outputs(self, tmp_path):
        path = write_config(tmp_path, SMALL_EULER)
        out = tmp_path / "out"
        snapshots = []
        for w in ("1", "4"):
            assert main(["rate-euler", "--config", str(path), "--workers", w, "--out", str(out)]) in (0, 2)
            snapshots.append({f.name: f.read_bytes() for f in out.iterdir()})
        assert snapshots[0] == snapshots[1]


class TestPlots:
    def report(self, table, fit=None):
        return RunReport("rate-euler", {}, table=table, fit=fit, theory_exponent=0.5)

    def test_empty_table_warns(self, tmp_path):
        with pytest.warns(UserWarning, match="empty"):
            assert emit_plots(self.report([]), tmp_path) == []

    def test_single_row(self, tmp_path):
        paths = emit_plots(self.report([(8, 0.1, 0.01, 4)]), tmp_path)
        ET.parse(paths[0])
        assert "plot $data" in paths[1].read_text()

    def test_fit_and_theory_lines(self, tmp_path):
        fit = {"slope": -0.5, "intercept": 0.0, "slope_ci": [-0.6, -0.4], "slope_stderr": 0.05, "weighted": True}
        table = [(8, 0.35, 0.01, 4), (16, 0.25, 0.01, 4), (32, 0.18, 0.01, 4)]
        svg, gp = emit_plots(self.report(table, fit), tmp_path)
        root = ET.parse(svg).getroot()
        assert root.tag.endswith("svg")
        text = gp.read_text()
        assert "title 'fit'" in text and "title 'theory'" in text
