import json

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_array_equal

from sparsevar import config as cfgmod
from sparsevar.cli import main


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


class TestConfig:
    def test_roundtrip(self):
        cfg = cfgmod.RunConfig(seed=7)
        cfg.fit.lam = 0.05
        cfg.montecarlo.sample_sizes = [100, 300]
        text = cfgmod.dumps(cfg)
        assert "lambda = 0.05" in text
        assert cfgmod.loads(text) == cfg

    def test_defaults_when_missing(self):
        cfg = cfgmod.loads("[fit]\nr = 3\n")
        assert cfg.fit.r == 3 and cfg.fit.penalty == "scad" and cfg.seed == cfgmod.DEFAULT_SEED

    def test_overrides(self):
        cfg = cfgmod.RunConfig()
        cfgmod.apply_override(cfg, "fit.lambda=0.2")
        cfgmod.apply_override(cfg, "montecarlo.estimators=oracle,scad:20")
        cfgmod.apply_override(cfg, "seed=3")
        cfgmod.apply_override(cfg, "fit.certify=true")
        assert cfg.fit.lam == 0.2 and cfg.seed == 3 and cfg.fit.certify is True
        assert cfg.montecarlo.estimators == ["oracle", "scad:20"]

    def test_bad_keys(self):
        with pytest.raises(cfgmod.ConfigError):
            cfgmod.loads("[fit]\nbogus = 1\n")
        with pytest.raises(cfgmod.ConfigError):
            cfgmod.apply_override(cfgmod.RunConfig(), "fit.lambda")
        with pytest.raises(cfgmod.ConfigError):
            cfgmod.apply_override(cfgmod.RunConfig(), "nosuch.key=1")


class TestSimulate:
    def test_deterministic_and_header(self, workdir):
        assert main(["simulate", "--T", "50", "--seed", "4", "--out", "a.csv"]) == 0
        assert main(["--seed", "4", "simulate", "--T", "50", "--out", "b.csv"]) == 0
        assert (workdir / "a.csv").read_bytes() == (workdir / "b.csv").read_bytes()
        df = pd.read_csv(workdir / "a.csv")
        assert df.shape == (50, 8)
        main(["simulate", "--T", "50", "--seed", "5", "--out", "c.csv"])
        assert (workdir / "a.csv").read_bytes() != (workdir / "c.csv").read_bytes()

    def test_config_file(self, workdir):
        (workdir / "run.toml").write_text('seed = 9\n[simulate]\nT = 20\nout = "x.csv"\n')
        assert main(["simulate", "--config", "run.toml"]) == 0
        assert len(pd.read_csv(workdir / "x.csv")) == 20


class TestFit:
    @pytest.fixture
    def data(self, workdir):
        main(["simulate", "--T", "300", "--seed", "1", "--out", "d.csv"])
        return "d.csv"

    def test_unpenalized_dense(self, workdir, data):
        assert main(["fit", "--data", data, "--lambda", "0", "--out", "f.json"]) == 0
        rep = json.loads((workdir / "f.json").read_text())
        assert len(rep["support"]) == rep["p"] == 128

    def test_huge_lambda_empty(self, workdir, data):
        assert main(["fit", "--data", data, "--lambda", "1e6", "--out", "f.json"]) == 0
        rep = json.loads((workdir / "f.json").read_text())
        assert rep["support"] == [] and rep["theta"] == {}

    def test_certificate_and_covariance(self, workdir, data, capsys):
        code = main(["fit", "--data", data, "--set", "fit.a=20", "--certify", "--covariance", "--out", "f.json"])
        assert code == 0
        rep = json.loads((workdir / "f.json").read_text())
        assert set(rep["certificate"]) >= {"stationarity_gap", "inactive_margin", "eigen_margin", "passed"}
        q = len(rep["support"])
        assert np.asarray(rep["covariance"]["matrix"]).shape == (q, q)
        assert "best_lambda" in rep["cv"]
        assert "certificate passed=" in capsys.readouterr().out

    def test_missing_file(self, workdir):
        assert main(["fit", "--data", "nope.csv"]) == 2

    def test_cv_command(self, workdir, data):
        assert main(["cv", "--data", data, "--set", "cv.n_lambda=10", "--out", "cv.json"]) == 0
        rep = json.loads((workdir / "cv.json").read_text())
        assert len(rep["curve"]["lambdas"]) == 10
        assert rep["fit"]["lambda"] == rep["best_lambda"]


class TestMonteCarlo:
    def test_smoke(self, workdir, capsys):
        args = ["montecarlo", "--replications", "2", "--set", "montecarlo.sample_sizes=[80]",
                "--set", 'montecarlo.estimators=["oracle","lasso"]', "--out", "mc.json", "--table", "mc.txt"]
        assert main(args) == 0
        rep = json.loads((workdir / "mc.json").read_text())
        assert {c["estimator"] for c in rep["cells"]} == {"Oracle", "Lasso"}
        assert "RMSE" in (workdir / "mc.txt").read_text()
        assert "Lasso" in capsys.readouterr().out

    def test_deterministic(self, workdir):
        args = ["montecarlo", "--replications", "2", "--set", "montecarlo.sample_sizes=[80]",
                "--set", 'montecarlo.estimators=["scad:20"]']
        main(args + ["--out", "a.json", "--table", "a.txt"])
        main(args + ["--out", "b.json", "--table", "b.txt"])
        a = json.loads((workdir / "a.json").read_text())
        b = json.loads((workdir / "b.json").read_text())
        a.pop("seconds"), b.pop("seconds")
        assert a == b


class TestForecast:
    def test_synthetic(self, workdir):
        args = ["forecast", "--set", "forecast.r=2", "--set", "forecast.start=2006-01", "--out", "fc.json",
                "--set", "forecast.tables_prefix=fc"]
        assert main(args) == 0
        rep = json.loads((workdir / "fc.json").read_text())
        assert rep["counts"] == {"1": 23, "3": 21, "6": 18, "12": 12}
        rmse = pd.read_csv(workdir / "fc_rmse.csv")
        assert list(rmse.columns) == ["method", "h", "3", "6", "12", "24", "36", "60", "84", "120"]
        ratio = pd.read_csv(workdir / "fc_ratio.csv")
        assert_array_equal(ratio["h"], [1, 3, 6, 12])

    def test_data_file(self, workdir):
        from sparsevar.forecast import synthetic_yields
        synthetic_yields(3, n_months=60).to_csv(workdir / "y.csv")
        args = ["forecast", "--data", "y.csv", "--set", "forecast.r=2", "--set", "forecast.start=1989-01",
                "--set", "forecast.end=1990-12", "--set", "forecast.horizons=[1,3]", "--out", "fc.json"]
        assert main(args) == 0
        assert json.loads((workdir / "fc.json").read_text())["counts"] == {"1": 23, "3": 21}
