"""
Functional tests driving the command line end to end
"""

import json
import os

import numpy as np
import pytest
from click.testing import CliRunner

from app import create_cli
from models.errors import ConfigurationError
from utils.data_loader import DataLoader


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def cli():
    return create_cli()


def invoke(runner, cli, args):
    result = runner.invoke(cli, args, catch_exceptions=False)
    assert result.exit_code == 0, result.output
    return result


@pytest.mark.functional
class TestSimulateAndFit:
    """simulate, fit and estimate-spectrum through the CLI"""

    def test_simulate_tsv_relative_path(self, runner, cli):
        """Relative output paths resolve against the working directory"""
        with runner.isolated_filesystem():
            result = invoke(runner, cli, ["simulate", "-N", "30", "-M", "3", "--seed", "4", "--out", "eps.tsv"])
            assert "eps.tsv" in result.output
            sample = DataLoader(os.getcwd()).read_sample("eps.tsv")
            assert sample.N == 30
            assert sample.degrees == (1, 2, 3)

    def test_simulate_binary(self, runner, cli):
        """Binary output with a JSON sidecar matches the TSV rendering"""
        with runner.isolated_filesystem():
            invoke(runner, cli, ["simulate", "-N", "30", "-M", "3", "--seed", "4", "--out", "eps.bin"])
            assert os.path.exists("eps.json")
            binary = DataLoader(os.getcwd()).read_sample("eps.bin")

            invoke(runner, cli, ["simulate", "-N", "30", "-M", "3", "--seed", "4", "--out", "eps.tsv"])
            text = DataLoader(os.getcwd()).read_sample("eps.tsv")
            assert np.array_equal(binary.data, text.data)

    def test_simulate_from_model_file(self, runner, cli, small_spec):
        """A model file fixes the degrees"""
        with runner.isolated_filesystem():
            DataLoader(os.getcwd()).write_spec(small_spec, "model.json")
            invoke(runner, cli, ["simulate", "--config", "model.json", "-N", "20", "--out", "eps.tsv"])
            assert DataLoader(os.getcwd()).read_sample("eps.tsv").degrees == (1, 2, 3, 4)

    def test_fit_with_oracle_covariance(self, runner, cli):
        """Responses plus design fit with model covariances"""
        with runner.isolated_filesystem():
            invoke(
                runner,
                cli,
                ["simulate", "--response", "-N", "40", "-M", "3", "-p", "2", "--seed", "1", "--out", "y.tsv"],
            )
            assert os.path.exists("y.design.tsv")
            result = invoke(
                runner, cli, ["fit", "--data", "y.tsv", "--design", "y.design.tsv", "--out", "fit.tsv"]
            )
            assert "loss" in result.output
            table = DataLoader(os.getcwd()).read_table("fit.tsv", ("degree", "regressor", "beta_hat", "variance"))
            assert table.shape == (3 * 2, 4)
            assert np.all(table[:, 3] > 0)

    def test_fit_with_covariance_file(self, runner, cli, small_spec):
        """A covariance file gives the same fit as the model"""
        from models.lrd_process import covariance_table

        with runner.isolated_filesystem():
            loader = DataLoader(os.getcwd())
            invoke(
                runner,
                cli,
                ["simulate", "--response", "-N", "40", "-M", "4", "-p", "2", "--seed", "1", "--out", "y.tsv"],
            )
            loader.write_covariances(covariance_table(small_spec, 40), "cov.tsv")
            invoke(runner, cli, ["fit", "--data", "y.tsv", "-p", "2", "--covariance", "cov.tsv", "--out", "a.tsv"])
            invoke(runner, cli, ["fit", "--data", "y.tsv", "-p", "2", "--out", "b.tsv"])
            assert np.allclose(loader.read_table("a.tsv"), loader.read_table("b.tsv"), rtol=1e-12)

    def test_estimate_spectrum(self, runner, cli):
        """Whittle estimate lands inside the FARIMA box"""
        with runner.isolated_filesystem():
            invoke(
                runner,
                cli,
                ["simulate", "--response", "-N", "60", "-M", "3", "-p", "2", "--seed", "2", "--out", "y.tsv"],
            )
            invoke(
                runner,
                cli,
                ["estimate-spectrum", "--data", "y.tsv", "--design", "y.design.tsv", "--family", "farima", "--out", "est"],
            )
            with open(os.path.join("est", "theta_hat.json"), encoding="utf-8") as f:
                payload = json.load(f)
            assert payload["family"] == "farima"
            assert 0.005 <= payload["theta_hat"][0] <= 0.495
            assert os.path.exists(os.path.join("est", "periodogram.tsv"))


@pytest.mark.functional
class TestExperimentAndReport:
    """experiment and report through the CLI"""

    def test_config_file_run_and_report(self, runner, cli):
        """A JSON experiment file runs and reports"""
        with runner.isolated_filesystem():
            with open("experiment.json", "w", encoding="utf-8") as f:
                json.dump({"scenarios": ["ipbs"], "N_list": [40], "R": 2, "M": 4, "p": 2, "mode": "oracle"}, f)
            result = invoke(runner, cli, ["experiment", "--config", "experiment.json", "--seed", "5", "--out", "bundle"])
            assert "bundle" in result.output

            with open(os.path.join("bundle", "config.json"), encoding="utf-8") as f:
                assert json.load(f)["seed"] == 5

            invoke(runner, cli, ["report", "--bundle", "bundle", "--which", "emqe-beta", "--which", "lrd-exponents"])
            assert os.path.exists(os.path.join("bundle-report", "emqe-beta", "ipbs_N40_oracle.tsv"))
            assert os.path.exists(os.path.join("bundle-report", "lrd-exponents.tsv"))

    def test_report_defaults_skip_missing_plugin(self, runner, cli):
        """Default report skips selectors the bundle cannot serve"""
        with runner.isolated_filesystem():
            with open("small.json", "w", encoding="utf-8") as f:
                json.dump({"N_list": [40], "M": 3, "p": 2}, f)
            invoke(
                runner,
                cli,
                [
                    "experiment", "--config", "small.json", "--scenario", "dpbs",
                    "--mode", "oracle", "--repetitions", "2", "--out", "b",
                ],
            )
            result = invoke(runner, cli, ["report", "--bundle", "b", "--out", "r"])
            assert "l1-spectral" not in result.output
            assert os.path.isdir(os.path.join("r", "l1-prediction"))

    @pytest.mark.parametrize("flag", ["--paper-scale", "--full-scale"])
    def test_paper_scale_flag(self, runner, cli, mocker, flag):
        """Both spellings of the scale flag select R=100 and N in {50, 100, 500}"""
        run = mocker.patch("controllers.commands.run_experiment")
        with runner.isolated_filesystem():
            invoke(runner, cli, ["experiment", flag, "--pin-theta", "--out", "b"])
        config = run.call_args[0][0]
        assert config.paper_scale
        assert config.pin_theta
        assert config.R == 100
        assert config.N_list == [50, 100, 500]
        assert config.preset == "paper-sim"

    def test_reused_out_needs_overwrite(self, runner, cli):
        """A second run into the same --out fails unless --overwrite is given"""
        args = ["experiment", "--scenario", "ipbs", "--mode", "oracle", "--repetitions", "2", "--out", "b"]
        with runner.isolated_filesystem():
            with open("small.json", "w", encoding="utf-8") as f:
                json.dump({"N_list": [40], "M": 3, "p": 2}, f)
            invoke(runner, cli, args + ["--config", "small.json"])

            result = runner.invoke(cli, args + ["--config", "small.json"])
            assert isinstance(result.exception, ConfigurationError)

            invoke(runner, cli, args + ["--config", "small.json", "--overwrite"])
            with open(os.path.join("b", "manifest.json"), encoding="utf-8") as f:
                assert "ipbs_N40_oracle/emqe_beta.tsv" in json.load(f)["files"]
