"""
Integration tests for the experiment pipeline, result bundles and reports
"""

import json
import os
from pathlib import Path

import numpy as np
import pytest

from controllers.experiment import REPORT_SELECTORS, ExperimentConfig, ResultBundle, report, run_experiment
from models.errors import ConfigurationError, NotComputedError
from views.report_writer import MANIFEST_NAME


def small_config(out_dir, **overrides):
    settings = dict(scenarios=["dpbs"], N_list=[50], R=2, M=5, p=5, mode="oracle", seed=99, out_dir=str(out_dir))
    settings.update(overrides)
    return ExperimentConfig(**settings)


def files_on_disk(out_dir):
    root = Path(out_dir)
    return sorted(p.relative_to(root).as_posix() for p in root.rglob("*") if p.is_file() and p.name != MANIFEST_NAME)


@pytest.mark.integration
class TestExperimentConfig:
    """Defaults, presets and validation of ExperimentConfig"""

    def test_desk_defaults(self, temp_directory):
        """Without overrides the desk-scale study is configured"""
        config = ExperimentConfig(out_dir=temp_directory)
        assert config.R == 20
        assert config.N_list == [50, 100, 200]
        assert config.M == 30 and config.p == 5
        assert config.modes == ["oracle", "plugin"]
        assert config.preset == "paper-sim"
        assert config.times == "paper-times-500"

    def test_paper_scale(self, temp_directory):
        """paper_scale selects R=100 and N in {50, 100, 500}"""
        config = ExperimentConfig(out_dir=temp_directory, paper_scale=True)
        assert config.R == 100
        assert config.N_list == [50, 100, 500]

    def test_full_scale_key_still_read(self, temp_directory):
        """Experiment files written with full_scale keep working"""
        config = ExperimentConfig.from_dict({"full_scale": True, "out_dir": temp_directory})
        assert config.paper_scale
        assert config.R == 100

    def test_old_preset_names_resolve(self, temp_directory):
        """Older preset names map onto the current ones"""
        config = ExperimentConfig(out_dir=temp_directory, preset="sim-study", times="study-times-500")
        assert config.preset == "paper-sim"
        assert config.times == "paper-times-500"

    def test_selected_times_rescale(self, temp_directory):
        """The 9-point preset is rescaled from 0..499 to 0..N-1"""
        config = small_config(temp_directory)
        assert config.selected_times(500) == [0, 62, 124, 187, 249, 311, 374, 436, 499]
        assert config.selected_times(50)[0] == 0
        assert config.selected_times(50)[-1] == 49

    def test_invalid_settings(self, temp_directory):
        """Unknown scenarios, modes, keys and oversized p are rejected"""
        with pytest.raises(ConfigurationError):
            small_config(temp_directory, scenarios=["garch"])
        with pytest.raises(ConfigurationError):
            small_config(temp_directory, mode="bayes")
        with pytest.raises(ConfigurationError):
            small_config(temp_directory, p=80)
        with pytest.raises(ConfigurationError):
            small_config(temp_directory, preset="sim-2030")
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_dict({"repetitions": 3})

    def test_load_with_overrides(self, temp_directory):
        """Non-None overrides replace values from the JSON file"""
        path = os.path.join(temp_directory, "experiment.json")
        with open(path, "w", encoding="utf-8") as f:
            json.dump({"scenarios": ["ipbs"], "R": 3, "N_list": [60]}, f)
        config = ExperimentConfig.load(path, R=4, seed=None)
        assert config.scenarios == ["ipbs"]
        assert config.R == 4
        assert config.N_list == [60]

    def test_snapshot_ignores_output_handling(self, temp_directory):
        """Output directory, overwrite and thread count do not enter the snapshot"""
        a = small_config(os.path.join(temp_directory, "a"), workers=1)
        b = small_config(os.path.join(temp_directory, "b"), workers=4, overwrite=True)
        assert a.snapshot() == b.snapshot()


@pytest.mark.integration
class TestRunExperiment:
    """End-to-end study runs on tiny configurations"""

    def test_oracle_smoke_run(self, temp_directory):
        """An oracle run writes a verifiable bundle with one cell"""
        bundle = run_experiment(small_config(temp_directory))
        assert bundle.labels == ["dpbs_N50_oracle"]
        assert bundle.verify()

        emqe = bundle.table("dpbs_N50_oracle/emqe_beta.tsv")
        assert emqe.shape == (5 * 5, 3)
        assert set(emqe[:, 0].astype(int)) == {1, 2, 3, 4, 5}
        assert np.all(emqe[:, 2] >= 0)
        assert bundle.manifest["failures"] == {"dpbs_N50": 0}
        assert bundle.manifest["trace_check"]["dpbs"] > 0
        assert not bundle.has("theta_hat.tsv")

    def test_thread_count_does_not_change_files(self, temp_directory):
        """Serial and threaded runs produce identical hashes"""
        serial = run_experiment(small_config(os.path.join(temp_directory, "serial"), workers=1))
        threaded = run_experiment(small_config(os.path.join(temp_directory, "threaded"), workers=2))
        assert serial.manifest["files"] == threaded.manifest["files"]

    def test_pinned_plugin_equals_oracle(self, temp_directory):
        """With the true spectral parameter the plug-in path reproduces the oracle"""
        bundle = run_experiment(small_config(temp_directory, mode="both", pin_theta=True))
        assert bundle.labels == ["dpbs_N50_oracle", "dpbs_N50_plugin"]
        oracle = bundle.table("dpbs_N50_oracle/beta_hat_mean.tsv")
        plugin = bundle.table("dpbs_N50_plugin/beta_hat_mean.tsv")
        assert np.allclose(oracle, plugin, rtol=0, atol=1e-10)
        spectral = bundle.table("dpbs_N50_plugin/l1_spectral.tsv")
        assert np.allclose(spectral[:, 2], 0.0)

    def test_estimated_plugin(self, temp_directory):
        """Plug-in runs record theta estimates inside the parameter box"""
        bundle = run_experiment(small_config(temp_directory, mode="plugin", M=3, p=2))
        theta = bundle.table("theta_hat.tsv")
        # two repetitions, three DPBS parameters each
        assert theta.shape == (6, 5)
        assert np.all((theta[:, 4] > 0) & (theta[:, 4] < 1))
        assert bundle.has("dpbs_N50_plugin/l1_spectral_hist.json")


@pytest.mark.integration
class TestBundleDirectory:
    """Reuse of an output directory"""

    def test_second_run_refused(self, temp_directory):
        """A non-empty bundle directory is not written into silently"""
        run_experiment(small_config(temp_directory, scenarios=["ipbs"], M=3, p=2))
        with pytest.raises(ConfigurationError):
            run_experiment(small_config(temp_directory, M=3, p=2))

    def test_overwrite_leaves_no_stale_files(self, temp_directory):
        """Replacing an ipbs bundle by a dpbs one removes every ipbs file"""
        run_experiment(small_config(temp_directory, scenarios=["ipbs"], M=3, p=2))
        assert any(name.startswith("ipbs_") for name in files_on_disk(temp_directory))

        bundle = run_experiment(small_config(temp_directory, M=3, p=2, overwrite=True))
        on_disk = files_on_disk(temp_directory)
        assert not any(name.startswith("ipbs_") for name in on_disk)
        assert on_disk == sorted(bundle.manifest["files"])
        assert bundle.verify()

    def test_overwrite_keeps_foreign_directory(self, temp_directory):
        """A directory without a manifest is never cleared"""
        keep = os.path.join(temp_directory, "notes.txt")
        with open(keep, "w", encoding="utf-8") as f:
            f.write("field notes\n")
        with pytest.raises(ConfigurationError):
            run_experiment(small_config(temp_directory, overwrite=True))
        assert os.path.exists(keep)


@pytest.mark.integration
class TestReports:
    """Report selectors on a small bundle"""

    @pytest.fixture
    def bundle(self, temp_directory):
        return run_experiment(
            small_config(os.path.join(temp_directory, "bundle"), mode="both", pin_theta=True, M=4, p=2)
        )

    def test_every_selector(self, bundle, temp_directory):
        """Every selector writes at least one file"""
        out_dir = os.path.join(temp_directory, "report")
        for selector in REPORT_SELECTORS:
            paths = report(bundle, selector, out_dir)
            assert paths
            assert all(p.exists() for p in paths)

    def test_default_destination(self, bundle):
        """Reports default to a sibling '<bundle>-report' directory"""
        paths = report(bundle, "beta-coefficients")
        assert paths[0].parent == bundle.out_dir.with_name("bundle-report")

    def test_beta_surfaces_cover_grid(self, bundle, temp_directory):
        """Surfaces are written for every predictor"""
        path = report(bundle, "beta-surfaces", os.path.join(temp_directory, "report"))[0]
        table = np.loadtxt(path, delimiter="\t", skiprows=1)
        assert set(table[:, 0].astype(int)) == {1, 2}

    def test_unknown_selector(self, bundle):
        """An unknown selector is a configuration error"""
        with pytest.raises(ConfigurationError):
            report(bundle, "heatmap")

    def test_statistic_not_computed(self, temp_directory):
        """Plug-in statistics are unavailable in an oracle-only bundle"""
        bundle = run_experiment(small_config(os.path.join(temp_directory, "oracle"), M=3, p=2))
        with pytest.raises(NotComputedError):
            report(bundle, "l1-spectral", os.path.join(temp_directory, "report"))

    def test_reload(self, bundle):
        """A bundle read back from disk carries the same manifest"""
        reloaded = ResultBundle.load(bundle.out_dir)
        assert reloaded.manifest == bundle.manifest
