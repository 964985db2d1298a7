"""
Command handlers: one click command per pipeline entry point
"""

import logging
from pathlib import Path

import click
import numpy as np

from config import Config
from controllers.experiment import REPORT_SELECTORS, ExperimentConfig, ResultBundle, report, run_experiment
from models.errors import DataFormatError
from models.lrd_process import SIMULATION_METHODS, SpharmaSpec, simulate
from models.regression import (
    ToeplitzCov,
    anova_design,
    gls_fit,
    ols_residuals,
    oracle_covariances,
    synthesize_response,
    true_beta,
)
from models.spectral_est import SPECTRAL_FAMILIES, ContrastProblem, SpectralFamily, minimum_contrast, periodogram
from utils.data_loader import DataLoader

logger = logging.getLogger(__name__)

SCENARIO_CHOICE = click.Choice(Config.EXPERIMENT["SCENARIOS"], case_sensitive=False)


def _loader() -> DataLoader:
    """Relative paths resolve against the working directory at call time"""
    return DataLoader(Path.cwd())


@click.command("simulate")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="JSON model description")
@click.option("--scenario", type=SCENARIO_CHOICE, default="dpbs", show_default=True)
@click.option("-N", "--n-samples", "N", type=int, default=500, show_default=True)
@click.option("-M", "--truncation", "M", type=int, default=30, show_default=True)
@click.option("-p", "--regressors", "p", type=int, default=5, show_default=True)
@click.option("--seed", type=int, default=None, help="Master seed")
@click.option("--method", type=click.Choice(SIMULATION_METHODS), default=None,
              help="exact: circulant embedding; filter: truncated fractional filter")
@click.option("--burn-in", type=int, default=None, help="Warm-up of the filter method")
@click.option("--response/--errors-only", default=False, help="Add X beta to the errors")
@click.option("--out", type=click.Path(), required=True, help=".tsv or .bin output file")
def simulate_command(config_path, scenario, N, M, p, seed, method, burn_in, response, out):
    """Simulate error (or response) coefficients V_{n,j}(t)"""
    loader = _loader()
    spec = loader.read_spec(config_path) if config_path else SpharmaSpec.sim_study(scenario, M)
    sample = simulate(spec, N, burn_in=burn_in, seed=seed, workers=Config.WORKERS, method=method)
    if response:
        design = anova_design(N, p)
        sample = synthesize_response(design, true_beta(spec.M, p), sample)
        loader.write_design(design, Path(out).with_suffix(".design.tsv"))
    logger.info("Simulated %s sample with N=%d, M=%d", scenario, N, spec.M)
    for path in loader.write_sample(sample, out):
        click.echo(f"wrote {path}")


@click.command("fit")
@click.option("--data", type=click.Path(dir_okay=False), required=True, help="Response sample")
@click.option("--design", type=click.Path(dir_okay=False), help="Design TSV (default: ANOVA blocks)")
@click.option("-p", "--regressors", "p", type=int, default=5, show_default=True)
@click.option("--covariance", type=click.Path(dir_okay=False), help="TSV of B_n(t) per degree")
@click.option("--scenario", type=SCENARIO_CHOICE, default="dpbs", show_default=True,
              help="Model providing B_n(t) when --covariance is absent")
@click.option("--out", type=click.Path(), required=True, help="Fit TSV")
def fit_command(data, design, p, covariance, scenario, out):
    """Oracle GLS fit of a response sample"""
    loader = _loader()
    Y = loader.read_sample(data)
    X = loader.read_design(design) if design else anova_design(Y.N, p)
    if covariance:
        B = loader.read_covariances(covariance)
        covs = {}
        for n in Y.degrees:
            if n not in B or B[n].size < Y.N:
                raise DataFormatError(f"{covariance}: degree {n} needs lags 0..{Y.N - 1}")
            covs[n] = ToeplitzCov.aggregated(n, B[n][: Y.N], 2 * n + 1)
    else:
        covs = oracle_covariances(SpharmaSpec.sim_study(scenario, Y.M, Y.degrees[0]), Y.N)
    fit = gls_fit(X, Y, covs, workers=Config.WORKERS)
    logger.info("GLS fit over %d degrees, loss %.6g", len(fit.degrees), fit.loss)
    click.echo(f"wrote {loader.write_fit(fit, out)} (loss {fit.loss:.6g})")


@click.command("estimate-spectrum")
@click.option("--data", type=click.Path(dir_okay=False), required=True, help="Error or response sample")
@click.option("--family", type=click.Choice(SPECTRAL_FAMILIES), default="dpbs", show_default=True)
@click.option("--scenario", type=SCENARIO_CHOICE, default="dpbs", show_default=True,
              help="Model providing the SRD factors")
@click.option("--design", type=click.Path(dir_okay=False), help="Remove an OLS fit on this design first")
@click.option("--out", type=click.Path(file_okay=False), required=True)
def estimate_spectrum_command(data, family, scenario, design, out):
    """Minimum-contrast estimate of the spectral parameter"""
    loader = _loader()
    sample = loader.read_sample(data)
    if design:
        sample = ols_residuals(loader.read_design(design), sample)
    template = SpharmaSpec.sim_study(scenario, sample.M, sample.degrees[0])
    pset = periodogram(sample)
    result = minimum_contrast(ContrastProblem(SpectralFamily.create(family, template), pset))

    out = Path(out)
    loader.write_periodogram(pset, out / "periodogram.tsv")
    loader.write_json(
        out / "theta_hat.json",
        {
            "family": family,
            "theta_hat": [float(v) for v in result.theta_hat],
            "contrast": result.contrast,
            "iterations": result.iterations,
            "converged": result.converged,
        },
    )
    click.echo(f"theta_hat = {np.array2string(result.theta_hat, precision=6)} (converged: {result.converged})")


@click.command("experiment")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="JSON experiment file")
@click.option("--seed", type=int, default=None)
@click.option("--mode", type=click.Choice(Config.EXPERIMENT["MODES"]), default=None)
@click.option("--scenario", type=SCENARIO_CHOICE, default=None, help="Restrict to one scenario")
@click.option("--out", type=click.Path(file_okay=False), default=None)
@click.option("--paper-scale", "--full-scale", "paper_scale", is_flag=True,
              help="R=100, N in {50, 100, 500}")
@click.option("--repetitions", "R", type=int, default=None)
@click.option("--workers", type=int, default=None)
@click.option("--pin-theta", is_flag=True,
              help="Plug-in path uses the true spectral parameter (isolates the estimation cost)")
@click.option("--overwrite", is_flag=True, help="Replace an earlier result bundle in --out")
def experiment_command(config_path, seed, mode, scenario, out, paper_scale, R, workers, pin_theta, overwrite):
    """Run the Monte Carlo study and write a result bundle"""
    config = ExperimentConfig.load(
        config_path,
        seed=seed,
        mode=mode,
        scenarios=[scenario] if scenario else None,
        out_dir=out,
        paper_scale=paper_scale or None,
        R=R,
        workers=workers,
        pin_theta=pin_theta or None,
        overwrite=overwrite or None,
    )
    bundle = run_experiment(config)
    click.echo(f"bundle written to {bundle.out_dir} ({len(bundle.manifest['files'])} files)")


@click.command("report")
@click.option("--bundle", "bundle_dir", type=click.Path(file_okay=False), required=True)
@click.option("--which", type=click.Choice(REPORT_SELECTORS), multiple=True,
              help="Statistic selector, repeatable (default: all available)")
@click.option("--out", type=click.Path(file_okay=False), default=None)
def report_command(bundle_dir, which, out):
    """Write plot-ready tables from a result bundle"""
    bundle = ResultBundle.load(bundle_dir)
    selectors = which or [s for s in REPORT_SELECTORS if s != "l1-spectral" or any(
        label.endswith("_plugin") for label in bundle.labels
    )]
    for selector in selectors:
        for path in report(bundle, selector, out):
            click.echo(f"wrote {path}")


COMMANDS = [simulate_command, fit_command, estimate_spectrum_command, experiment_command, report_command]
