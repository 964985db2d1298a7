"""
Experiment orchestration: configuration, Monte Carlo execution, result bundles and reports
"""

import logging
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from config import Config
from models.errors import (
    ConfigurationError,
    DataFormatError,
    ExperimentError,
    NotComputedError,
    SphLrdError,
)
from models.lrd_process import SpharmaSpec, covariance_table, simulate, trace_check
from models.manifold_harmonics import QuadratureGrid
from models.regression import (
    BetaCoefficients,
    anova_design,
    gls_fit,
    ols_residuals,
    oracle_covariances,
    reconstruct_beta,
    synthesize_response,
    true_beta,
)
from models.residuals import (
    RepetitionRecord,
    RepetitionStack,
    emqe_beta,
    emqe_predictor,
    histogram,
    l1_prediction_norms,
    l1_spectral_norms,
    mean_coefficient_fields,
)
from models.spectral_est import (
    ContrastProblem,
    SpectralFamily,
    minimum_contrast,
    periodogram,
    plugin_gls,
)
from utils.data_loader import DataLoader
from utils.helpers import get_file_hash, scenario_code, stream_key
from views.report_writer import MANIFEST_NAME, ReportWriter

logger = logging.getLogger(__name__)

REPORT_SELECTORS = (
    "beta-coefficients",
    "beta-surfaces",
    "lrd-exponents",
    "response-mean",
    "predictor-mean",
    "beta-hat-mean",
    "emqe-beta",
    "emqe-predictor",
    "l1-prediction",
    "l1-spectral",
)


@dataclass
class ExperimentConfig:
    """Declarative description of a simulation study run"""

    preset: str = "paper-sim"
    scenarios: List[str] = field(default_factory=lambda: list(Config.EXPERIMENT["SCENARIOS"]))
    N_list: Optional[List[int]] = None
    R: Optional[int] = None
    M: Optional[int] = None
    p: Optional[int] = None
    seed: int = Config.DEFAULT_SEED
    out_dir: str = str(Config.OUTPUT_DIR)
    mode: str = "both"
    times: Union[str, List[int]] = "paper-times-500"
    workers: int = Config.WORKERS
    bins: int = Config.RESIDUALS["HISTOGRAM_BINS"]
    pin_theta: bool = False
    paper_scale: bool = False
    overwrite: bool = False

    def __post_init__(self):
        self.preset = Config.PRESET_ALIASES.get(self.preset, self.preset)
        if isinstance(self.times, str):
            self.times = Config.PRESET_ALIASES.get(self.times, self.times)
        if self.preset not in Config.PRESETS:
            raise ConfigurationError(f"Unknown preset: {self.preset}")
        preset = Config.PRESETS[self.preset]
        scale = Config.EXPERIMENT["PAPER" if self.paper_scale else "DESK"]
        self.N_list = list(scale["N_LIST"] if self.N_list is None else self.N_list)
        self.R = scale["R"] if self.R is None else self.R
        self.M = preset["M"] if self.M is None else self.M
        self.p = preset["p"] if self.p is None else self.p
        self.scenarios = [s.lower() for s in self.scenarios]
        self.mode = self.mode.lower()
        self.validate()

    def validate(self) -> None:
        unknown = set(self.scenarios) - set(Config.EXPERIMENT["SCENARIOS"])
        if not self.scenarios or unknown:
            raise ConfigurationError(f"Unknown scenarios: {sorted(unknown) or 'none given'}")
        if self.mode not in Config.EXPERIMENT["MODES"]:
            raise ConfigurationError(f"Unknown mode: {self.mode}")
        if not self.N_list or any(int(N) < 2 for N in self.N_list):
            raise ConfigurationError(f"Sample sizes must be at least 2: {self.N_list}")
        if self.R < 1 or self.M < 2 or self.p < 1 or self.workers < 1 or self.bins < 1:
            raise ConfigurationError("R, M, p, workers and bins must be positive (M >= 2)")
        if self.p > min(self.N_list):
            raise ConfigurationError(f"p={self.p} exceeds the smallest sample size")
        if isinstance(self.times, str) and self.times not in Config.TIME_PRESETS:
            raise ConfigurationError(f"Unknown time preset: {self.times}")

    @property
    def modes(self) -> List[str]:
        return ["oracle", "plugin"] if self.mode == "both" else [self.mode]

    def selected_times(self, N: int) -> List[int]:
        """
        Times at which repetition-mean surfaces are recorded

        Presets are defined on 0..499 and rescaled to 0..N-1; explicit lists
        are used as given.
        """
        if isinstance(self.times, str):
            preset = Config.TIME_PRESETS[self.times]
            reference = preset[-1]
            return sorted({int(round(t * (N - 1) / reference)) for t in preset})
        times = sorted({int(t) for t in self.times})
        if times and (times[0] < 0 or times[-1] >= N):
            raise ConfigurationError(f"times {times} outside 0..{N - 1}")
        return times

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def snapshot(self) -> Dict[str, Any]:
        """Settings that determine the statistics; output handling and thread count excluded"""
        return {k: v for k, v in self.to_dict().items() if k not in ("out_dir", "workers", "overwrite")}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        data = dict(data)
        if "full_scale" in data:
            data.setdefault("paper_scale", data.pop("full_scale"))
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"Unknown configuration keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from exc

    @classmethod
    def load(cls, path, **overrides) -> "ExperimentConfig":
        """Read a JSON configuration file; non-None overrides win"""
        data = DataLoader(Path.cwd()).read_json(path) if path else {}
        if not isinstance(data, dict):
            raise ConfigurationError(f"{path}: configuration must be a key-value object")
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(data)


@dataclass
class ResultBundle:
    out_dir: Path
    manifest: Dict[str, Any]

    @classmethod
    def load(cls, out_dir) -> "ResultBundle":
        out_dir = Path(out_dir).resolve()
        if not (out_dir / MANIFEST_NAME).exists():
            raise DataFormatError(f"{out_dir} is not a result bundle (no {MANIFEST_NAME})")
        return cls(out_dir=out_dir, manifest=DataLoader(out_dir).read_json(MANIFEST_NAME))

    @property
    def labels(self) -> List[str]:
        return list(self.manifest.get("labels", []))

    def has(self, name: str) -> bool:
        return name in self.manifest.get("files", {})

    def require(self, name: str) -> Path:
        if not self.has(name):
            raise NotComputedError(f"{name} was not computed in {self.out_dir}")
        return self.out_dir / name

    def table(self, name: str) -> np.ndarray:
        return DataLoader(self.out_dir).read_table(self.require(name))

    def verify(self) -> bool:
        """Every listed file exists with a matching hash"""
        return all(
            (self.out_dir / name).exists() and get_file_hash(str(self.out_dir / name)) == digest
            for name, digest in self.manifest.get("files", {}).items()
        )


@dataclass
class _Cell:
    """Shared, read-only inputs of one (scenario, N) cell"""

    scenario: str
    N: int
    spec: SpharmaSpec
    family: SpectralFamily
    truth: BetaCoefficients
    times: List[int]
    design: Any
    covs: Optional[Dict[int, Any]]
    lag_table: Dict[int, np.ndarray]  # B_n(0..N) for the exact simulator


def _label(scenario: str, N: int, mode: str) -> str:
    return f"{scenario}_N{N}_{mode}"


def _run_repetition(config: ExperimentConfig, cell: _Cell, r: int):
    eps = simulate(
        cell.spec,
        cell.N,
        seed=config.seed,
        stream_key=stream_key(cell.scenario, cell.N, r),
        covariances=cell.lag_table,
    )
    Y = synthesize_response(cell.design, cell.truth, eps)
    records: Dict[str, RepetitionRecord] = {}
    contrast = None

    if "oracle" in config.modes:
        fit = gls_fit(cell.design, Y, cell.covs)
        records["oracle"] = RepetitionRecord.from_fit(r, fit, Y, cell.times)

    if "plugin" in config.modes:
        if config.pin_theta:
            theta = cell.family.true_theta()
        else:
            problem = ContrastProblem(cell.family, periodogram(ols_residuals(cell.design, Y)))
            contrast = minimum_contrast(problem)
            theta = contrast.theta_hat
        fit = plugin_gls(cell.design, Y, theta, cell.family)
        records["plugin"] = RepetitionRecord.from_fit(r, fit, Y, cell.times, theta_hat=theta)
    return records, contrast


def _write_cell(
    writer: ReportWriter,
    config: ExperimentConfig,
    cell: _Cell,
    mode: str,
    stack: RepetitionStack,
) -> None:
    label = _label(cell.scenario, cell.N, mode)
    degrees = stack.degrees
    reported = [n for n in Config.RESIDUALS["REPORTED_DEGREES"] if n in degrees]

    writer.render_beta(f"{label}/beta_hat_mean.tsv", stack.mean_beta_hat())
    writer.render_beta(
        f"{label}/emqe_beta.tsv", BetaCoefficients(emqe_beta(stack, cell.truth), degrees)
    )
    writer.render_degree_time(f"{label}/emqe_predictor.tsv", degrees, emqe_predictor(stack))

    l1 = l1_prediction_norms(stack)
    writer.render_degree_repetition(
        f"{label}/l1_prediction.tsv", degrees, l1, normalized=l1 / stack.N
    )
    writer.render_histograms(
        f"{label}/l1_prediction_hist.json",
        {n: histogram(l1[:, degrees.index(n)], config.bins, f"l1_prediction n={n}") for n in reported},
    )

    mean_response = stack.response_at_times.mean(axis=0)
    layout = cell.spec.degrees
    pairs = [(n, j) for n in layout for j in range(1, 2 * n + 2)]
    writer.table(
        f"{label}/response_mean.tsv",
        ("t", "n", "j", "value"),
        (
            (t, n, j, float(mean_response[k, c]))
            for k, t in enumerate(stack.times)
            for c, (n, j) in enumerate(pairs)
        ),
    )
    mean_predictor = stack.predictor[:, list(stack.times)].mean(axis=0)
    writer.table(
        f"{label}/predictor_mean.tsv",
        ("t", "n", "value"),
        (
            (t, n, float(mean_predictor[k, i]))
            for k, t in enumerate(stack.times)
            for i, n in enumerate(degrees)
        ),
    )

    if mode == "plugin":
        spectral = l1_spectral_norms(stack, cell.family, cell.spec)
        writer.render_degree_repetition(f"{label}/l1_spectral.tsv", degrees, spectral)
        writer.render_histograms(
            f"{label}/l1_spectral_hist.json",
            {
                n: histogram(spectral[:, degrees.index(n)], config.bins, f"l1_spectral n={n}")
                for n in reported
            },
        )


def _prepare_output(out_dir, overwrite: bool) -> None:
    """A bundle directory must start empty; overwrite only replaces an earlier bundle"""
    path = Path(out_dir)
    if not path.exists() or not any(path.iterdir()):
        return
    if not overwrite:
        raise ConfigurationError(f"{path} is not empty; use overwrite to replace an earlier bundle")
    if not (path / MANIFEST_NAME).exists():
        raise ConfigurationError(f"{path} holds files but no result bundle; refusing to clear it")
    logger.info("Replacing the result bundle in %s", path)
    shutil.rmtree(path)


def run_experiment(config: ExperimentConfig) -> ResultBundle:
    """
    Run every (scenario, N) cell of the study and persist a result bundle

    Each repetition simulates the error field, synthesizes responses and
    fits the oracle and/or plug-in estimators. A failed repetition is
    logged and counted; more than Config.EXPERIMENT["MAX_FAILED_FRACTION"]
    failures in a cell aborts the run.

    Raises:
        ExperimentError: too many failed repetitions
        ConfigurationError: out_dir is not empty and may not be replaced
    """
    _prepare_output(config.out_dir, config.overwrite)
    writer = ReportWriter(config.out_dir)
    writer.json("config.json", config.snapshot())
    truth = true_beta(config.M, config.p)
    writer.render_beta("true_beta.tsv", truth)

    specs = {s: SpharmaSpec.sim_study(s, config.M) for s in config.scenarios}
    writer.table(
        "lrd_exponents.tsv",
        ("n",) + tuple(f"alpha_{s}" for s in config.scenarios),
        (
            (n,) + tuple(float(specs[s].alpha(n)) for s in config.scenarios)
            for n in specs[config.scenarios[0]].degrees
        ),
    )

    labels: List[str] = []
    failures: Dict[str, int] = {}
    non_converged: Dict[str, int] = {}
    theta_rows: List[Tuple] = []

    for scenario in config.scenarios:
        spec = specs[scenario]
        family = SpectralFamily.create(scenario, spec)
        for N in config.N_list:
            cell = _Cell(
                scenario=scenario,
                N=N,
                spec=spec,
                family=family,
                truth=truth,
                times=config.selected_times(N),
                design=anova_design(N, config.p),
                covs=oracle_covariances(spec, N) if "oracle" in config.modes else None,
                lag_table=covariance_table(spec, N + 1),
            )
            logger.info("Running %s N=%d R=%d modes=%s", scenario, N, config.R, config.modes)

            def task(r: int):
                try:
                    return r, _run_repetition(config, cell, r)
                except SphLrdError as exc:
                    logger.error("Repetition failed (scenario=%s, N=%d, r=%d): %s", scenario, N, r, exc)
                    return r, None

            with ThreadPoolExecutor(max_workers=config.workers, thread_name_prefix="rep") as pool:
                outcomes = dict(pool.map(task, range(config.R)))

            failed = [r for r, outcome in outcomes.items() if outcome is None]
            cell_key = f"{scenario}_N{N}"
            failures[cell_key] = len(failed)
            if len(failed) > Config.EXPERIMENT["MAX_FAILED_FRACTION"] * config.R or len(failed) == config.R:
                raise ExperimentError(
                    f"{len(failed)} of {config.R} repetitions failed for {scenario} N={N}"
                )

            done = [r for r in sorted(outcomes) if outcomes[r] is not None]
            non_converged[cell_key] = sum(
                1 for r in done if outcomes[r][1] is not None and not outcomes[r][1].converged
            )
            for mode in config.modes:
                stack = RepetitionStack.collect([outcomes[r][0][mode] for r in done], cell.times)
                _write_cell(writer, config, cell, mode, stack)
                labels.append(_label(scenario, N, mode))
                if mode == "plugin":
                    theta_rows.extend(
                        (scenario_code(scenario), N, r, k, float(v))
                        for r, theta in zip(done, stack.theta_hat)
                        for k, v in enumerate(theta)
                    )

    if theta_rows:
        writer.table("theta_hat.tsv", ("scenario", "N", "r", "k", "value"), theta_rows)

    manifest = {
        "labels": labels,
        "failures": failures,
        "non_converged": non_converged,
        "rng": {
            "seed": config.seed,
            "stream_key": ["scenario", "N", "repetition", "n", "j"],
            "scenario_codes": {s: scenario_code(s) for s in config.scenarios},
        },
        "trace_check": {s: trace_check(specs[s]) for s in config.scenarios},
        "exponent_bounds": {s: specs[s].exponents.bounds_summary() for s in config.scenarios},
        "spectral_pole_window": "|omega| < 2 pi / N excluded",
        "pinned_theta": config.pin_theta,
    }
    writer.write_manifest(manifest)
    return ResultBundle.load(config.out_dir)


# Reports


def _report_grid() -> QuadratureGrid:
    return QuadratureGrid.gauss_legendre(Config.RESIDUALS["FIELD_DEGREE_BOUND"])


def _beta_from_table(table: np.ndarray) -> BetaCoefficients:
    degrees = tuple(sorted({int(n) for n in table[:, 0]}))
    p = int(table[:, 1].max())
    b = np.zeros((len(degrees), p))
    for n, j, value in table:
        b[degrees.index(int(n)), int(j) - 1] = value
    return BetaCoefficients(b, degrees)


def _labels_for(bundle: ResultBundle, name: str) -> List[str]:
    labels = [label for label in bundle.labels if bundle.has(f"{label}/{name}")]
    if not labels:
        raise NotComputedError(f"no {name} statistics in {bundle.out_dir}")
    return labels


def report(bundle: ResultBundle, which: str, out_dir=None) -> List[Path]:
    """
    Write plot-ready tables for one statistic selector

    Args:
        bundle: Completed result bundle
        which: One of REPORT_SELECTORS
        out_dir: Destination, defaults to "<bundle>-report" next to the bundle

    Returns:
        Paths of the emitted files

    Raises:
        ConfigurationError: unknown selector
        NotComputedError: the bundle lacks the statistic
    """
    if which not in REPORT_SELECTORS:
        raise ConfigurationError(f"Unknown report selector: {which}")
    out_dir = Path(out_dir) if out_dir else bundle.out_dir.with_name(bundle.out_dir.name + "-report")
    writer = ReportWriter(out_dir)
    emitted: List[Path] = []

    if which == "beta-coefficients":
        beta = _beta_from_table(bundle.table("true_beta.tsv"))
        header = ("n",) + tuple(f"beta_{j}" for j in range(1, beta.p + 1))
        rows = ((n,) + tuple(float(v) for v in beta.b[i]) for i, n in enumerate(beta.degrees))
        emitted.append(writer.table(f"{which}.tsv", header, rows))

    elif which == "beta-surfaces":
        grid = _report_grid()
        beta = _beta_from_table(bundle.table("true_beta.tsv"))
        surfaces = reconstruct_beta(beta, grid).T
        emitted.append(
            writer.render_field(f"{which}.tsv", grid.colatitude, grid.longitude, surfaces, range(1, beta.p + 1))
        )

    elif which == "lrd-exponents":
        table = bundle.table("lrd_exponents.tsv")
        with open(bundle.require("lrd_exponents.tsv"), encoding="utf-8") as f:
            header = tuple(f.readline().rstrip("\n").split("\t"))
        emitted.append(writer.table(f"{which}.tsv", header, ((int(r[0]),) + tuple(r[1:]) for r in table)))
        emitted.append(writer.json(f"{which}_bounds.json", bundle.manifest.get("exponent_bounds", {})))

    elif which in ("response-mean", "predictor-mean"):
        grid = _report_grid()
        name = "response_mean.tsv" if which == "response-mean" else "predictor_mean.tsv"
        for label in _labels_for(bundle, name):
            table = bundle.table(f"{label}/{name}")
            times = sorted({int(t) for t in table[:, 0]})
            degrees = tuple(sorted({int(n) for n in table[:, 1]}))
            if which == "response-mean":
                fields = mean_coefficient_fields(
                    degrees, grid.colatitude, grid.longitude, response=table[:, 3].reshape(len(times), -1)
                )
                values = fields["response"]
            else:
                fields = mean_coefficient_fields(
                    degrees,
                    grid.colatitude,
                    grid.longitude,
                    predictor=table[:, 2].reshape(len(times), len(degrees)),
                )
                values = fields["predictor"]
            emitted.append(
                writer.render_field(f"{which}/{label}.tsv", grid.colatitude, grid.longitude, values, times)
            )

    elif which == "beta-hat-mean":
        grid = _report_grid()
        for label in _labels_for(bundle, "beta_hat_mean.tsv"):
            beta = _beta_from_table(bundle.table(f"{label}/beta_hat_mean.tsv"))
            values = reconstruct_beta(beta, grid).T
            emitted.append(
                writer.render_field(
                    f"{which}/{label}.tsv", grid.colatitude, grid.longitude, values, range(1, beta.p + 1)
                )
            )

    elif which == "emqe-beta":
        for label in _labels_for(bundle, "emqe_beta.tsv"):
            table = bundle.table(f"{label}/emqe_beta.tsv")
            emitted.append(
                writer.table(
                    f"{which}/{label}.tsv",
                    ("n", "j", "value"),
                    ((int(n), int(j), float(v)) for n, j, v in table),
                )
            )

    elif which == "emqe-predictor":
        for label in _labels_for(bundle, "emqe_predictor.tsv"):
            table = bundle.table(f"{label}/emqe_predictor.tsv")
            degrees = sorted({int(n) for n in table[:, 0]})
            means = [float(table[table[:, 0] == n, 2].mean()) for n in degrees]
            emitted.append(
                writer.table(f"{which}/{label}.tsv", ("n", "time_mean"), zip(degrees, means))
            )

    elif which in ("l1-prediction", "l1-spectral"):
        stem = which.replace("-", "_")
        for label in _labels_for(bundle, f"{stem}.tsv"):
            table = bundle.table(f"{label}/{stem}.tsv")
            header = ("n", "r", "value") + (("normalized",) if table.shape[1] == 4 else ())
            emitted.append(
                writer.table(
                    f"{which}/{label}.tsv",
                    header,
                    ((int(row[0]), int(row[1])) + tuple(float(v) for v in row[2:]) for row in table),
                )
            )
            hist = bundle.require(f"{label}/{stem}_hist.json")
            emitted.append(writer.json(f"{which}/{label}_hist.json", DataLoader(bundle.out_dir).read_json(hist)))

    logger.info("Report %s: %d files in %s", which, len(emitted), out_dir)
    return emitted
