"""
Validated import and export of coefficient samples, designs, covariances and fits
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

import numpy as np

from config import Config
from models.errors import DataFormatError, SphLrdError
from models.lrd_process import CoefficientSample, SpharmaSpec
from models.regression import DesignMatrix, GlsFit
from models.spectral_est import PeriodogramSet
from utils.helpers import format_row, validate_path

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

SAMPLE_HEADER = ("t", "n", "j", "value")
COVARIANCE_HEADER = ("degree", "lag", "value")
FIT_HEADER = ("degree", "regressor", "beta_hat", "variance")
PERIODOGRAM_HEADER = ("n", "omega", "value")


class DataLoader:
    def __init__(self, base_dir: PathLike = None):
        self.base_dir = Path(base_dir or Config.OUTPUT_DIR)

    def _resolve(self, path: PathLike) -> Path:
        path = Path(path)
        return path if path.is_absolute() else self.base_dir / path

    def _input(self, path: PathLike) -> Path:
        resolved = self._resolve(path)
        is_valid, error = validate_path(str(resolved), must_exist=True)
        if not is_valid:
            raise DataFormatError(f"{resolved}: {error}")
        return resolved

    def _output(self, path: PathLike) -> Path:
        resolved = self._resolve(path)
        is_valid, error = validate_path(str(resolved), must_exist=False)
        if not is_valid:
            raise DataFormatError(f"{resolved}: {error}")
        resolved.parent.mkdir(parents=True, exist_ok=True)
        return resolved

    # Generic tables

    def write_table(self, path: PathLike, header: Tuple[str, ...], rows) -> Path:
        target = self._output(path)
        with open(target, "w", encoding="utf-8", newline="\n") as f:
            f.write("\t".join(header) + "\n")
            for row in rows:
                f.write(format_row(row) + "\n")
        logger.debug("Wrote %s", target)
        return target

    def read_table(self, path: PathLike, header: Tuple[str, ...] = None) -> np.ndarray:
        """
        Read a headered tab-separated numeric table

        Args:
            path: Table file
            header: Expected column names, checked when given

        Returns:
            2-D float array, one row per data line
        """
        source = self._input(path)
        with open(source, encoding="utf-8") as f:
            first = f.readline().rstrip("\n").split("\t")
        if header is not None and tuple(first) != tuple(header):
            raise DataFormatError(f"{source}: expected header {header}, found {tuple(first)}")
        try:
            values = np.loadtxt(source, delimiter="\t", skiprows=1, ndmin=2)
        except ValueError as exc:
            raise DataFormatError(f"{source}: {exc}") from exc
        if values.size and values.shape[1] != len(first):
            raise DataFormatError(f"{source}: rows do not match the header")
        return values

    def write_json(self, path: PathLike, payload: Dict[str, Any]) -> Path:
        target = self._output(path)
        with open(target, "w", encoding="utf-8", newline="\n") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write("\n")
        return target

    def read_json(self, path: PathLike) -> Dict[str, Any]:
        source = self._input(path)
        try:
            with open(source, encoding="utf-8") as f:
                return json.load(f)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{source}: invalid JSON ({exc})") from exc

    # Coefficient samples

    def write_sample(self, sample: CoefficientSample, path: PathLike) -> List[Path]:
        """Write a sample as TSV, or as .bin with a JSON sidecar when the suffix is .bin"""
        path = Path(path)
        if path.suffix == ".bin":
            return self._write_sample_binary(sample, path)
        layout = sample.layout
        rows = (
            (t, int(n), int(j), float(sample.data[t, c]))
            for t in range(sample.N)
            for c, (n, j) in enumerate(layout)
        )
        return [self.write_table(path, SAMPLE_HEADER, rows)]

    def _write_sample_binary(self, sample: CoefficientSample, path: Path) -> List[Path]:
        target = self._output(path)
        sample.data.astype("<f8").tofile(target)
        sidecar = self.write_json(
            path.with_suffix(".json"),
            {
                "n_samples": sample.N,
                "degrees": list(sample.degrees),
                "dtype": "<f8",
                "layout": "row-major (t, coefficient)",
                "seed": sample.meta.get("seed"),
                "stream_key": sample.meta.get("stream_key", []),
                "spec": sample.meta.get("spec"),
            },
        )
        return [target, sidecar]

    def read_sample(self, path: PathLike) -> CoefficientSample:
        path = Path(path)
        if path.suffix in (".bin", ".json"):
            return self._read_sample_binary(path.with_suffix(".json"))
        table = self.read_table(path, SAMPLE_HEADER)
        if table.size == 0:
            raise DataFormatError(f"{path}: empty sample")
        degrees = tuple(sorted({int(n) for n in table[:, 1]}))
        width = sum(2 * n + 1 for n in degrees)
        N = int(table[:, 0].max()) + 1
        if table.shape[0] != N * width:
            raise DataFormatError(f"{path}: expected {N * width} rows, found {table.shape[0]}")
        offsets = np.cumsum([0] + [2 * n + 1 for n in degrees])
        column = {n: offsets[i] for i, n in enumerate(degrees)}
        data = np.full((N, width), np.nan)
        for t, n, j, value in table:
            n, j = int(n), int(j)
            if not 1 <= j <= 2 * n + 1:
                raise DataFormatError(f"{path}: order {j} invalid for degree {n}")
            data[int(t), column[n] + j - 1] = value
        if np.isnan(data).any():
            raise DataFormatError(f"{path}: missing (t, n, j) entries")
        return CoefficientSample(data=data, degrees=degrees)

    def _read_sample_binary(self, sidecar_path: Path) -> CoefficientSample:
        meta = self.read_json(sidecar_path)
        try:
            degrees = tuple(int(n) for n in meta["degrees"])
            N = int(meta["n_samples"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"{sidecar_path}: incomplete sidecar ({exc})") from exc
        width = sum(2 * n + 1 for n in degrees)
        raw = np.fromfile(self._input(sidecar_path.with_suffix(".bin")), dtype="<f8")
        if raw.size != N * width:
            raise DataFormatError(f"{sidecar_path}: binary block has {raw.size} values, expected {N * width}")
        extra = {k: meta[k] for k in ("seed", "stream_key", "spec") if meta.get(k) is not None}
        try:
            return CoefficientSample(data=raw.reshape(N, width), degrees=degrees, meta=extra)
        except SphLrdError as exc:
            raise DataFormatError(f"{sidecar_path}: {exc}") from exc

    # Designs, covariances, fits

    def write_design(self, design: DesignMatrix, path: PathLike) -> Path:
        header = tuple(f"x{j}" for j in range(1, design.p + 1))
        return self.write_table(path, header, (tuple(float(v) for v in row) for row in design.X))

    def read_design(self, path: PathLike) -> DesignMatrix:
        table = self.read_table(path)
        if table.size == 0:
            raise DataFormatError(f"{path}: empty design")
        return DesignMatrix(table)

    def write_covariances(self, B: Dict[int, np.ndarray], path: PathLike) -> Path:
        rows = ((n, t, float(v)) for n in sorted(B) for t, v in enumerate(B[n]))
        return self.write_table(path, COVARIANCE_HEADER, rows)

    def read_covariances(self, path: PathLike) -> Dict[int, np.ndarray]:
        """Degree autocovariances B_n(0..N-1) keyed by degree"""
        table = self.read_table(path, COVARIANCE_HEADER)
        result: Dict[int, np.ndarray] = {}
        for n in sorted({int(v) for v in table[:, 0]}):
            rows = table[table[:, 0] == n]
            lags = rows[:, 1].astype(int)
            if sorted(lags) != list(range(len(lags))):
                raise DataFormatError(f"{path}: lags of degree {n} are not 0..N-1")
            values = np.empty(len(lags))
            values[lags] = rows[:, 2]
            result[n] = values
        return result

    def write_fit(self, fit: GlsFit, path: PathLike) -> Path:
        rows = (
            (n, j + 1, float(fit.beta_hat[i, j]), float(fit.variance[i, j, j]))
            for i, n in enumerate(fit.degrees)
            for j in range(fit.beta_hat.shape[1])
        )
        return self.write_table(path, FIT_HEADER, rows)

    def write_periodogram(self, pset: PeriodogramSet, path: PathLike) -> Path:
        rows = (
            (n, float(w), float(pset.values[i, k]))
            for i, n in enumerate(pset.degrees)
            for k, w in enumerate(pset.fourier_freqs)
        )
        return self.write_table(path, PERIODOGRAM_HEADER, rows)

    def write_spec(self, spec: SpharmaSpec, path: PathLike) -> Path:
        return self.write_json(path, spec.to_dict())

    def read_spec(self, path: PathLike) -> SpharmaSpec:
        data = self.read_json(path)
        try:
            return SpharmaSpec.from_dict(data)
        except (KeyError, TypeError) as exc:
            raise DataFormatError(f"{path}: incomplete model description ({exc})") from exc
