"""
Tidy columnar and JSON renderings of experiment results
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Sequence

import numpy as np

from models.errors import DataFormatError
from models.regression import BetaCoefficients
from models.residuals import HistogramSummary
from utils.data_loader import DataLoader
from utils.helpers import get_file_hash, is_safe_path, sanitize_label

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


class ReportWriter:
    """Single writer for one output directory; remembers every file it emits"""

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.loader = DataLoader(self.out_dir)
        self.written: List[str] = []

    def _name(self, name: str) -> str:
        parts = [sanitize_label(p) for p in Path(name).parts]
        relative = "/".join(parts)
        if not is_safe_path(str(self.out_dir), str(self.out_dir / relative)):
            raise DataFormatError(f"refusing to write outside {self.out_dir}: {name}")
        if relative not in self.written:
            self.written.append(relative)
        return relative

    def table(self, name: str, header: Sequence[str], rows) -> Path:
        return self.loader.write_table(self._name(name), tuple(header), rows)

    def json(self, name: str, payload: Dict[str, Any]) -> Path:
        return self.loader.write_json(self._name(name), payload)

    # Renderers

    def render_beta(self, name: str, beta: BetaCoefficients) -> Path:
        """Rows (n, j, value)"""
        rows = (
            (n, j + 1, float(beta.b[i, j]))
            for i, n in enumerate(beta.degrees)
            for j in range(beta.p)
        )
        return self.table(name, ("n", "j", "value"), rows)

    def render_degree_time(self, name: str, degrees: Sequence[int], values: np.ndarray) -> Path:
        """values shaped (N, degrees) as rows (n, t, value)"""
        rows = (
            (n, t, float(values[t, i]))
            for i, n in enumerate(degrees)
            for t in range(values.shape[0])
        )
        return self.table(name, ("n", "t", "value"), rows)

    def render_degree_repetition(
        self, name: str, degrees: Sequence[int], values: np.ndarray, normalized: np.ndarray = None
    ) -> Path:
        """values shaped (R, degrees) as rows (n, r, value[, normalized])"""
        header = ("n", "r", "value") + (("normalized",) if normalized is not None else ())
        rows = (
            (n, r, float(values[r, i]))
            + ((float(normalized[r, i]),) if normalized is not None else ())
            for i, n in enumerate(degrees)
            for r in range(values.shape[0])
        )
        return self.table(name, header, rows)

    def render_histograms(self, name: str, histograms: Dict[int, HistogramSummary]) -> Path:
        return self.json(name, {str(n): h.to_dict() for n, h in sorted(histograms.items())})

    def render_field(
        self, name: str, colatitude: np.ndarray, longitude: np.ndarray, values: np.ndarray, labels
    ) -> Path:
        """values shaped (labels, points) as rows (label, colatitude, longitude, value)"""
        rows = (
            (label, float(c), float(l), float(values[k, i]))
            for k, label in enumerate(labels)
            for i, (c, l) in enumerate(zip(colatitude, longitude))
        )
        return self.table(name, ("label", "colatitude", "longitude", "value"), rows)

    def present(self) -> List[str]:
        """Relative names of every file under the output directory, manifest excluded"""
        return sorted(
            path.relative_to(self.out_dir).as_posix()
            for path in self.out_dir.rglob("*")
            if path.is_file() and path != self.out_dir / MANIFEST_NAME
        )

    def write_manifest(self, extra: Dict[str, Any]) -> Path:
        """Hash every file in the directory and write the manifest last"""
        names = self.present()
        foreign = sorted(set(names) - set(self.written))
        if foreign:
            logger.warning("%d files in %s were not written by this run: %s", len(foreign), self.out_dir, foreign[:5])
        files = {name: get_file_hash(str(self.out_dir / name)) for name in names}
        payload = dict(extra, files=files)
        target = self.loader.write_json(MANIFEST_NAME, payload)
        logger.info("Manifest lists %d files in %s", len(files), self.out_dir)
        return target
