"""
Residual and error analysis across Monte Carlo repetitions
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid

from config import Config
from models.errors import DimensionMismatchError, DomainError, IndexRangeError, NotComputedError
from models.lrd_process import CoefficientSample, SpharmaSpec, spectral_density
from models.manifold_harmonics import harmonic_basis
from models.regression import BetaCoefficients, GlsFit, degree_sums
from models.spectral_est import SpectralFamily

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RepetitionRecord:
    """What a single repetition contributes to the residual analysis"""

    index: int
    fit: GlsFit
    observed: np.ndarray  # (N, degrees) order-averaged responses
    response_at_times: np.ndarray  # (times, coefficients)
    theta_hat: Optional[np.ndarray] = None

    @classmethod
    def from_fit(
        cls,
        index: int,
        fit: GlsFit,
        response: CoefficientSample,
        times: Sequence[int],
        theta_hat: Optional[Sequence[float]] = None,
    ) -> "RepetitionRecord":
        times = list(times)
        if any(t < 0 or t >= response.N for t in times):
            raise IndexRangeError(f"selected times {times} outside 0..{response.N - 1}")
        return cls(
            index=index,
            fit=fit,
            observed=response.aggregate(),
            response_at_times=response.data[times],
            theta_hat=None if theta_hat is None else np.asarray(theta_hat, dtype=float),
        )


@dataclass(frozen=True)
class RepetitionStack:
    """Repetitions sharing (N, M, p, spec), ordered by repetition index"""

    degrees: Tuple[int, ...]
    times: Tuple[int, ...]
    beta_hat: np.ndarray  # (R, degrees, p)
    predictor: np.ndarray  # (R, N, degrees)
    observed: np.ndarray  # (R, N, degrees)
    response_at_times: np.ndarray  # (R, times, coefficients)
    theta_hat: Optional[np.ndarray] = None  # (R, parameters)

    @classmethod
    def collect(cls, records: Sequence[RepetitionRecord], times: Sequence[int]) -> "RepetitionStack":
        if not records:
            raise DomainError("cannot build a repetition stack from zero repetitions")
        records = sorted(records, key=lambda r: r.index)
        degrees = records[0].fit.degrees
        shapes = {(r.fit.degrees, r.observed.shape, r.fit.beta_hat.shape) for r in records}
        if len(shapes) != 1:
            raise DimensionMismatchError("repetitions disagree on degrees, N or p")
        thetas = [r.theta_hat for r in records]
        return cls(
            degrees=degrees,
            times=tuple(times),
            beta_hat=np.stack([r.fit.beta_hat for r in records]),
            predictor=np.stack([r.fit.predictor for r in records]),
            observed=np.stack([r.observed for r in records]),
            response_at_times=np.stack([r.response_at_times for r in records]),
            theta_hat=None if any(t is None for t in thetas) else np.stack(thetas),
        )

    @property
    def R(self) -> int:
        return self.beta_hat.shape[0]

    @property
    def N(self) -> int:
        return self.predictor.shape[1]

    def mean_beta_hat(self) -> BetaCoefficients:
        return BetaCoefficients(self.beta_hat.mean(axis=0), self.degrees)


def emqe_beta(stack: RepetitionStack, truth: BetaCoefficients) -> np.ndarray:
    """(1/R) sum_r (beta_hat_{n,j} - beta_{n,j})^2, shape (degrees, p)"""
    if truth.degrees != stack.degrees or truth.b.shape != stack.beta_hat.shape[1:]:
        raise DimensionMismatchError("true beta does not match the repetition stack")
    return np.mean((stack.beta_hat - truth.b[None]) ** 2, axis=0)


def emqe_predictor(stack: RepetitionStack, truth: Optional[np.ndarray] = None) -> np.ndarray:
    """
    (1/R) sum_r (Y_hat_n(t) - Y_n(t))^2, shape (N, degrees)

    Args:
        stack: Repetition stack
        truth: Reference responses, (N, degrees) or (R, N, degrees);
            defaults to the observed order-averaged responses
    """
    reference = stack.observed if truth is None else np.asarray(truth, dtype=float)
    if reference.shape not in (stack.predictor.shape, stack.predictor.shape[1:]):
        raise DimensionMismatchError(f"reference responses have shape {reference.shape}")
    return np.mean((stack.predictor - reference) ** 2, axis=0)


def l1_prediction_norms(stack: RepetitionStack, normalize: bool = False) -> np.ndarray:
    """sum_t |Y_hat_n(t) - Y_n(t)| per repetition and degree, divided by N if normalize"""
    norms = np.abs(stack.predictor - stack.observed).sum(axis=1)
    return norms / stack.N if normalize else norms


def l1_spectral_norms(
    stack: RepetitionStack, family: SpectralFamily, truth: SpharmaSpec
) -> np.ndarray:
    """
    Trapezoid L1 distance between f_{n,theta_hat} and the true f_n over
    2 pi / N <= |w| <= pi, per repetition and degree

    Raises:
        NotComputedError: the stack carries no theta_hat
    """
    if stack.theta_hat is None:
        raise NotComputedError("theta_hat was not estimated for this stack")
    omega = np.linspace(2.0 * math.pi / stack.N, math.pi, Config.RESIDUALS["SPECTRAL_GRID"] + 1)
    true_f = np.stack([spectral_density(n, truth, omega) for n in stack.degrees])

    norms = np.empty((stack.R, len(stack.degrees)))
    for r, theta in enumerate(stack.theta_hat):
        spec = family.spec(theta)
        fitted = np.stack([spectral_density(n, spec, omega) for n in stack.degrees])
        # even integrand: twice the positive half
        norms[r] = 2.0 * trapezoid(np.abs(fitted - true_f), omega, axis=1)
    return norms


@dataclass(frozen=True)
class HistogramSummary:
    bin_edges: np.ndarray
    counts: np.ndarray
    statistic_name: str

    def to_dict(self) -> Dict[str, object]:
        return {
            "statistic": self.statistic_name,
            "bin_edges": [float(v) for v in self.bin_edges],
            "counts": [int(v) for v in self.counts],
        }


def histogram(values: Sequence[float], bins: Optional[int] = None, name: str = "") -> HistogramSummary:
    """Equal-width histogram spanning [min, max]"""
    bins = Config.RESIDUALS["HISTOGRAM_BINS"] if bins is None else bins
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        raise DomainError("histogram of an empty sample")
    if bins < 1:
        raise DomainError(f"bin count must be positive, got {bins}")
    counts, edges = np.histogram(values, bins=bins)
    return HistogramSummary(bin_edges=edges, counts=counts, statistic_name=name)


def mean_coefficient_fields(
    degrees: Sequence[int],
    colatitude,
    longitude,
    response: Optional[np.ndarray] = None,
    predictor: Optional[np.ndarray] = None,
) -> Dict[str, np.ndarray]:
    """
    Synthesize mean response and predictor surfaces from their coefficients

    Args:
        degrees: Model degrees
        colatitude, longitude: Evaluation points
        response: (times, coefficients) mean harmonic coefficients
        predictor: (times, degrees) mean order-averaged predictions; each
            degree contributes its value times sum_j S_{n,j}

    Returns:
        Dict with "response" and/or "predictor" arrays of shape (times, points)
    """
    fields: Dict[str, np.ndarray] = {}
    if response is not None:
        fields["response"] = np.asarray(response) @ harmonic_basis(degrees, colatitude, longitude).T
    if predictor is not None:
        predictor = np.asarray(predictor)
        if predictor.shape[-1] != len(degrees):
            raise DimensionMismatchError(f"predictor means have {predictor.shape[-1]} degrees, expected {len(degrees)}")
        fields["predictor"] = predictor @ degree_sums(degrees, colatitude, longitude).T
    return fields


def repetition_mean_fields(
    stack: RepetitionStack,
    colatitude,
    longitude,
    times: Optional[Sequence[int]] = None,
) -> Dict[str, np.ndarray]:
    """
    Repetition means of the response (REM) and predictor (RTPEM) surfaces

    Returns:
        {"response": (times, points), "predictor": (times, points)}

    Raises:
        IndexRangeError: a requested time was not recorded or lies outside 0..N-1
    """
    times = list(stack.times if times is None else times)
    missing = [t for t in times if t not in stack.times or not 0 <= t < stack.N]
    if missing:
        raise IndexRangeError(f"times {missing} not available (recorded {list(stack.times)})")
    rows = [stack.times.index(t) for t in times]
    return mean_coefficient_fields(
        stack.degrees,
        colatitude,
        longitude,
        response=stack.response_at_times[:, rows].mean(axis=0),
        predictor=stack.predictor[:, times].mean(axis=0),
    )
