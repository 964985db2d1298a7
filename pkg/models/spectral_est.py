"""
Spectral-domain estimation for the misspecified model: functional DFT,
per-degree periodograms, Whittle minimum contrast and plug-in GLS
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from config import Config
from models.errors import BoundsError, DomainError, IndexRangeError
from models.lrd_process import (
    CoefficientSample,
    LrdExponentFamily,
    SpharmaSpec,
    covariance_Bn,
    spectral_density,
)
from models.regression import DesignMatrix, GlsFit, ToeplitzCov, gls_fit

logger = logging.getLogger(__name__)

SPECTRAL_FAMILIES = ("dpbs", "ipbs", "farima", "white")


@dataclass(frozen=True)
class FdftFrame:
    omega: float
    coeffs: np.ndarray
    degrees: Tuple[int, ...]

    def is_conjugate_of(self, other: "FdftFrame", tol: float = 1e-10) -> bool:
        return math.isclose(self.omega, -other.omega) and bool(
            np.allclose(self.coeffs, np.conj(other.coeffs), rtol=0.0, atol=tol)
        )


def fdft(sample: CoefficientSample, omega: float) -> FdftFrame:
    """(1 / sqrt(2 pi T)) sum_{t=1}^T V(t) e^{-i w t} for every coefficient"""
    T = sample.N
    if T < 2:
        raise DomainError(f"fDFT needs at least two time points, got {T}")
    t = np.arange(1, T + 1)
    phase = np.exp(-1j * omega * t)
    return FdftFrame(
        omega=float(omega),
        coeffs=phase @ sample.data / math.sqrt(2.0 * math.pi * T),
        degrees=sample.degrees,
    )


def fourier_frequencies(T: int) -> np.ndarray:
    """Symmetric Fourier frequencies 2 pi k / T, 0 < |k| <= (T-1)//2"""
    k = np.arange(1, (T - 1) // 2 + 1)
    positive = 2.0 * math.pi * k / T
    return np.concatenate((-positive[::-1], positive))


def fejer_kernel(T: int, omega):
    """F_T(w) = (1/T) (sin(Tw/2) / sin(w/2))^2, equal to T where sin(w/2) vanishes"""
    if T < 1:
        raise DomainError(f"Fejer kernel needs T >= 1, got {T}")
    omega = np.asarray(omega, dtype=float)
    denom = np.sin(omega / 2.0)
    singular = np.isclose(denom, 0.0, atol=1e-14)
    safe = np.where(singular, 1.0, denom)
    values = np.where(singular, float(T), np.sin(T * omega / 2.0) ** 2 / (T * safe**2))
    return float(values) if values.ndim == 0 else values


@dataclass(frozen=True)
class PeriodogramSet:
    """Per-degree order-averaged periodograms at the symmetric Fourier frequencies"""

    fourier_freqs: np.ndarray
    values: np.ndarray  # (degrees, frequencies)
    degrees: Tuple[int, ...]
    T: int

    def degree(self, n: int) -> np.ndarray:
        try:
            return self.values[self.degrees.index(n)]
        except ValueError:
            raise IndexRangeError(f"degree {n} not in periodogram") from None

    def positive(self) -> Tuple[np.ndarray, np.ndarray]:
        mask = self.fourier_freqs > 0
        return self.fourier_freqs[mask], self.values[:, mask]


def periodogram(sample: CoefficientSample) -> PeriodogramSet:
    """
    I_n(w_k) = (1/delta) sum_j |fDFT_{n,j}(w_k)|^2 at the nonzero Fourier frequencies

    Computed with one FFT per coefficient; the e^{-i w} shift between 0- and
    1-based time indices drops out of the modulus.
    """
    T = sample.N
    if T < 2:
        raise DomainError(f"periodogram needs at least two time points, got {T}")
    spectrum = np.fft.fft(sample.data, axis=0)
    power = np.abs(spectrum) ** 2 / (2.0 * math.pi * T)

    k = np.arange(1, (T - 1) // 2 + 1)
    order = np.concatenate((T - k[::-1], k))
    bounds = np.cumsum([0] + [2 * n + 1 for n in sample.degrees])
    values = np.stack(
        [power[order, lo:hi].mean(axis=1) for lo, hi in zip(bounds[:-1], bounds[1:])]
    )
    return PeriodogramSet(
        fourier_freqs=fourier_frequencies(T), values=values, degrees=sample.degrees, T=T
    )


@dataclass(frozen=True)
class SpectralFamily:
    """
    Semiparametric family f_{n,theta}: the SRD factors and innovation
    variances come from a template model, theta drives the unknown part
    """

    name: str
    template: SpharmaSpec
    bounds: Tuple[Tuple[float, float], ...]

    @classmethod
    def create(cls, name: str, template: SpharmaSpec) -> "SpectralFamily":
        if name not in SPECTRAL_FAMILIES:
            raise DomainError(f"Unknown spectral family: {name}")
        bounds = tuple(tuple(b) for b in Config.SPECTRAL_BOUNDS[name])
        return cls(name=name, template=template, bounds=bounds)

    @property
    def n_params(self) -> int:
        return len(self.bounds)

    def contains(self, theta: Sequence[float]) -> bool:
        return len(theta) == self.n_params and all(
            lo <= v <= hi for v, (lo, hi) in zip(theta, self.bounds)
        )

    def check(self, theta: Sequence[float]) -> None:
        if not self.contains(theta):
            raise BoundsError(f"{self.name} parameter {list(theta)} outside {list(self.bounds)}")

    def center(self) -> np.ndarray:
        return np.array([0.5 * (lo + hi) for lo, hi in self.bounds])

    def spec(self, theta: Sequence[float]) -> SpharmaSpec:
        """Model spectra at theta"""
        theta = tuple(float(v) for v in theta)
        grid_size = self.template.exponents.grid_size
        if self.name in ("dpbs", "ipbs"):
            return self.template.with_exponents(LrdExponentFamily(self.name, theta, grid_size))
        if self.name == "farima":
            return self.template.with_exponents(
                LrdExponentFamily("constant", (2.0 * theta[0],), grid_size)
            )
        return SpharmaSpec(
            degrees=self.template.degrees,
            sigma2=np.full(len(self.template.degrees), theta[0]),
            phi=self.template.phi,
            psi=self.template.psi,
            exponents=LrdExponentFamily("constant", (0.0,), grid_size),
            manifold=self.template.manifold,
        )

    def true_theta(self) -> Optional[np.ndarray]:
        """Parameter of the template when it belongs to this family"""
        exponents = self.template.exponents
        if self.name in ("dpbs", "ipbs") and exponents.kind == self.name:
            return np.array(exponents.theta[: self.n_params])
        if self.name == "farima" and exponents.kind == "constant":
            return np.array([exponents.theta[0] / 2.0])
        return None


@dataclass(frozen=True)
class ContrastProblem:
    family: SpectralFamily
    data: PeriodogramSet
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.data.degrees != self.family.template.degrees:
            raise DomainError("periodogram and model disagree on degrees")
        weights = self.weights
        if weights is None:
            weights = np.array([self.family.template.dim(n) for n in self.data.degrees], float)
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (len(self.data.degrees),) or np.any(weights < 0):
            raise DomainError("contrast weights must be non-negative, one per degree")
        object.__setattr__(self, "weights", weights)


def whittle_contrast(theta: Sequence[float], prob: ContrastProblem) -> float:
    """
    sum_n w_n mean_k [log g_n(w_k) + I_n(w_k) / g_n(w_k)], g_n = f_{n,theta} / delta(n)

    Only positive Fourier frequencies enter; the periodogram is even.
    """
    prob.family.check(theta)
    spec = prob.family.spec(theta)
    omega, values = prob.data.positive()
    total = 0.0
    for index, n in enumerate(prob.data.degrees):
        g = spectral_density(n, spec, omega) / spec.dim(n)
        total += prob.weights[index] * float(np.mean(np.log(g) + values[index] / g))
    return total


@dataclass
class ContrastResult:
    theta_hat: np.ndarray
    contrast: float
    iterations: int
    converged: bool
    starts: List[Dict[str, object]] = field(default_factory=list)


def _jittered_starts(prob: ContrastProblem, init: np.ndarray) -> List[np.ndarray]:
    opts = Config.OPTIMIZER
    rng = np.random.default_rng(opts["JITTER_SEED"])
    lo = np.array([b[0] for b in prob.family.bounds])
    hi = np.array([b[1] for b in prob.family.bounds])
    starts = [init]
    for _ in range(opts["RESTARTS"] - 1):
        candidate = init + opts["JITTER"] * (hi - lo) * rng.standard_normal(init.size)
        starts.append(np.clip(candidate, lo, hi))
    return starts


def minimum_contrast(prob: ContrastProblem, init: Optional[Sequence[float]] = None) -> ContrastResult:
    """
    Box-constrained Nelder-Mead minimization of the Whittle contrast

    Runs from init and from jittered copies of it; the best contrast wins.
    Non-convergence is reported through the flag and a warning, never raised.

    Args:
        prob: Contrast problem
        init: Starting parameter, defaults to the center of the bounds

    Returns:
        ContrastResult
    """
    init = prob.family.center() if init is None else np.asarray(init, dtype=float)
    prob.family.check(init)
    opts = Config.OPTIMIZER
    scale = max(1.0, abs(whittle_contrast(init, prob)))

    best = None
    starts = []
    for x0 in _jittered_starts(prob, init):
        result = minimize(
            whittle_contrast,
            x0,
            args=(prob,),
            method="Nelder-Mead",
            bounds=prob.family.bounds,
            options={
                "maxiter": opts["MAX_ITER"],
                "xatol": opts["REL_TOL"],
                "fatol": opts["REL_TOL"] * scale,
            },
        )
        starts.append({"x0": x0.tolist(), "fun": float(result.fun), "nit": int(result.nit)})
        if best is None or result.fun < best.fun:
            best = result

    if not best.success:
        logger.warning(
            "Minimum contrast (%s) did not converge after %d iterations: %s",
            prob.family.name,
            best.nit,
            best.message,
        )
    return ContrastResult(
        theta_hat=np.asarray(best.x, dtype=float),
        contrast=float(best.fun),
        iterations=int(best.nit),
        converged=bool(best.success),
        starts=starts,
    )


@dataclass(frozen=True)
class CovarianceEstimate:
    """B_hat_{n,theta}(0..N-1) and the Toeplitz weights of the aggregated series"""

    theta: Tuple[float, ...]
    B: Dict[int, np.ndarray]
    covs: Dict[int, ToeplitzCov]


def invert_to_covariance(
    theta_hat: Sequence[float], family: SpectralFamily, N: int
) -> CovarianceEstimate:
    """Fourier inversion of f_{n,theta_hat} for every degree of the family's template"""
    family.check(theta_hat)
    spec = family.spec(theta_hat)
    B = {n: covariance_Bn(n, spec, N) for n in spec.degrees}
    covs = {n: ToeplitzCov.aggregated(n, B[n], spec.dim(n)) for n in spec.degrees}
    return CovarianceEstimate(theta=tuple(float(v) for v in theta_hat), B=B, covs=covs)


def plugin_gls(
    X: DesignMatrix,
    Y: CoefficientSample,
    theta_hat: Sequence[float],
    family: SpectralFamily,
    workers: int = 1,
) -> GlsFit:
    """GLS with Lambda_n replaced by its spectral-model estimate at theta_hat"""
    estimate = invert_to_covariance(theta_hat, family, Y.N)
    fit = gls_fit(X, Y, estimate.covs, workers=workers)
    fit.meta["theta_hat"] = list(estimate.theta)
    return fit
