"""
Multifractionally integrated SPHARMA(1,1) error process: exponent families,
simulation per harmonic coefficient, spectral densities and autocovariances
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.fft import dct, fft
from scipy.signal import fftconvolve, lfilter
from scipy.special import gammaln

from config import Config
from models.errors import (
    DimensionMismatchError,
    DomainError,
    IndexRangeError,
    InstabilityError,
    NotPositiveDefiniteError,
    PoleError,
    QuadratureError,
)
from models.manifold_harmonics import S2, ManifoldSpec, coefficient_layout, eigenspace_dim

logger = logging.getLogger(__name__)

EXPONENT_KINDS = ("dpbs", "ipbs", "constant", "custom")
SIMULATION_METHODS = ("exact", "filter")

# i = 1..100 in the sup defining the DPBS normalizer
_DPBS_SUP_INDEX = np.arange(1, 101, dtype=float)


def dpbs_grid(n: int, grid_size: int = 30) -> float:
    """x_1 = 0, x_n = x_{n-1} + grid_size / (grid_size - 1)"""
    _check_grid_index(n, grid_size)
    if grid_size == 1:
        return 0.0
    return (n - 1) * grid_size / (grid_size - 1)


def ipbs_grid(n: int, grid_size: int = 30) -> float:
    """x_1 = -pi, x_n = x_{n-1} + 2 pi / (grid_size - 1)"""
    _check_grid_index(n, grid_size)
    if grid_size == 1:
        return -math.pi
    return -math.pi + (n - 1) * 2.0 * math.pi / (grid_size - 1)


def _check_grid_index(n: int, grid_size: int) -> None:
    if not 1 <= n <= grid_size:
        raise IndexRangeError(f"degree {n} outside exponent grid 1..{grid_size}")


def dpbs_normalizer(x: float) -> float:
    """sup over i = 1..100 of (i x^2 + (i + 1) x + (i + 2)) / 100"""
    i = _DPBS_SUP_INDEX
    return float(np.max((i * x * x + (i + 1.0) * x + (i + 2.0)) / 100.0))


def alpha_dpbs(n: int, theta0: Sequence[float], grid_size: int = 30) -> float:
    """
    Decreasing positive bounded sequence of LRD exponents

    Args:
        n: Degree, 1..grid_size
        theta0: (theta_1, theta_2, theta_3) or with an explicit normalizer theta_4
        grid_size: Number of points of the x-grid

    Returns:
        alpha(n, theta0)
    """
    if len(theta0) not in (3, 4):
        raise DomainError(f"DPBS needs 3 or 4 parameters, got {len(theta0)}")
    x = dpbs_grid(n, grid_size)
    theta4 = theta0[3] if len(theta0) == 4 else dpbs_normalizer(x)
    return (theta0[0] * x * x + theta0[1] * x + theta0[2]) / theta4


def alpha_ipbs(n: int, upsilon0: Sequence[float], grid_size: int = 30) -> float:
    """Increasing positive bounded sequence 1 - 1 / (9 exp(u_1 + u_2 x_n))"""
    if len(upsilon0) != 2:
        raise DomainError(f"IPBS needs 2 parameters, got {len(upsilon0)}")
    x = ipbs_grid(n, grid_size)
    return 1.0 - 1.0 / (9.0 * math.exp(upsilon0[0] + upsilon0[1] * x))


@dataclass(frozen=True)
class LrdExponentFamily:
    """
    Exponents alpha(n, theta) of the LRD operator, one per degree 1..grid_size

    kinds:
        dpbs      decreasing sequence, theta = (theta_1, theta_2, theta_3[, theta_4])
        ipbs      increasing sequence, theta = (upsilon_1, upsilon_2)
        constant  alpha(n) = theta[0] for every degree, including degree 0
        custom    theta is the table alpha(1..grid_size)
    """

    kind: str
    theta: Tuple[float, ...]
    grid_size: int = 30

    def __post_init__(self):
        object.__setattr__(self, "theta", tuple(float(v) for v in self.theta))
        if self.kind not in EXPONENT_KINDS:
            raise DomainError(f"Unknown exponent family: {self.kind}")
        if self.kind == "custom" and len(self.theta) != self.grid_size:
            raise DimensionMismatchError(
                f"custom exponent table has {len(self.theta)} entries, expected {self.grid_size}"
            )
        if self.kind == "constant" and len(self.theta) != 1:
            raise DomainError("constant exponent family takes a single value")
        values = self.values
        if np.any(values < 0.0) or np.any(values >= 1.0) or not np.all(np.isfinite(values)):
            raise DomainError(f"{self.kind} exponents leave [0, 1): {values.min()}..{values.max()}")

    def alpha(self, n: int) -> float:
        if self.kind == "constant":
            return self.theta[0]
        if self.kind == "dpbs":
            return alpha_dpbs(n, self.theta, self.grid_size)
        if self.kind == "ipbs":
            return alpha_ipbs(n, self.theta, self.grid_size)
        _check_grid_index(n, self.grid_size)
        return self.theta[n - 1]

    @property
    def values(self) -> np.ndarray:
        return np.array([self.alpha(n) for n in range(1, self.grid_size + 1)])

    def bounds_summary(self) -> Dict[str, float]:
        """Computed lower and upper bounds of the exponent sequence"""
        values = self.values
        return {"min": float(values.min()), "max": float(values.max())}

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "theta": list(self.theta), "grid_size": self.grid_size}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LrdExponentFamily":
        return cls(data["kind"], tuple(data["theta"]), int(data.get("grid_size", 30)))

    @classmethod
    def scenario(cls, name: str, grid_size: int = 30) -> "LrdExponentFamily":
        """Exponent family of a simulation-study scenario ('dpbs' or 'ipbs')"""
        preset = Config.PRESETS["paper-sim"]
        name = name.lower()
        if name == "dpbs":
            return cls("dpbs", tuple(preset["dpbs_theta"]), grid_size)
        if name == "ipbs":
            return cls("ipbs", tuple(preset["ipbs_upsilon"]), grid_size)
        raise DomainError(f"Unknown scenario: {name}")


@dataclass(frozen=True)
class SpharmaSpec:
    """Per-degree SPHARMA(1,1) operator spectra with LRD exponents"""

    degrees: Tuple[int, ...]
    sigma2: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    exponents: LrdExponentFamily
    manifold: ManifoldSpec = S2

    def __post_init__(self):
        degrees = tuple(int(n) for n in self.degrees)
        object.__setattr__(self, "degrees", degrees)
        for name in ("sigma2", "phi", "psi"):
            values = np.array(getattr(self, name), dtype=float)
            values.setflags(write=False)
            object.__setattr__(self, name, values)
            if values.shape != (len(degrees),):
                raise DimensionMismatchError(
                    f"{name} has shape {values.shape}, expected ({len(degrees)},)"
                )
        if not degrees or list(degrees) != sorted(set(degrees)) or degrees[0] < 0:
            raise DomainError("degrees must be distinct, ascending and non-negative")
        if np.any(self.sigma2 <= 0):
            raise DomainError("innovation variances must be positive")
        unstable = np.abs(self.phi) >= 1.0
        if np.any(unstable):
            raise InstabilityError(
                f"AR eigenvalue on or outside the unit circle at degrees "
                f"{[n for n, bad in zip(degrees, unstable) if bad]}"
            )
        for n in degrees:
            self.exponents.alpha(n)

    @property
    def M(self) -> int:
        return self.degrees[-1]

    def index(self, n: int) -> int:
        try:
            return self.degrees.index(n)
        except ValueError:
            raise IndexRangeError(f"degree {n} is not part of the model") from None

    def alpha(self, n: int) -> float:
        self.index(n)
        return self.exponents.alpha(n)

    def dim(self, n: int) -> int:
        return eigenspace_dim(n, self.manifold)

    def with_exponents(self, exponents: LrdExponentFamily) -> "SpharmaSpec":
        return replace(self, exponents=exponents)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "degrees": list(self.degrees),
            "sigma2": [float(v) for v in self.sigma2],
            "phi": [float(v) for v in self.phi],
            "psi": [float(v) for v in self.psi],
            "exponents": self.exponents.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SpharmaSpec":
        return cls(
            degrees=tuple(data["degrees"]),
            sigma2=np.asarray(data["sigma2"], dtype=float),
            phi=np.asarray(data["phi"], dtype=float),
            psi=np.asarray(data["psi"], dtype=float),
            exponents=LrdExponentFamily.from_dict(data["exponents"]),
        )

    @classmethod
    def sim_study(cls, scenario: str = "dpbs", M: int = 30, min_degree: int = 1) -> "SpharmaSpec":
        """
        Operator spectra of the simulation study

        sigma2_n = (n+1)^-3/2, phi_n = [0.7(n+1/n)]^-3/2, psi_n = 0.4(n+1/n)^-3/2
        """
        if min_degree < 1:
            raise DomainError("the simulation-study operators are undefined at degree 0")
        n = np.arange(min_degree, M + 1, dtype=float)
        return cls(
            degrees=tuple(range(min_degree, M + 1)),
            sigma2=(n + 1.0) ** -1.5,
            phi=(0.7 * (n + 1.0 / n)) ** -1.5,
            psi=0.4 * (n + 1.0 / n) ** -1.5,
            exponents=LrdExponentFamily.scenario(scenario, grid_size=M),
        )


@dataclass(frozen=True)
class CoefficientSample:
    """
    Harmonic coefficients V_{n,j}(t) over time

    data has shape (N, K) with columns in coefficient_layout(degrees) order,
    degree-major with orders 1..2n+1.
    """

    data: np.ndarray
    degrees: Tuple[int, ...]
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        degrees = tuple(int(n) for n in self.degrees)
        object.__setattr__(self, "degrees", degrees)
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 2:
            raise DimensionMismatchError(f"sample data must be 2-D, got {data.ndim}-D")
        expected = sum(2 * n + 1 for n in degrees)
        if data.shape[1] != expected:
            raise DimensionMismatchError(
                f"sample has {data.shape[1]} coefficients, degrees need {expected}"
            )
        if not np.all(np.isfinite(data)):
            raise DomainError("sample contains non-finite values")
        object.__setattr__(self, "data", data)

    @property
    def N(self) -> int:
        return self.data.shape[0]

    @property
    def M(self) -> int:
        return self.degrees[-1]

    @property
    def layout(self) -> np.ndarray:
        return coefficient_layout(self.degrees)

    def _offset(self, n: int) -> int:
        if n not in self.degrees:
            raise IndexRangeError(f"degree {n} not present in sample")
        return sum(2 * m + 1 for m in self.degrees if m < n)

    def degree_block(self, n: int) -> np.ndarray:
        """Columns V_{n,1..2n+1} as an (N, 2n+1) array"""
        start = self._offset(n)
        return self.data[:, start : start + 2 * n + 1]

    def aggregate(self) -> np.ndarray:
        """Order averages (1/delta) sum_j V_{n,j}(t), shape (N, number of degrees)"""
        return np.column_stack([self.degree_block(n).mean(axis=1) for n in self.degrees])


def frac_int_coeffs(dexp: float, L: int) -> np.ndarray:
    """
    MA(infinity) coefficients of (1 - z)^(-dexp), truncated at lag L

    Args:
        dexp: Memory exponent in (0, 1)
        L: Truncation lag (at least 1)

    Returns:
        Array psi_0..psi_L
    """
    if not 0.0 < dexp < 1.0:
        raise DomainError(f"fractional exponent must lie in (0, 1), got {dexp}")
    if L < 1:
        raise DomainError(f"truncation length must be at least 1, got {L}")
    k = np.arange(1, L + 1, dtype=float)
    return np.concatenate(([1.0], np.cumprod((k - 1.0 + dexp) / k)))


def _stream_rng(seed: int, stream_key: Sequence[int], n: int, j: int) -> np.random.Generator:
    key = tuple(int(v) for v in stream_key) + (int(n), int(j))
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def circulant_embedding(gamma: np.ndarray) -> np.ndarray:
    """
    Eigenvalues of the circulant of size 2L embedding gamma(0..L)

    The first row is gamma(0), ..., gamma(L), gamma(L-1), ..., gamma(1).
    Negative eigenvalues down to Config.SIMULATION["EMBEDDING_TOL"] times the
    largest one are quadrature noise and are set to zero.

    Raises:
        NotPositiveDefiniteError: if the embedding is not nonnegative definite
    """
    gamma = np.asarray(gamma, dtype=float)
    if gamma.ndim != 1 or gamma.size < 2:
        raise DomainError("embedding needs at least the lags 0 and 1")
    row = np.concatenate((gamma, gamma[-2:0:-1]))
    eigenvalues = fft(row).real
    floor = Config.SIMULATION["EMBEDDING_TOL"] * eigenvalues.max()
    if eigenvalues.min() < -floor:
        raise NotPositiveDefiniteError(
            f"circulant embedding of size {row.size} has eigenvalue {eigenvalues.min():.3e}"
        )
    return np.clip(eigenvalues, 0.0, None)


def degree_embedding(
    n: int, spec: SpharmaSpec, N: int, covariance: Optional[np.ndarray] = None
) -> np.ndarray:
    """
    Embedding eigenvalues for the per-order autocovariance B_n / delta

    Starts from the smallest circulant (2N) and doubles it until the
    embedding is nonnegative definite. A precomputed B_n is used as far as
    it reaches; further lags come from covariance_Bn.
    """
    delta = spec.dim(n)
    L = N
    for _ in range(Config.SIMULATION["MAX_EMBEDDING_DOUBLINGS"] + 1):
        if covariance is not None and len(covariance) > L:
            B = np.asarray(covariance[: L + 1], dtype=float)
        else:
            B = covariance_Bn(n, spec, L + 1)
        try:
            return circulant_embedding(B / delta)
        except NotPositiveDefiniteError as exc:
            logger.debug("Degree %d: %s; doubling", n, exc)
            L *= 2
    raise NotPositiveDefiniteError(f"no nonnegative circulant embedding for degree {n} up to size {L}")


def _exact_degree(
    spec: SpharmaSpec, n: int, N: int, seed: int, stream_key: Sequence[int], eigenvalues: np.ndarray
) -> np.ndarray:
    # real part of an FFT of complex white noise has the circulant as covariance
    size = eigenvalues.size
    amplitude = np.sqrt(eigenvalues / size)
    delta = spec.dim(n)
    block = np.empty((N, delta))
    for j in range(1, delta + 1):
        z = _stream_rng(seed, stream_key, n, j).standard_normal((2, size))
        block[:, j - 1] = fft(amplitude * (z[0] + 1j * z[1])).real[:N]
    return block


def _filtered_degree(
    spec: SpharmaSpec, n: int, N: int, burn_in: int, seed: int, stream_key: Sequence[int]
) -> np.ndarray:
    k = spec.index(n)
    delta = spec.dim(n)
    d = spec.exponents.alpha(n) / 2.0
    filter_len = max(
        Config.SIMULATION["MIN_FILTER_LENGTH"], Config.SIMULATION["FILTER_LENGTH_FACTOR"] * N
    )
    total = N + burn_in + filter_len
    scale = math.sqrt(spec.sigma2[k] / delta)

    eta = np.empty((delta, total))
    for j in range(1, delta + 1):
        eta[j - 1] = scale * _stream_rng(seed, stream_key, n, j).standard_normal(total)

    arma = lfilter([1.0, spec.psi[k]], [1.0, -spec.phi[k]], eta, axis=1)
    if d > 0.0:
        weights = frac_int_coeffs(d, filter_len)
        arma = fftconvolve(arma, weights[None, :], axes=1)[:, :total]
    return arma[:, total - N :].T


def simulate(
    spec: SpharmaSpec,
    N: int,
    burn_in: Optional[int] = None,
    seed: Optional[int] = None,
    stream_key: Sequence[int] = (),
    workers: int = 1,
    method: Optional[str] = None,
    covariances: Optional[Mapping[int, np.ndarray]] = None,
) -> CoefficientSample:
    """
    Simulate the error coefficients V_{n,j}(t), t = 1..N, for every model degree

    Each (n, j) stream draws from its own RNG substream keyed by
    (seed, stream_key, n, j), so the output does not depend on scheduling.

    The "exact" method draws every order from the circulant embedding of
    B_n / delta and reproduces the model autocovariance at all lags. The
    "filter" method runs ARMA(1,1) followed by the fractional filter
    truncated at max(MIN_FILTER_LENGTH, FILTER_LENGTH_FACTOR * N) lags; it
    loses variance when alpha(n) approaches 1.

    Args:
        spec: Operator spectra and exponents
        N: Sample size (at least 2)
        burn_in: Discarded warm-up length of the filter method, defaults to Config.SIMULATION["BURN_IN"]
        seed: Master seed, defaults to Config.DEFAULT_SEED
        stream_key: Extra substream key (scenario, N, repetition)
        workers: Threads used over degrees
        method: "exact" or "filter", defaults to Config.SIMULATION["METHOD"]
        covariances: Precomputed B_n(0..) per degree for the exact method;
            at least N + 1 lags avoid recomputation

    Returns:
        CoefficientSample of shape (N, sum(2n+1))

    Raises:
        DomainError: for N < 2, negative burn-in or an unknown method
        NotPositiveDefiniteError: if no circulant embedding is usable
    """
    if N < 2:
        raise DomainError(f"sample size must be at least 2, got {N}")
    burn_in = Config.SIMULATION["BURN_IN"] if burn_in is None else burn_in
    if burn_in < 0:
        raise DomainError(f"burn-in must be non-negative, got {burn_in}")
    method = (method or Config.SIMULATION["METHOD"]).lower()
    if method not in SIMULATION_METHODS:
        raise DomainError(f"unknown simulation method {method!r}; expected one of {SIMULATION_METHODS}")
    seed = Config.DEFAULT_SEED if seed is None else int(seed)
    covariances = covariances or {}

    def run(n: int) -> np.ndarray:
        if method == "filter":
            return _filtered_degree(spec, n, N, burn_in, seed, stream_key)
        eigenvalues = degree_embedding(n, spec, N, covariances.get(n))
        return _exact_degree(spec, n, N, seed, stream_key, eigenvalues)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="simulate") as pool:
            blocks = list(pool.map(run, spec.degrees))
    else:
        blocks = [run(n) for n in spec.degrees]

    logger.debug("Simulated N=%d over %d degrees (%s, seed=%d, key=%s)", N, len(blocks), method, seed, stream_key)
    return CoefficientSample(
        data=np.hstack(blocks),
        degrees=spec.degrees,
        meta={
            "seed": seed,
            "stream_key": [int(v) for v in stream_key],
            "method": method,
            "burn_in": burn_in if method == "filter" else 0,
            "spec": spec.to_dict(),
        },
    )


def arma_spectral_factor(n: int, spec: SpharmaSpec, omega):
    """|1 + psi e^{-iw}|^2 / |1 - phi e^{-iw}|^2 / (2 pi)"""
    k = spec.index(n)
    phi, psi = spec.phi[k], spec.psi[k]
    c = np.cos(np.asarray(omega, dtype=float))
    values = (1.0 + psi * psi + 2.0 * psi * c) / (1.0 + phi * phi - 2.0 * phi * c) / (2.0 * math.pi)
    return float(values) if values.ndim == 0 else values


def spectral_density(n: int, spec: SpharmaSpec, omega):
    """
    f_n(w) = sigma2_n M_n(w) [4 sin^2(w/2)]^(-alpha(n)/2)

    Raises:
        PoleError: at w = 0
        DomainError: for |w| > pi
    """
    omega = np.asarray(omega, dtype=float)
    if np.any(omega == 0.0):
        raise PoleError(f"spectral density of degree {n} has a pole at zero frequency")
    if np.any(np.abs(omega) > math.pi + 1e-12):
        raise DomainError("frequency outside [-pi, pi]")
    k = spec.index(n)
    alpha = spec.exponents.alpha(n)
    pole = (4.0 * np.sin(omega / 2.0) ** 2) ** (-alpha / 2.0)
    values = spec.sigma2[k] * arma_spectral_factor(n, spec, omega) * pole
    return float(values) if values.ndim == 0 else values


@dataclass(frozen=True)
class PerDegreeSpectrum:
    n: int
    omega_grid: np.ndarray
    values: np.ndarray

    @classmethod
    def evaluate(cls, n: int, spec: SpharmaSpec, omega_grid: Iterable[float]) -> "PerDegreeSpectrum":
        grid = np.asarray(list(omega_grid), dtype=float)
        return cls(n=n, omega_grid=grid, values=np.asarray(spectral_density(n, spec, grid)))

    def is_symmetric(self, spec: SpharmaSpec, tol: float = 1e-10) -> bool:
        mirrored = spectral_density(self.n, spec, -self.omega_grid)
        return bool(np.all(np.abs(mirrored - self.values) <= tol * np.abs(self.values)))


def fractional_autocovariance(d: float, lags: int) -> np.ndarray:
    """Autocovariance of ARFIMA(0,d,0) with unit innovation variance, lags 0..lags-1"""
    if not 0.0 <= d < 0.5:
        raise DomainError(f"memory parameter must lie in [0, 1/2), got {d}")
    gamma = np.empty(lags)
    gamma[0] = math.exp(gammaln(1.0 - 2.0 * d) - 2.0 * gammaln(1.0 - d))
    for t in range(1, lags):
        gamma[t] = gamma[t - 1] * (t - 1.0 + d) / (t - d)
    return gamma


def _remainder_integral(n: int, spec: SpharmaSpec, lags: int, half_grid: int) -> np.ndarray:
    # trapezoid of cos(wt) (m(w) - m(0)) g(w) over [-pi, pi] as a DCT-I
    k = spec.index(n)
    alpha = spec.exponents.alpha(n)
    omega = np.linspace(0.0, math.pi, half_grid + 1)
    m = spec.sigma2[k] * arma_spectral_factor(n, spec, omega)
    remainder = np.zeros_like(omega)
    remainder[1:] = (m[1:] - m[0]) * (4.0 * np.sin(omega[1:] / 2.0) ** 2) ** (-alpha / 2.0)
    return (math.pi / half_grid) * dct(remainder, type=1)[:lags]


def covariance_Bn(n: int, spec: SpharmaSpec, lags: int) -> np.ndarray:
    """
    B_n(t) = int_{-pi}^{pi} e^{iwt} f_n(w) dw for t = 0..lags-1

    The pole factor is integrated in closed form; the smooth remainder is
    integrated by trapezoid on a symmetric grid and refined until two
    successive grids agree to Config.QUADRATURE["REFINE_TOL"] relative to B_n(0).

    Raises:
        QuadratureError: if refinement does not converge
    """
    if lags < 1:
        raise DomainError(f"number of lags must be positive, got {lags}")
    k = spec.index(n)
    half_grid = Config.QUADRATURE["HALF_GRID"]
    while half_grid < lags:
        half_grid *= 2

    d = spec.exponents.alpha(n) / 2.0
    m0 = spec.sigma2[k] * arma_spectral_factor(n, spec, 0.0)
    pole_part = m0 * 2.0 * math.pi * fractional_autocovariance(d, lags)

    tol = Config.QUADRATURE["REFINE_TOL"]
    previous = pole_part + _remainder_integral(n, spec, lags, half_grid)
    for _ in range(Config.QUADRATURE["MAX_REFINEMENTS"]):
        half_grid *= 2
        current = pole_part + _remainder_integral(n, spec, lags, half_grid)
        change = np.max(np.abs(current - previous)) / abs(current[0])
        if change <= tol:
            return current
        logger.debug("Degree %d: inversion change %.3e at half grid %d", n, change, half_grid)
        previous = current
    raise QuadratureError(
        f"spectral inversion for degree {n} did not converge (relative change {change:.3e})"
    )


def covariance_table(spec: SpharmaSpec, lags: int) -> Dict[int, np.ndarray]:
    """B_n(0..lags-1) for every model degree"""
    return {n: covariance_Bn(n, spec, lags) for n in spec.degrees}


def trace_check(spec: SpharmaSpec) -> float:
    """Truncated trace sum_n B_n(0) delta(n)"""
    total = 0.0
    for n in spec.degrees:
        total += covariance_Bn(n, spec, 1)[0] * spec.dim(n)
    if not math.isfinite(total):
        raise QuadratureError("truncated trace is not finite")
    return total
