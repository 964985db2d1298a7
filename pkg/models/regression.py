"""
Manifold multiple functional regression with per-degree Toeplitz GLS
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, toeplitz
from scipy.stats import beta as beta_dist

from config import Config
from models.errors import (
    DimensionMismatchError,
    DomainError,
    GridExactnessError,
    NotPositiveDefiniteError,
    SingularDesignError,
)
from models.lrd_process import CoefficientSample, SpharmaSpec, covariance_Bn
from models.manifold_harmonics import QuadratureGrid, harmonic_basis

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DesignMatrix:
    """N x p matrix of scalar regressors, full column rank"""

    X: np.ndarray

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        if X.ndim != 2:
            raise DimensionMismatchError(f"design must be 2-D, got {X.ndim}-D")
        if not np.all(np.isfinite(X)):
            raise DomainError("design contains non-finite values")
        if X.shape[1] > X.shape[0]:
            raise DimensionMismatchError(f"design has p={X.shape[1]} > N={X.shape[0]}")
        if np.linalg.matrix_rank(X) < X.shape[1]:
            raise SingularDesignError("design matrix is rank deficient")
        X.setflags(write=False)
        object.__setattr__(self, "X", X)

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


def anova_design(N: int, p: int) -> DesignMatrix:
    """
    One-way ANOVA indicators over p contiguous blocks of time

    Blocks have length N // p; the last block absorbs the remainder.
    """
    if p < 1 or N < p:
        raise DimensionMismatchError(f"ANOVA design needs 1 <= p <= N, got N={N}, p={p}")
    block = N // p
    labels = np.minimum(np.arange(N) // block, p - 1)
    X = np.zeros((N, p))
    X[np.arange(N), labels] = 1.0
    return DesignMatrix(X)


@dataclass(frozen=True)
class BetaCoefficients:
    """Fourier coefficients beta_{n,j}, rows by degree, columns by regressor"""

    b: np.ndarray
    degrees: Tuple[int, ...]

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float)
        degrees = tuple(int(n) for n in self.degrees)
        if b.ndim != 2 or b.shape[0] != len(degrees):
            raise DimensionMismatchError(
                f"beta has shape {b.shape}, expected ({len(degrees)}, p)"
            )
        if not np.all(np.isfinite(b)):
            raise DomainError("beta contains non-finite values")
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "degrees", degrees)

    @property
    def p(self) -> int:
        return self.b.shape[1]

    def coefficient(self, n: int, j: int) -> float:
        return float(self.b[self.degrees.index(n), j - 1])

    def weighted_norm(self) -> np.ndarray:
        """sum_n beta_{n,j}^2 (2n+1) per regressor"""
        dims = np.array([2 * n + 1 for n in self.degrees], dtype=float)
        return (self.b**2 * dims[:, None]).sum(axis=0)


def true_beta(M: int = 30, p: int = 5, shape: Optional[float] = None) -> BetaCoefficients:
    """
    Beta-density shaped coefficients beta_{n,j} = Beta(x_n; a, rho_j) / 6

    x_n runs over an equispaced grid of [0, 1] with M points, a = shape and
    rho_j = 5j / (j + 1).
    """
    if M < 2 or p < 1:
        raise DomainError(f"need M >= 2 and p >= 1, got M={M}, p={p}")
    shape = Config.PRESETS["paper-sim"]["beta_shape"] if shape is None else shape
    x = np.arange(M, dtype=float) / (M - 1)
    j = np.arange(1, p + 1, dtype=float)
    rho = 5.0 * j / (j + 1.0)
    b = beta_dist.pdf(x[:, None], shape, rho[None, :]) / 6.0
    return BetaCoefficients(b=b, degrees=tuple(range(1, M + 1)))


def _order_counts(degrees: Sequence[int]) -> np.ndarray:
    return np.array([2 * n + 1 for n in degrees])


def synthesize_response(
    X: DesignMatrix, beta: BetaCoefficients, eps: CoefficientSample
) -> CoefficientSample:
    """Y_{n,k}(t) = sum_j X_{t,j} beta_{n,j} + V_{n,k}(t) for every order k"""
    if eps.N != X.N:
        raise DimensionMismatchError(f"design has N={X.N}, errors have N={eps.N}")
    if beta.degrees != eps.degrees:
        raise DimensionMismatchError("beta and error sample disagree on degrees")
    if beta.p != X.p:
        raise DimensionMismatchError(f"design has p={X.p}, beta has p={beta.p}")
    mean = X.X @ beta.b.T
    expanded = np.repeat(mean, _order_counts(eps.degrees), axis=1)
    return CoefficientSample(
        data=expanded + eps.data, degrees=eps.degrees, meta=dict(eps.meta, response=True)
    )


@dataclass(frozen=True)
class ToeplitzCov:
    """Symmetric Toeplitz covariance with first row B(0..N-1)"""

    first_row: np.ndarray
    n: int

    def __post_init__(self):
        row = np.array(self.first_row, dtype=float)
        if row.ndim != 1 or row.size == 0:
            raise DimensionMismatchError("Toeplitz first row must be a non-empty vector")
        if not np.all(np.isfinite(row)) or row[0] <= 0:
            raise NotPositiveDefiniteError(f"degree {self.n}: invalid covariance first row")
        row.setflags(write=False)
        object.__setattr__(self, "first_row", row)

    @property
    def N(self) -> int:
        return self.first_row.size

    def matrix(self) -> np.ndarray:
        return toeplitz(self.first_row)

    @cached_property
    def factor(self):
        """Cholesky factor, computed once and shared by every fit using this covariance"""
        try:
            return cho_factor(self.matrix(), lower=True)
        except LinAlgError as exc:
            raise NotPositiveDefiniteError(
                f"degree {self.n}: covariance is not positive definite"
            ) from exc

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return cho_solve(self.factor, rhs)

    @classmethod
    def aggregated(cls, n: int, B: np.ndarray, delta: int) -> "ToeplitzCov":
        """Covariance of the order-averaged series: Toeplitz(B_n) / delta^2"""
        return cls(np.asarray(B, dtype=float) / float(delta) ** 2, n)


def oracle_covariances(spec: SpharmaSpec, N: int) -> Dict[int, ToeplitzCov]:
    """Exact Lambda_n of the aggregated series for every model degree"""
    return {
        n: ToeplitzCov.aggregated(n, covariance_Bn(n, spec, N), spec.dim(n))
        for n in spec.degrees
    }


@dataclass(frozen=True)
class GlsFit:
    degrees: Tuple[int, ...]
    beta_hat: np.ndarray  # (degrees, p)
    variance: np.ndarray  # (degrees, p, p)
    predictor: np.ndarray  # (N, degrees)
    degree_loss: np.ndarray
    meta: Dict[str, object] = field(default_factory=dict)

    @property
    def loss(self) -> float:
        return float(self.degree_loss.sum())

    def as_beta(self) -> BetaCoefficients:
        return BetaCoefficients(self.beta_hat, self.degrees)


def _fit_degree(
    X: np.ndarray, y: np.ndarray, cov: ToeplitzCov
) -> Tuple[np.ndarray, np.ndarray, float]:
    weighted_X = cov.solve(X)
    normal = X.T @ weighted_X
    try:
        normal_factor = cho_factor(normal, lower=True)
    except LinAlgError as exc:
        raise SingularDesignError(f"degree {cov.n}: weighted normal equations singular") from exc
    beta_hat = cho_solve(normal_factor, weighted_X.T @ y)
    variance = cho_solve(normal_factor, np.eye(X.shape[1]))
    variance = 0.5 * (variance + variance.T)
    residual = y - X @ beta_hat
    return beta_hat, variance, float(residual @ cov.solve(residual))


def gls_fit(
    X: DesignMatrix,
    Y: CoefficientSample,
    covs: Mapping[int, ToeplitzCov],
    workers: int = 1,
) -> GlsFit:
    """
    Per-degree GLS estimator of the functional regression parameter

    Args:
        X: Design matrix
        Y: Response coefficients; each degree is reduced to its order average
        covs: Covariance of the order-averaged series per degree
        workers: Threads used over degrees

    Returns:
        GlsFit with beta_hat_n, (X^T Lambda_n^-1 X)^-1, predictor X beta_hat_n and loss

    Raises:
        NotPositiveDefiniteError: a covariance failed to factorize
        SingularDesignError: the weighted normal equations are singular
    """
    if Y.N != X.N:
        raise DimensionMismatchError(f"design has N={X.N}, responses have N={Y.N}")
    for n in Y.degrees:
        if n not in covs:
            raise DimensionMismatchError(f"no covariance for degree {n}")
        if covs[n].N != X.N:
            raise DimensionMismatchError(f"covariance of degree {n} has size {covs[n].N}")

    Y_agg = Y.aggregate()

    def run(index: int):
        return _fit_degree(X.X, Y_agg[:, index], covs[Y.degrees[index]])

    indices = range(len(Y.degrees))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="gls") as pool:
            results = list(pool.map(run, indices))
    else:
        results = [run(i) for i in indices]

    beta_hat = np.array([r[0] for r in results])
    return GlsFit(
        degrees=Y.degrees,
        beta_hat=beta_hat,
        variance=np.array([r[1] for r in results]),
        predictor=X.X @ beta_hat.T,
        degree_loss=np.array([r[2] for r in results]),
    )


def gls_loss(
    X: DesignMatrix, Y: CoefficientSample, beta_hat: np.ndarray, covs: Mapping[int, ToeplitzCov]
) -> float:
    """L = sum_n ||Y_n - X beta_n||^2 in the Lambda_n^-1 metric"""
    Y_agg = Y.aggregate()
    total = 0.0
    for index, n in enumerate(Y.degrees):
        residual = Y_agg[:, index] - X.X @ beta_hat[index]
        total += float(residual @ covs[n].solve(residual))
    return total


def ols_residuals(X: DesignMatrix, Y: CoefficientSample) -> CoefficientSample:
    """Per-coefficient residuals of an ordinary least-squares fit, (I - H) Y_{n,k}"""
    if Y.N != X.N:
        raise DimensionMismatchError(f"design has N={X.N}, responses have N={Y.N}")
    coef, *_ = np.linalg.lstsq(X.X, Y.data, rcond=None)
    return CoefficientSample(
        data=Y.data - X.X @ coef, degrees=Y.degrees, meta=dict(Y.meta, residual="ols")
    )


def degree_sums(degrees: Sequence[int], colatitude, longitude) -> np.ndarray:
    """sum_k S_{n,k}(x) per degree, shape (npts, number of degrees)"""
    basis = harmonic_basis(degrees, colatitude, longitude)
    bounds = np.cumsum([0] + [2 * n + 1 for n in degrees])
    return np.column_stack([basis[:, lo:hi].sum(axis=1) for lo, hi in zip(bounds[:-1], bounds[1:])])


def reconstruct_beta(beta: BetaCoefficients, grid: QuadratureGrid) -> np.ndarray:
    """beta_j(x) = sum_n beta_{n,j} sum_k S_{n,k}(x) on the grid, shape (nodes, p)"""
    if max(beta.degrees) > grid.harmonic_bound:
        raise GridExactnessError(
            f"truncation degree {max(beta.degrees)} exceeds grid bound {grid.harmonic_bound}"
        )
    return degree_sums(beta.degrees, grid.colatitude, grid.longitude) @ beta.b
