"""
Harmonic analysis on compact two-point homogeneous spaces, with the real
spherical-harmonic basis and Gauss-Legendre quadrature on the sphere
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import gammaln

from config import Config
from models.errors import DomainError, GridExactnessError, IndexRangeError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, Sequence[float], np.ndarray]

_X_TOL = 1e-12


@dataclass(frozen=True)
class ManifoldSpec:
    """Jacobi parameters fixing the harmonic machinery of a manifold"""

    d: int
    alpha: float
    beta: float
    eps: float
    omega_d: float

    def __post_init__(self):
        if self.d < 1:
            raise DomainError(f"ManifoldSpec: dimension must be positive, got {self.d}")
        if self.alpha <= -1 or self.beta <= -1:
            raise DomainError(
                f"ManifoldSpec: Jacobi parameters must exceed -1, got ({self.alpha}, {self.beta})"
            )
        if self.eps <= 0 or self.omega_d <= 0:
            raise DomainError("ManifoldSpec: eps and omega_d must be positive")

    @classmethod
    def from_preset(cls, name: str) -> "ManifoldSpec":
        try:
            return cls(**Config.MANIFOLDS[name.lower()])
        except KeyError:
            raise DomainError(f"Unknown manifold preset: {name}") from None

    @property
    def is_sphere(self) -> bool:
        return (
            self.d == 2
            and self.alpha == 0.0
            and self.beta == 0.0
            and self.eps == 1.0
            and math.isclose(self.omega_d, 4.0 * math.pi)
        )


S2 = ManifoldSpec.from_preset("s2")


@dataclass(frozen=True)
class SphPoint:
    """Point on S^2 in radians"""

    colatitude: float
    longitude: float

    def __post_init__(self):
        if not 0.0 <= self.colatitude <= math.pi:
            raise DomainError(f"colatitude {self.colatitude} outside [0, pi]")
        if not 0.0 <= self.longitude < 2.0 * math.pi:
            raise DomainError(f"longitude {self.longitude} outside [0, 2pi)")


def _check_jacobi_args(n: int, alpha: float, beta: float, x: np.ndarray) -> None:
    if n < 0:
        raise DomainError(f"Jacobi degree must be non-negative, got {n}")
    if alpha <= -1 or beta <= -1:
        raise DomainError(f"Jacobi parameters must exceed -1, got ({alpha}, {beta})")
    if np.any(np.abs(x) > 1.0 + _X_TOL):
        raise DomainError("Jacobi argument outside [-1, 1]")


def jacobi_table(nmax: int, alpha: float, beta: float, x: ArrayLike) -> np.ndarray:
    """
    Evaluate P_0..P_nmax of the Jacobi family by the ascending recurrence

    Args:
        nmax: Highest degree
        alpha: Jacobi parameter alpha > -1
        beta: Jacobi parameter beta > -1
        x: Evaluation points in [-1, 1]

    Returns:
        Array of shape (nmax + 1,) + shape(x)
    """
    x = np.asarray(x, dtype=float)
    _check_jacobi_args(nmax, alpha, beta, x)
    x = np.clip(x, -1.0, 1.0)

    table = np.empty((nmax + 1,) + x.shape)
    table[0] = 1.0
    if nmax == 0:
        return table
    ab = alpha + beta
    table[1] = (alpha + 1.0) + 0.5 * (ab + 2.0) * (x - 1.0)

    for n in range(2, nmax + 1):
        c = 2.0 * n + ab
        a1 = 2.0 * n * (n + ab) * (c - 2.0)
        a2 = (c - 1.0) * (alpha * alpha - beta * beta)
        a3 = (c - 2.0) * (c - 1.0) * c
        a4 = 2.0 * (n + alpha - 1.0) * (n + beta - 1.0) * c
        table[n] = ((a2 + a3 * x) * table[n - 1] - a4 * table[n - 2]) / a1
    return table


def jacobi_poly(n: int, alpha: float, beta: float, x: ArrayLike) -> Union[float, np.ndarray]:
    """Jacobi polynomial P_n^{alpha,beta}(x)"""
    values = jacobi_table(n, alpha, beta, x)[n]
    return float(values) if values.ndim == 0 else values


def jacobi_at_one(n: int, alpha: float) -> float:
    """P_n^{alpha,beta}(1) = Gamma(n+alpha+1) / (Gamma(alpha+1) Gamma(n+1))"""
    return math.exp(gammaln(n + alpha + 1.0) - gammaln(alpha + 1.0) - gammaln(n + 1.0))


def normalized_jacobi(n: int, spec: ManifoldSpec, c: ArrayLike) -> Union[float, np.ndarray]:
    """R_n(c) = P_n(c) / P_n(1); equals 1 at c = 1"""
    values = np.asarray(jacobi_table(n, spec.alpha, spec.beta, c)[n] / jacobi_at_one(n, spec.alpha))
    values = np.where(np.asarray(c) == 1.0, 1.0, values)
    return float(values) if values.ndim == 0 else values


def eigenspace_dim(n: int, spec: ManifoldSpec) -> int:
    """
    Dimension delta(n, d) of the n-th Laplace-Beltrami eigenspace

    Args:
        n: Degree (discrete Legendre frequency)
        spec: Manifold specification

    Returns:
        Integer eigenspace dimension
    """
    if n < 0:
        raise DomainError(f"degree must be non-negative, got {n}")
    a, b = spec.alpha, spec.beta
    if n == 0:
        return 1
    log_ratio = (
        gammaln(b + 1.0)
        + gammaln(n + a + b + 1.0)
        + gammaln(n + a + 1.0)
        - gammaln(a + 1.0)
        - gammaln(a + b + 2.0)
        - gammaln(n + 1.0)
        - gammaln(n + b + 1.0)
    )
    value = (2.0 * n + a + b + 1.0) * math.exp(log_ratio)
    return int(round(value))


def lb_eigenvalue(n: int, spec: ManifoldSpec) -> float:
    """lambda_n = -n eps (n eps + alpha + beta + 1)"""
    if n < 0:
        raise DomainError(f"degree must be non-negative, got {n}")
    ne = n * spec.eps
    return -ne * (ne + spec.alpha + spec.beta + 1.0)


def zonal_kernel(n: int, cos_distance: ArrayLike, spec: ManifoldSpec) -> Union[float, np.ndarray]:
    """(delta(n,d) / omega_d) R_n(cos distance)"""
    return eigenspace_dim(n, spec) / spec.omega_d * normalized_jacobi(n, spec, cos_distance)


def great_circle_cos(x: SphPoint, y: SphPoint) -> float:
    c = math.cos(x.colatitude) * math.cos(y.colatitude) + math.sin(x.colatitude) * math.sin(
        y.colatitude
    ) * math.cos(x.longitude - y.longitude)
    return min(1.0, max(-1.0, c))


def addition_kernel(n: int, x: SphPoint, y: SphPoint, spec: ManifoldSpec = S2) -> float:
    """Right-hand side of the addition formula for degree n"""
    return float(zonal_kernel(n, great_circle_cos(x, y), spec))


# Real spherical harmonics on S^2


def associated_legendre(nmax: int, cos_theta: ArrayLike) -> np.ndarray:
    """
    Fully normalized associated Legendre functions (4pi normalization)

    Column-wise recurrence for m < n, sectoral recurrence for m = n.

    Returns:
        Array of shape (nmax + 1, nmax + 1) + shape(cos_theta), indexed [n, m]
    """
    t = np.clip(np.asarray(cos_theta, dtype=float), -1.0, 1.0)
    u = np.sqrt(1.0 - t * t)
    pnm = np.zeros((nmax + 1, nmax + 1) + t.shape)
    pnm[0, 0] = 1.0
    if nmax >= 1:
        pnm[1, 0] = math.sqrt(3.0) * t
        pnm[1, 1] = math.sqrt(3.0) * u

    for n in range(2, nmax + 1):
        for m in range(0, n):
            a_nm = math.sqrt((2.0 * n - 1.0) * (2.0 * n + 1.0) / ((n - m) * (n + m)))
            b_nm = 0.0
            if n - m - 1 > 0:
                b_nm = math.sqrt(
                    (2.0 * n + 1.0)
                    * (n + m - 1.0)
                    * (n - m - 1.0)
                    / ((n - m) * (n + m) * (2.0 * n - 3.0))
                )
            pnm[n, m] = a_nm * t * pnm[n - 1, m] - b_nm * pnm[n - 2, m]
        pnm[n, n] = u * math.sqrt((2.0 * n + 1.0) / (2.0 * n)) * pnm[n - 1, n - 1]
    return pnm


def order_to_m(n: int, j: int) -> int:
    """Order index j = 1..2n+1 enumerates m = -n..n"""
    if not 1 <= j <= 2 * n + 1:
        raise IndexRangeError(f"order index {j} outside 1..{2 * n + 1} for degree {n}")
    return j - n - 1


def coefficient_layout(degrees: Iterable[int]) -> np.ndarray:
    """(degree, order) pairs of a coefficient vector, degrees ascending, orders 1..2n+1"""
    pairs = [(n, j) for n in degrees for j in range(1, 2 * n + 2)]
    return np.array(pairs, dtype=int).reshape(-1, 2)


def harmonic_basis(
    degrees: Sequence[int], colatitude: ArrayLike, longitude: ArrayLike
) -> np.ndarray:
    """
    Real orthonormal harmonics evaluated at a set of points

    Args:
        degrees: Degrees to include, ascending
        colatitude: Point colatitudes (radians)
        longitude: Point longitudes (radians)

    Returns:
        Matrix of shape (npts, sum(2n+1)) with columns in coefficient_layout order
    """
    colatitude = np.atleast_1d(np.asarray(colatitude, dtype=float))
    longitude = np.atleast_1d(np.asarray(longitude, dtype=float))
    degrees = list(degrees)
    if not degrees:
        return np.zeros((colatitude.size, 0))
    nmax = max(degrees)

    rings, inverse = np.unique(colatitude, return_inverse=True)
    pnm = associated_legendre(nmax, np.cos(rings))[:, :, inverse]
    norm = 1.0 / math.sqrt(4.0 * math.pi)

    columns: List[np.ndarray] = []
    for n in degrees:
        for m in range(-n, n + 1):
            if m < 0:
                columns.append(norm * pnm[n, -m] * np.sin(-m * longitude))
            elif m == 0:
                columns.append(norm * pnm[n, 0])
            else:
                columns.append(norm * pnm[n, m] * np.cos(m * longitude))
    return np.stack(columns, axis=1)


def real_harmonic(n: int, j: int, p: SphPoint) -> float:
    """Real orthonormal spherical harmonic S_{n,j} at p"""
    m = order_to_m(n, j)
    pnm = associated_legendre(n, math.cos(p.colatitude))
    value = pnm[n, abs(m)] / math.sqrt(4.0 * math.pi)
    if m < 0:
        value *= math.sin(-m * p.longitude)
    elif m > 0:
        value *= math.cos(m * p.longitude)
    return float(value)


@dataclass(frozen=True)
class QuadratureGrid:
    """Product rule on S^2: Gauss-Legendre in colatitude, trapezoid in longitude"""

    colatitude: np.ndarray
    longitude: np.ndarray
    weights: np.ndarray
    degree_bound: int
    shape: tuple = field(default=(0, 0))

    @classmethod
    def gauss_legendre(cls, degree_bound: int, spec: ManifoldSpec = S2) -> "QuadratureGrid":
        """
        Build a grid integrating polynomial integrands of degree <= degree_bound exactly

        Args:
            degree_bound: Exactness degree of the rule (2M for degree-M products)
            spec: Manifold; only the sphere is supported

        Returns:
            QuadratureGrid whose weights sum to omega_d
        """
        if not spec.is_sphere:
            raise DomainError("Quadrature grids are only available on S^2")
        if degree_bound < 0:
            raise DomainError(f"degree bound must be non-negative, got {degree_bound}")
        n_theta = degree_bound // 2 + 1
        n_phi = degree_bound + 1
        x, w = leggauss(n_theta)
        theta = np.arccos(x[::-1])
        w_theta = w[::-1]
        phi = 2.0 * math.pi * np.arange(n_phi) / n_phi

        colat, lon = np.meshgrid(theta, phi, indexing="ij")
        weights = np.outer(w_theta, np.full(n_phi, 2.0 * math.pi / n_phi))
        logger.debug("Gauss-Legendre grid %dx%d, exact to degree %d", n_theta, n_phi, degree_bound)
        return cls(
            colatitude=colat.ravel(),
            longitude=lon.ravel(),
            weights=weights.ravel(),
            degree_bound=degree_bound,
            shape=(n_theta, n_phi),
        )

    @property
    def size(self) -> int:
        return self.weights.size

    @property
    def harmonic_bound(self) -> int:
        """Highest degree whose projections are exact for fields of the same band limit"""
        return self.degree_bound // 2

    @property
    def nodes(self) -> List[SphPoint]:
        return [SphPoint(float(c), float(l)) for c, l in zip(self.colatitude, self.longitude)]

    def basis(self, degrees: Sequence[int]) -> np.ndarray:
        return harmonic_basis(degrees, self.colatitude, self.longitude)

    def check_degree(self, n: int) -> None:
        if n > self.harmonic_bound:
            raise GridExactnessError(
                f"degree {n} exceeds grid exactness bound {self.harmonic_bound}"
            )


def project_field(field_values: ArrayLike, grid: QuadratureGrid, n: int, j: int) -> float:
    """Quadrature approximation of <field, S_{n,j}>"""
    grid.check_degree(n)
    m = order_to_m(n, j)
    values = np.asarray(field_values, dtype=float)
    if values.shape != (grid.size,):
        raise DomainError(f"field has shape {values.shape}, grid has {grid.size} nodes")
    column = harmonic_basis([n], grid.colatitude, grid.longitude)[:, m + n]
    return float(np.sum(grid.weights * values * column))


def project_all(
    field_values: ArrayLike, grid: QuadratureGrid, degrees: Sequence[int]
) -> np.ndarray:
    """Project one field (or fields stacked on the last axis) onto every (n, j) of degrees"""
    for n in degrees:
        grid.check_degree(n)
    values = np.asarray(field_values, dtype=float)
    basis = grid.basis(degrees)
    return (basis * grid.weights[:, None]).T @ values


def synthesize(
    coefficients: ArrayLike,
    degrees: Sequence[int],
    colatitude: ArrayLike,
    longitude: ArrayLike,
    basis: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Evaluate sum_{n,j} c_{n,j} S_{n,j} at points; coefficients on the first axis"""
    if basis is None:
        basis = harmonic_basis(degrees, colatitude, longitude)
    return basis @ np.asarray(coefficients, dtype=float)
