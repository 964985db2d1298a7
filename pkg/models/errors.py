"""
Typed errors raised by the numerical models and the experiment pipeline
"""

import numpy as np


class SphLrdError(Exception):
    """Base class for every error raised by this package"""


class NumericalError(SphLrdError):
    """Failures of a numerical method (exit code 2 on the CLI)"""


class DomainError(NumericalError, ValueError):
    """Argument outside the mathematical domain of an operation"""


class IndexRangeError(SphLrdError, IndexError):
    """Harmonic or time index out of range"""


class GridExactnessError(NumericalError):
    """Requested harmonic degree exceeds the quadrature grid's exactness bound"""


class InstabilityError(NumericalError):
    """Autoregressive eigenvalue on or outside the unit circle"""


class PoleError(NumericalError):
    """Spectral density evaluated at the zero-frequency pole"""


class QuadratureError(NumericalError):
    """Spectral inversion did not converge under grid refinement"""


class NotPositiveDefiniteError(NumericalError, np.linalg.LinAlgError):
    """Covariance matrix failed symmetric factorization"""


class SingularDesignError(NumericalError, np.linalg.LinAlgError):
    """Design matrix is rank deficient"""


class DimensionMismatchError(SphLrdError, ValueError):
    """Inputs disagree on N, M, p or the coefficient layout"""


class BoundsError(SphLrdError, ValueError):
    """Parameter vector outside its admissible box"""


class NotComputedError(SphLrdError, KeyError):
    """A statistic requested from a result bundle was never computed"""


class ConfigurationError(SphLrdError, ValueError):
    """Invalid or unknown configuration entry"""


class DataFormatError(SphLrdError):
    """Malformed input file (exit code 3 on the CLI)"""


class ExperimentError(SphLrdError):
    """Too many failed repetitions in an experiment run"""
