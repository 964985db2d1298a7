"""
Configuration settings for Spherical LRD Regression
"""

import math
import os
from pathlib import Path

from dotenv import load_dotenv

# Base directory
BASE_DIR = Path(__file__).resolve().parent

load_dotenv(BASE_DIR / ".env")


class Config:
    # Runtime settings
    DEBUG = os.environ.get("SPHLRD_DEBUG", "False").lower() == "true"
    DEFAULT_SEED = int(os.environ.get("SPHLRD_SEED", 20240607))
    WORKERS = int(os.environ.get("SPHLRD_WORKERS", 1))

    # Output locations
    OUTPUT_DIR = Path(os.environ.get("SPHLRD_OUTPUT_DIR", BASE_DIR / "results"))
    LOG_DIR = Path(os.environ.get("SPHLRD_LOG_DIR", BASE_DIR / "logs"))
    LOG_LEVEL = os.environ.get("SPHLRD_LOG_LEVEL", "INFO").upper()

    # Manifold presets, addressable by name in experiment files
    MANIFOLDS = {
        "s2": {
            "d": 2,
            "alpha": 0.0,
            "beta": 0.0,
            "eps": 1.0,
            "omega_d": 4.0 * math.pi,
        },
    }

    # Error-process simulation
    # "exact" draws from the circulant embedding of B_n; "filter" runs the
    # SPHARMA recursion through a truncated fractional filter
    SIMULATION = {
        "METHOD": os.environ.get("SPHLRD_SIMULATION_METHOD", "exact"),
        "EMBEDDING_TOL": 1e-6,
        "MAX_EMBEDDING_DOUBLINGS": 4,
        "BURN_IN": 500,
        "MIN_FILTER_LENGTH": 2000,
        "FILTER_LENGTH_FACTOR": 4,
    }

    # Spectral inversion B_n(t) = int e^{iwt} f_n(w) dw
    QUADRATURE = {
        "HALF_GRID": 2**15,  # 2^16 symmetric frequencies
        "REFINE_TOL": 1e-6,
        "MAX_REFINEMENTS": 2,
    }

    # Minimum-contrast optimizer
    OPTIMIZER = {
        "MAX_ITER": 500,
        "REL_TOL": 1e-8,
        "RESTARTS": 3,
        "JITTER": 0.05,
        "JITTER_SEED": 7,
    }

    # Box constraints of the spectral families; each keeps alpha(n) in (0, 1)
    SPECTRAL_BOUNDS = {
        "dpbs": [[1e-3, 0.999], [1e-3, 0.999], [1e-3, 0.999]],
        "ipbs": [[0.98, 3.0], [0.0, 1.005]],
        "farima": [[0.005, 0.495]],
        "white": [[1e-8, 1e8]],
    }

    # Residual analysis
    RESIDUALS = {
        "HISTOGRAM_BINS": 12,
        "SPECTRAL_GRID": 4096,  # intervals on [2pi/N, pi] for L1 spectral norms
        "FIELD_DEGREE_BOUND": 60,  # grid exact for products up to 2M
        "REPORTED_DEGREES": [1, 5, 10, 15, 20, 25, 30],
    }

    TIME_PRESETS = {
        "paper-times-500": [0, 62, 124, 187, 249, 311, 374, 436, 499],
    }

    # Older names still accepted in experiment files
    PRESET_ALIASES = {
        "sim-study": "paper-sim",
        "study-times-500": "paper-times-500",
    }

    # Simulation-study parameter block
    PRESETS = {
        "paper-sim": {
            "manifold": "s2",
            "M": 30,
            "p": 5,
            "min_degree": 1,
            "sigma2": "(n+1)^-3/2",
            "phi": "[0.7(n+1/n)]^-3/2",
            "psi": "0.4(n+1/n)^-3/2",
            "dpbs_theta": [0.75, 0.76, 0.77],
            "ipbs_upsilon": [1.0, 1.0],
            "beta_shape": 2.0,
        },
    }

    EXPERIMENT = {
        "DESK": {"R": 20, "N_LIST": [50, 100, 200]},
        "PAPER": {"R": 100, "N_LIST": [50, 100, 500]},
        "MAX_FAILED_FRACTION": 0.05,
        "SCENARIOS": ["dpbs", "ipbs"],
        "MODES": ["oracle", "plugin", "both"],
    }

    # Logging configuration
    LOGGING_CONFIG = {
        "version": 1,
        "disable_existing_loggers": False,
        "formatters": {
            "standard": {"format": "%(asctime)s [%(levelname)s] %(name)s: %(message)s"},
        },
        "handlers": {
            "default": {
                "level": LOG_LEVEL,
                "formatter": "standard",
                "class": "logging.StreamHandler",
            },
            "file": {
                "level": "DEBUG",
                "formatter": "standard",
                "class": "logging.handlers.RotatingFileHandler",
                "filename": LOG_DIR / "sphlrd.log",
                "maxBytes": 10485760,  # 10MB
                "backupCount": 5,
            },
        },
        "loggers": {
            "": {"handlers": ["default", "file"], "level": "DEBUG", "propagate": True},
        },
    }
