"""
Utility helper functions for result files, hashing and RNG provenance
"""

import hashlib
import os
import re
import unicodedata
from pathlib import Path
from typing import Iterable, Iterator, Tuple

from config import Config


def sanitize_label(label: str) -> str:
    """
    Turn a free-form label into a safe file-name stem

    Args:
        label: Label such as "dpbs N=50 oracle"

    Returns:
        Stem containing only ASCII letters, digits, '-', '_' and '.'
    """
    label = unicodedata.normalize("NFKD", label or "").encode("ASCII", "ignore").decode("ASCII")
    label = re.sub(r"[^A-Za-z0-9._-]+", "_", label).strip("._")
    return label[:128] or "unnamed"


def is_safe_path(base_path: str, target_path: str) -> bool:
    """True when target_path resolves inside base_path"""
    try:
        return Path(os.path.abspath(target_path)).is_relative_to(os.path.abspath(base_path))
    except (TypeError, ValueError):
        return False


def chunked_read(file_path: str, chunk_size: int = 8192) -> Iterator[bytes]:
    with open(file_path, "rb") as handle:
        yield from iter(lambda: handle.read(chunk_size), b"")


def get_file_hash(file_path: str, algorithm: str = "sha256") -> str:
    """
    Digest of a result file, as recorded in bundle manifests

    Args:
        file_path: Path to file
        algorithm: Any hashlib algorithm name

    Returns:
        Hex digest
    """
    digest = hashlib.new(algorithm)
    for chunk in chunked_read(file_path):
        digest.update(chunk)
    return digest.hexdigest()


def validate_path(path: str, must_exist: bool = True) -> Tuple[bool, str]:
    """
    Check a data or output path given on the command line

    Returns:
        (ok, reason); reason is empty when ok
    """
    if not path:
        return False, "empty path"
    if ".." in Path(str(path).replace("\\", "/")).parts:
        return False, "parent references ('..') are not accepted"
    if must_exist and not Path(path).exists():
        return False, "no such file or directory"
    return True, ""


def format_float(value: float) -> str:
    """Shortest repr that round-trips, so reruns write identical bytes"""
    return repr(float(value))


def format_row(values: Iterable) -> str:
    return "\t".join(format_float(v) if isinstance(v, float) else str(v) for v in values)


def scenario_code(scenario: str) -> int:
    """Stable integer for a scenario name, used in RNG stream keys"""
    return Config.EXPERIMENT["SCENARIOS"].index(scenario.lower())


def stream_key(scenario: str, N: int, repetition: int) -> Tuple[int, int, int]:
    """RNG substream key of one repetition; degrees and orders are appended by the simulator"""
    return (scenario_code(scenario), int(N), int(repetition))
