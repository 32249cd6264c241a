"""
Validation functions shared across the hybrid advection modules.

This module keeps argument checking separate from the numerical code so the
solvers can assume well-formed inputs.
"""

from typing import Sequence, Tuple

import numpy as np

from HybridAdvection.constants import PACKET_SIZE


def validate_finite(values: np.ndarray, name: str) -> np.ndarray:
    """
    Ensure an array contains only finite numbers.

    Args:
        values: Array to check
        name: Argument name used in the error message

    Returns:
        np.ndarray: The input as a float64 array

    Raises:
        ValueError: If any entry is NaN or infinite
    """
    array = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(array)):
        bad = int(np.count_nonzero(~np.isfinite(array)))
        raise ValueError(f"{name} contains {bad} non-finite value(s)")
    return array


def validate_points(points: np.ndarray, name: str = "points") -> np.ndarray:
    """
    Normalize a point list to a finite (n, 2) float array.

    Raises:
        ValueError: If the shape is not (n, 2) or an entry is non-finite
    """
    array = np.asarray(points, dtype=np.float64)
    if array.ndim == 1 and array.shape[0] == 2:
        array = array[None, :]
    if array.ndim != 2 or array.shape[1] != 2:
        raise ValueError(f"{name} must have shape (n, 2), got {array.shape}")
    return validate_finite(array, name)


def validate_packets(packets: np.ndarray) -> np.ndarray:
    """
    Ensure a packet batch has shape (n, PACKET_SIZE) and finite entries.

    Raises:
        ValueError: If the batch is malformed
    """
    array = np.asarray(packets, dtype=np.float64)
    if array.ndim == 1:
        array = array[None, :]
    if array.ndim != 2 or array.shape[1] != PACKET_SIZE:
        raise ValueError(
            f"packets must have shape (n, {PACKET_SIZE}), got {array.shape}"
        )
    return validate_finite(array, "packets")


def validate_iterations(nu: int) -> int:
    """
    Check a reinitialization iteration count.

    Raises:
        ValueError: If nu is negative or not an integer
    """
    if int(nu) != nu:
        raise ValueError(f"nu must be an integer, got {nu}")
    if nu < 0:
        raise ValueError(f"nu must be non-negative, got {nu}")
    return int(nu)


def validate_positive(value: float, name: str) -> float:
    """
    Check that a scalar is strictly positive.

    Raises:
        ValueError: If value <= 0
    """
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value}")
    return value


def validate_fractions(
    fractions: Sequence[float], discard: float, folds: int
) -> Tuple[int, ...]:
    """
    Convert split fractions to whole numbers of folds.

    Args:
        fractions: Train, test and validation fractions
        discard: Fraction thrown away
        folds: Total number of folds

    Returns:
        Tuple[int, ...]: Folds per bucket (train, test, validation, discard)

    Raises:
        ValueError: If fractions do not sum to one or do not map to whole folds
    """
    shares = [*fractions, discard]
    if any(s < 0 for s in shares):
        raise ValueError(f"fractions must be non-negative, got {shares}")
    if not np.isclose(sum(shares), 1.0):
        raise ValueError(f"fractions must sum to 1, got {sum(shares)}")
    counts = [s * folds for s in shares]
    rounded = tuple(int(round(c)) for c in counts)
    if not np.allclose(counts, rounded):
        raise ValueError(f"fractions must be multiples of 1/{folds}, got {shares}")
    return rounded
