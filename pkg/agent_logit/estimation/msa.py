from __future__ import annotations

import numpy as np


def msa_update(prior: np.ndarray, y: np.ndarray, i: int) -> np.ndarray:
    """
    Method of successive averages: i/(i+1) * prior + 1/(i+1) * y,
    with i the 0-based iteration index (i=0 replaces the prior).
    Written as prior + (y - prior)/(i+1) so a prior already equal to y
    stays bitwise equal.
    """
    if i < 0:
        raise ValueError(f"iteration index must be >= 0, got {i}")
    y = np.asarray(y, dtype=np.float64)
    if i == 0:
        return y.copy()
    prior = np.asarray(prior, dtype=np.float64)
    return prior + (y - prior) / (i + 1)


def relative_change(new: np.ndarray, old: np.ndarray, floor: float) -> float:
    """
    max over clusters of ||new_m - old_m||_inf / max(||old_m||_inf, floor).
    """
    new = np.atleast_2d(new)
    old = np.atleast_2d(old)
    num = np.max(np.abs(new - old), axis=1)
    den = np.maximum(np.max(np.abs(old), axis=1), floor)
    return float(np.max(num / den))
