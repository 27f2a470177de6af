"""Input checks shared by the model classes and the compiler.

Every helper raises ValueError with a message naming the offending input,
and returns the validated value as a float64 numpy array so callers can
use the result directly.
"""

import numpy as np

ATOL = 1e-9


def check_probability_vector(p, name="p", atol=ATOL):
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {p.shape}")
    if p.size == 0:
        raise ValueError(f"{name} is empty")
    if np.any(p < 0):
        raise ValueError(f"{name} has negative entries")
    if abs(p.sum() - 1.0) > atol:
        raise ValueError(f"{name} sums to {p.sum()!r}, expected 1")
    return p


def check_stochastic_matrix(m, name="matrix", atol=ATOL):
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"{name} must be two-dimensional, got shape {m.shape}")
    if np.any(m < 0):
        raise ValueError(f"{name} has negative entries")
    sums = m.sum(axis=1)
    bad = np.where(np.abs(sums - 1.0) > atol)[0]
    if bad.size:
        raise ValueError(
            f"{name} row {bad[0]} sums to {sums[bad[0]]!r}, expected 1"
        )
    return m


def check_observations(obs, n_symbols, name="obs"):
    obs = np.asarray(obs)
    if obs.ndim != 1:
        raise ValueError(f"{name} must be a flat sequence, got shape {obs.shape}")
    if obs.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.issubdtype(obs.dtype, np.integer):
        as_int = obs.astype(np.int64)
        if np.any(as_int != obs):
            raise ValueError(f"{name} contains non-integer symbols")
        obs = as_int
    if obs.min() < 0 or obs.max() >= n_symbols:
        raise ValueError(
            f"{name} contains symbol {int(obs[np.argmax((obs < 0) | (obs >= n_symbols))])} "
            f"outside [0, {n_symbols})"
        )
    return obs.astype(np.int64)
