"""Seeded random streams, unit conversions, and complex linear-algebra helpers.

Conventions used across the package:
  * powers are watts, spectral densities dBm/Hz, rates bit/s/Hz
  * complex Gaussian CN(0, v) draws independent real/imag parts N(0, v/2)
  * every stochastic subsystem owns its own stream id, so changing one
    model never perturbs another's draws
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve

LOG2E = float(np.log2(np.e))

# Stream ids, one per stochastic subsystem.
PLACEMENT = 0
SHADOWING = 1
SMALL_SCALE = 2
TONE_FADING = 3

_HERMITIAN_TOL = 1e-10
_SOLVE_TOL = 1e-8


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Raised when a Hermitian solve receives a non-PD (or asymmetric) matrix."""


def stream_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent deterministic generator for (seed, key...).

    Streams derived from the same seed but different keys are statistically
    independent; identical (seed, key) gives bitwise-identical sequences on
    every platform (PCG64 + SeedSequence are portable).
    """
    entropy = [int(seed)] + [int(k) for k in key]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def dbm_to_watts(p_dbm: float) -> float:
    """Convert a dBm power level to watts (30 dBm -> 1 W)."""
    if not np.isfinite(p_dbm):
        raise ValueError(f"non-finite dBm value: {p_dbm}")
    return float(10.0 ** ((p_dbm - 30.0) / 10.0))


def watts_to_dbm(p_watts: float) -> float:
    """Inverse of dbm_to_watts; requires a strictly positive power."""
    if p_watts <= 0:
        raise ValueError(f"power must be positive, got {p_watts}")
    return float(10.0 * np.log10(p_watts) + 30.0)


def noise_power(psd_dbm_hz: float, bandwidth_hz: float) -> float:
    """Thermal noise power in watts over `bandwidth_hz` for a flat PSD."""
    if bandwidth_hz <= 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth_hz}")
    return dbm_to_watts(psd_dbm_hz + 10.0 * np.log10(bandwidth_hz))


def crandn(rng: np.random.Generator, *shape: int, var: float = 1.0) -> np.ndarray:
    """Circular complex Gaussian CN(0, var) array of the given shape."""
    scale = np.sqrt(var / 2.0)
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return scale * (re + 1j * im)


def hermitian_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve A x = b for Hermitian positive definite A via Cholesky.

    Rejects inputs whose symmetry residual ||A - A^H|| exceeds 1e-10 relative
    to ||A||, and verifies the solution residual against 1e-8 * ||b||.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.linalg.norm(a)))
    if np.linalg.norm(a - a.conj().T) > _HERMITIAN_TOL * scale:
        raise NotPositiveDefiniteError("matrix is not Hermitian within tolerance")
    try:
        factor = cho_factor(a, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("matrix is not positive definite") from exc
    x = cho_solve(factor, b, check_finite=False)
    residual = np.linalg.norm(a @ x - b)
    if residual > _SOLVE_TOL * max(1e-300, float(np.linalg.norm(b))):
        raise NotPositiveDefiniteError(
            f"solve residual {residual:.3e} exceeds tolerance; matrix ill-conditioned"
        )
    return x
