"""Shared test utilities."""

import numpy as np

from qrf_sim.metrics import mean_angular_momentum


def random_density(d: int, rng: np.random.Generator) -> np.ndarray:
    """Full-rank random density matrix (Wishart construction)."""
    A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = A @ A.conj().T
    return rho / rho.trace()


def inclination(rho: np.ndarray, ops) -> float:
    v = mean_angular_momentum(rho, ops)
    return float(np.arctan2(v[0], v[2]))
