"""Seeded random states, unitaries and channels."""
from __future__ import annotations

import numpy as np
from scipy.stats import unitary_group


def rng_from(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def random_vector(d: int, rng) -> np.ndarray:
    rng = rng_from(rng)
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return v / np.linalg.norm(v)


def random_density(d: int, rng, rank: int | None = None) -> np.ndarray:
    rng = rng_from(rng)
    r = d if rank is None else rank
    g = rng.normal(size=(d, r)) + 1j * rng.normal(size=(d, r))
    rho = g @ g.conj().T
    return rho / np.trace(rho)


def random_unitary(d: int, rng) -> np.ndarray:
    if d == 1:
        return np.ones((1, 1), dtype=complex)
    rng = rng_from(rng)
    return unitary_group.rvs(d, random_state=rng)


def random_hermitian(d: int, rng) -> np.ndarray:
    rng = rng_from(rng)
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return (g + g.conj().T) / 2


def random_isometry(d_in: int, d_out: int, rng) -> np.ndarray:
    """d_out x d_in matrix with orthonormal columns (needs d_out >= d_in)."""
    u = random_unitary(d_out, rng)
    return u[:, :d_in]


def random_kraus(d_in: int, d_out: int, rng, rank: int = 2) -> list[np.ndarray]:
    """Kraus operators of a random CPTP map from a random Stinespring isometry."""
    rank = max(rank, -(-d_in // d_out))
    v = random_isometry(d_in, d_out * rank, rng)
    t = v.reshape(d_out, rank, d_in)
    return [t[:, k, :] for k in range(rank)]


def random_instrument_kraus(d_in: int, d_out: int, n_outcomes: int, rng, rank: int = 2):
    """Outcome-indexed Kraus lists whose sum over outcomes is trace preserving."""
    rank = max(rank, -(-d_in // (d_out * n_outcomes)))
    v = random_isometry(d_in, d_out * n_outcomes * rank, rng)
    t = v.reshape(d_out, n_outcomes, rank, d_in)
    return [[t[:, x, k, :] for k in range(rank)] for x in range(n_outcomes)]
