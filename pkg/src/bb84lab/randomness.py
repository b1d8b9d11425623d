"""Random matrices, states and channels for tests and adversarial searches."""

from __future__ import annotations

import numpy as np


def ginibre(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    return (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / np.sqrt(2)


def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary (QR of a Ginibre matrix with phase fix)."""
    q, r = np.linalg.qr(ginibre(dim, dim, rng))
    ph = np.diagonal(r) / np.abs(np.diagonal(r))
    return q * ph


def random_isometry(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    return haar_unitary(rows, rng)[:, :cols]


def random_density_matrix(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    g = ginibre(dim, rank or dim, rng)
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_hermitian(dim: int, rng: np.random.Generator) -> np.ndarray:
    g = ginibre(dim, dim, rng)
    return (g + g.conj().T) / 2


def random_kraus(in_dim: int, out_dim: int, rank: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Kraus operators of a random CPTP map ``in_dim -> out_dim``."""
    if out_dim * rank < in_dim:
        raise ValueError(f"no trace-preserving map {in_dim} -> {out_dim} has Kraus rank {rank}")
    v = random_isometry(out_dim * rank, in_dim, rng)
    blocks = v.reshape(out_dim, rank, in_dim)
    return [blocks[:, k, :].copy() for k in range(rank)]
