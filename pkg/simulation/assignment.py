"""Treatment assignment mechanisms."""
from typing import Sequence, Union

import numpy as np

from core.errors import InputError

SeedLike = Union[int, Sequence[int], np.random.Generator]


def as_generator(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def complete_randomization(n: int, n_treated: int, seed: SeedLike) -> np.ndarray:
    """Uniform draw over all assignments with exactly `n_treated` ones."""
    if not 0 < n_treated < n:
        raise InputError(f"need 0 < N1 < N, got N={n}, N1={n_treated}")
    z = np.zeros(n, dtype=np.int8)
    z[:n_treated] = 1
    return as_generator(seed).permutation(z)


def cluster_randomization(cluster_id: np.ndarray, n_treated_clusters: int, seed: SeedLike) -> np.ndarray:
    """Complete randomization of whole clusters, expanded back to units."""
    labels, codes = np.unique(cluster_id, return_inverse=True)
    cluster_z = complete_randomization(len(labels), n_treated_clusters, seed)
    return cluster_z[np.asarray(codes).reshape(-1)]
