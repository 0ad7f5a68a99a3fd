from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from ..errors import InvalidArgumentError


@dataclass
class MatchSet:
    """Parallel arrays: row ``index_a[i]`` of A matches row ``index_b[i]`` of B."""

    index_a: np.ndarray
    index_b: np.ndarray
    distance: np.ndarray

    def __len__(self):
        return self.index_a.shape[0]

    def pairs(self) -> list[tuple[int, int, float]]:
        return [(int(a), int(b), float(d)) for a, b, d in zip(self.index_a, self.index_b, self.distance)]

    def subset(self, mask) -> "MatchSet":
        return MatchSet(self.index_a[mask], self.index_b[mask], self.distance[mask])


def match_descriptors(desc_a: np.ndarray, desc_b: np.ndarray, mode: str = "mutual") -> MatchSet:
    """Nearest neighbour in B for every row of A (ties by lower index); ``mutual``
    keeps only pairs that are each other's nearest neighbour."""
    desc_a = np.asarray(desc_a, dtype=np.float64)
    desc_b = np.asarray(desc_b, dtype=np.float64)
    if desc_a.ndim != 2 or desc_b.ndim != 2 or desc_a.shape[0] == 0 or desc_b.shape[0] == 0:
        raise InvalidArgumentError(f"matching needs two non-empty descriptor sets, got {desc_a.shape} and {desc_b.shape}")
    if desc_a.shape[1] != desc_b.shape[1]:
        raise InvalidArgumentError(f"descriptor dimensions differ: {desc_a.shape[1]} vs {desc_b.shape[1]}")
    if mode not in ("nn", "mutual"):
        raise InvalidArgumentError(f"unknown matching mode '{mode}'")

    dist = cdist(desc_a, desc_b)
    rows = np.arange(dist.shape[0])
    nearest_b = np.argmin(dist, axis=1)
    if mode == "mutual":
        nearest_a = np.argmin(dist, axis=0)
        rows = rows[nearest_a[nearest_b] == rows]
        nearest_b = nearest_b[rows]
    return MatchSet(rows, nearest_b, dist[rows, nearest_b])
