"""k-nearest-neighbor and radius queries with deterministic tie-breaking.

The kd-tree proposes candidates; distances are recomputed exactly and
ordered by (distance, point index) so results equal a brute-force sort.
"""

import numpy as np
from scipy.spatial import cKDTree

from ..errors import InvalidArgumentError
from .cloud import PointCloud


def point_distances(points: np.ndarray, query: np.ndarray) -> np.ndarray:
    diff = points - query
    return np.sqrt(np.sum(diff * diff, axis=-1))


class NeighborIndex:
    """Read-only spatial index over a point cloud."""

    def __init__(self, cloud: PointCloud | np.ndarray):
        points = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
        self.points = points
        self._tree = cKDTree(points)

    def __len__(self):
        return self.points.shape[0]

    def _ordered(self, candidates: np.ndarray, query: np.ndarray, k: int):
        dist = point_distances(self.points[candidates], query)
        order = np.lexsort((candidates, dist))[:k]
        return candidates[order], dist[order]

    def knn(self, query, k: int) -> list[tuple[int, float]]:
        indices, distances = self.knn_arrays(query, k)
        return [(int(i), float(d)) for i, d in zip(indices, distances)]

    def knn_arrays(self, query, k: int) -> tuple[np.ndarray, np.ndarray]:
        n = len(self)
        if not 1 <= k <= n:
            raise InvalidArgumentError(f"k must be in [1, {n}], got {k}")
        query = np.asarray(query, dtype=np.float64).reshape(3)
        if k == n:
            return self._ordered(np.arange(n), query, k)
        _, cand = self._tree.query(query, k=k)
        cand = np.atleast_1d(cand)
        # Everything at or below the k-th distance competes for the last slots.
        radius = point_distances(self.points[cand], query).max()
        pool = np.asarray(self._tree.query_ball_point(query, radius * (1 + 1e-12) + 1e-300), dtype=np.int64)
        return self._ordered(pool, query, k)

    def knn_all(self, k: int, queries: np.ndarray | None = None) -> np.ndarray:
        """Neighbor index matrix (Q, k) for many queries (default: the indexed points)."""
        n = len(self)
        if not 1 <= k <= n:
            raise InvalidArgumentError(f"k must be in [1, {n}], got {k}")
        queries = self.points if queries is None else np.asarray(queries, dtype=np.float64)
        q = queries.shape[0]
        fetch = min(k + 1, n)
        _, cand = self._tree.query(queries, k=fetch)
        cand = cand.reshape(q, fetch)
        dist = point_distances(self.points[cand], queries[:, None, :])
        order = np.lexsort((cand, dist), axis=-1)
        cand = np.take_along_axis(cand, order, axis=1)
        dist = np.take_along_axis(dist, order, axis=1)
        result = cand[:, :k].copy()
        if fetch > k:
            ambiguous = np.nonzero(dist[:, k - 1] == dist[:, k])[0]
            for row in ambiguous:
                result[row] = self.knn_arrays(queries[row], k)[0]
        return result

    def radius(self, query, r: float) -> list[tuple[int, float]]:
        query = np.asarray(query, dtype=np.float64).reshape(3)
        pool = np.asarray(self._tree.query_ball_point(query, r), dtype=np.int64)
        if pool.size == 0:
            return []
        indices, distances = self._ordered(pool, query, pool.size)
        keep = distances <= r
        return [(int(i), float(d)) for i, d in zip(indices[keep], distances[keep])]

    def nearest(self, queries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Nearest indexed point for each query row (ties by lower index)."""
        idx = self.knn_all(1, queries)[:, 0]
        return idx, point_distances(self.points[idx], np.asarray(queries, dtype=np.float64))


def knn(index: NeighborIndex, query, k: int) -> list[tuple[int, float]]:
    return index.knn(query, k)


def dilated_neighborhoods(index: NeighborIndex, k: int, dilation: int = 1) -> np.ndarray:
    """(N, k) neighborhoods: of the k·d nearest, keep ranks d, 2d, ..., kd.

    With d = 1 a point is its own first neighbor; larger d skips it.
    """
    if k < 1 or dilation < 1:
        raise InvalidArgumentError(f"k and dilation must be >= 1, got k={k}, d={dilation}")
    n = len(index)
    ranked = index.knn_all(min(k * dilation, n))
    neighbors = ranked[:, dilation - 1::dilation][:, :k]
    if neighbors.shape[1] == 0:
        neighbors = ranked[:, -1:]
    if neighbors.shape[1] < k:
        # Fewer points than the neighborhood asks for: repeat the farthest kept one.
        pad = np.repeat(neighbors[:, -1:], k - neighbors.shape[1], axis=1)
        neighbors = np.concatenate([neighbors, pad], axis=1)
    return neighbors
