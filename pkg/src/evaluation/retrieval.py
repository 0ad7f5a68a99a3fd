"""Place recognition by exact linear scan over global descriptors."""

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgumentError, ParseError
from ..utils.log import log

DEFAULT_POSITIVE_RADIUS = 25.0
DEFAULT_TOP_N = 25
_NORM_TOLERANCE = 1e-4


@dataclass
class RetrievalResult:
    indices: np.ndarray
    ids: list[str]
    distances: np.ndarray


class DescriptorDatabase:
    """Immutable set of (descriptor, position, id) entries in insertion order."""

    def __init__(self, descriptors, positions, ids=None):
        descriptors = np.asarray(descriptors, dtype=np.float64)
        positions = np.asarray(positions, dtype=np.float64)
        if descriptors.ndim != 2 or descriptors.shape[0] == 0:
            raise InvalidArgumentError(f"database needs a non-empty (M, G) descriptor array, got {descriptors.shape}")
        if positions.ndim != 2 or positions.shape[0] != descriptors.shape[0] or positions.shape[1] not in (2, 3):
            raise InvalidArgumentError(f"positions must be ({descriptors.shape[0]}, 2|3), got {positions.shape}")
        norms = np.linalg.norm(descriptors, axis=1)
        zero = norms == 0
        if np.any(np.abs(norms[~zero] - 1.0) > _NORM_TOLERANCE):
            raise InvalidArgumentError("database descriptors must have unit norm")
        if zero.any():
            log.logger.warning(f"{int(zero.sum())} degenerate (zero) descriptors in the database")
        self.descriptors = descriptors
        self.positions = positions
        self.ids = [str(i) for i in range(descriptors.shape[0])] if ids is None else [str(i) for i in ids]
        if len(self.ids) != descriptors.shape[0]:
            raise InvalidArgumentError("one identifier per descriptor is required")
        for arr in (self.descriptors, self.positions):
            arr.flags.writeable = False

    def __len__(self):
        return self.descriptors.shape[0]

    @property
    def dim(self) -> int:
        return self.descriptors.shape[1]

    def distances(self, query: np.ndarray) -> np.ndarray:
        query = np.asarray(query, dtype=np.float64).reshape(-1)
        if query.shape[0] != self.dim:
            raise InvalidArgumentError(f"query has dimension {query.shape[0]}, database {self.dim}")
        return np.linalg.norm(self.descriptors - query, axis=1)

    def save(self, path: str):
        with open(path, "wb") as f:
            np.savez(f, descriptors=self.descriptors, positions=self.positions, ids=np.asarray(self.ids))

    @classmethod
    def load(cls, path: str) -> "DescriptorDatabase":
        try:
            with np.load(path, allow_pickle=False) as data:
                return cls(data["descriptors"], data["positions"], data["ids"].tolist())
        except (ValueError, KeyError) as e:
            raise ParseError(f"not a descriptor database: {e}", offset=0, path=str(path))


def query_topk(db: DescriptorDatabase, query: np.ndarray, k: int) -> RetrievalResult:
    """The k nearest entries by L2 distance, ascending, ties by insertion order."""
    if len(db) == 0:
        raise InvalidArgumentError("empty database")
    if not 1 <= k <= len(db):
        raise InvalidArgumentError(f"k must be in [1, {len(db)}], got {k}")
    dist = db.distances(query)
    order = np.argsort(dist, kind="stable")[:k]
    return RetrievalResult(order, [db.ids[i] for i in order], dist[order])


def _first_positive_ranks(db: DescriptorDatabase, queries, query_positions, positive_radius: float) -> np.ndarray:
    """0-based rank of the first database entry within ``positive_radius`` of each
    query's true position; ``len(db)`` when there is none."""
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    query_positions = np.atleast_2d(np.asarray(query_positions, dtype=np.float64))
    if queries.shape[0] != query_positions.shape[0]:
        raise InvalidArgumentError("one position per query is required")
    dims = min(query_positions.shape[1], db.positions.shape[1])
    ranks = np.full(queries.shape[0], len(db), dtype=np.int64)
    for q, (descriptor, position) in enumerate(zip(queries, query_positions)):
        order = np.argsort(db.distances(descriptor), kind="stable")
        near = np.linalg.norm(db.positions[order, :dims] - position[:dims], axis=1) <= positive_radius
        hits = np.flatnonzero(near)
        if hits.size:
            ranks[q] = hits[0]
    return ranks


def recall_at_n(queries, query_positions, db: DescriptorDatabase, n: int = 1, positive_radius: float = DEFAULT_POSITIVE_RADIUS) -> float:
    """Percentage of queries with a true positive among their top-n results."""
    if n < 1:
        raise InvalidArgumentError(f"n must be >= 1, got {n}")
    ranks = _first_positive_ranks(db, queries, query_positions, positive_radius)
    return float(100.0 * np.mean(ranks < n))


def one_percent_n(db: DescriptorDatabase) -> int:
    return max(1, int(round(len(db) / 100.0)))


def recall_at_one_percent(queries, query_positions, db: DescriptorDatabase, positive_radius: float = DEFAULT_POSITIVE_RADIUS) -> float:
    return recall_at_n(queries, query_positions, db, one_percent_n(db), positive_radius)


def recall_curve(queries, query_positions, db: DescriptorDatabase, max_n: int = DEFAULT_TOP_N, positive_radius: float = DEFAULT_POSITIVE_RADIUS) -> np.ndarray:
    """Recall@n in percent for n = 1..max_n."""
    if not 1 <= max_n <= len(db):
        raise InvalidArgumentError(f"max_n must be in [1, {len(db)}], got {max_n}")
    ranks = _first_positive_ranks(db, queries, query_positions, positive_radius)
    return np.array([100.0 * np.mean(ranks < n) for n in range(1, max_n + 1)])
