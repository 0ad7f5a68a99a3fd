"""Point clouds, rigid transforms and the cloud-level operations the
pipelines share: voxel filtering, centering, sampling, synthetic pairs."""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from ..errors import InvalidArgumentError

DEFAULT_VOXEL_GRID = 0.2
DEFAULT_SIGMA_NOISE = 0.02
DEFAULT_NETWORK_POINTS = 8192

_ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class PointCloud:
    """Ordered (N, 3) float64 coordinates in meters, z upright."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise InvalidArgumentError(f"point cloud must have shape (N, 3), got {pts.shape}")
        if pts.shape[0] < 1:
            raise InvalidArgumentError("point cloud must contain at least one point")
        if not np.all(np.isfinite(pts)):
            raise InvalidArgumentError("point cloud contains non-finite coordinates")
        pts = np.ascontiguousarray(pts)
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]

    @property
    def count(self) -> int:
        return self.points.shape[0]

    def subset(self, indices) -> "PointCloud":
        return PointCloud(self.points[np.asarray(indices, dtype=np.int64)])


@dataclass(frozen=True)
class RigidTransform:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        trans = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(rot)) or not np.all(np.isfinite(trans)):
            raise InvalidArgumentError("rigid transform contains non-finite entries")
        if np.abs(rot @ rot.T - np.eye(3)).max() > _ORTHO_TOL or abs(np.linalg.det(rot) - 1.0) > _ORTHO_TOL:
            raise InvalidArgumentError("rotation must be orthonormal with determinant +1")
        rot.flags.writeable = False
        trans.flags.writeable = False
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_yaw(cls, degrees: float, translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        theta = np.deg2rad(degrees)
        c, s = np.cos(theta), np.sin(theta)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return cls(rot, np.asarray(translation, dtype=np.float64))

    @classmethod
    def random(cls, rng: np.random.Generator, translation_scale: float = 10.0) -> "RigidTransform":
        rot = Rotation.random(random_state=rng).as_matrix()
        return cls(rot, rng.uniform(-translation_scale, translation_scale, 3))

    @classmethod
    def from_matrix(cls, matrix) -> "RigidTransform":
        m = np.asarray(matrix, dtype=np.float64)
        return cls(m[:3, :3], m[:3, 3])

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """``self ∘ other``: apply ``other`` first."""
        return RigidTransform(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    def apply_points(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation


def apply_transform(cloud: PointCloud, transform: RigidTransform) -> PointCloud:
    return PointCloud(transform.apply_points(cloud.points))


def voxel_downsample(cloud: PointCloud, grid: float = DEFAULT_VOXEL_GRID) -> PointCloud:
    """One centroid per occupied voxel, in lexicographic voxel-key order."""
    if not grid > 0:
        raise InvalidArgumentError(f"voxel grid must be positive, got {grid}")
    keys = np.floor(cloud.points / grid).astype(np.int64)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    sums = np.zeros((counts.shape[0], 3))
    np.add.at(sums, inverse, cloud.points)
    return PointCloud(sums / counts[:, None])


def center_cloud(cloud: PointCloud) -> tuple[PointCloud, np.ndarray]:
    centroid = cloud.points.mean(axis=0)
    return PointCloud(cloud.points - centroid), centroid


def random_sample(cloud: PointCloud, n: int, seed: int) -> tuple[PointCloud, np.ndarray]:
    """Uniform sample of ``n`` distinct points; returns the original indices too."""
    if not 1 <= n <= cloud.count:
        raise InvalidArgumentError(f"cannot sample {n} points from a cloud of {cloud.count}")
    rng = np.random.default_rng(seed)
    indices = rng.choice(cloud.count, size=n, replace=False)
    return cloud.subset(indices), indices


def synth_pair(
    cloud: PointCloud,
    max_yaw: float = 360.0,
    sigma_noise: float = DEFAULT_SIGMA_NOISE,
    seed: int = 0,
) -> tuple[PointCloud, RigidTransform]:
    """Rotate about the upright axis by a random yaw in [-max_yaw, max_yaw]
    and add i.i.d. Gaussian noise. No translation is applied; the returned
    transform maps the input cloud onto the noiseless output."""
    if sigma_noise < 0:
        raise InvalidArgumentError(f"sigma_noise must be non-negative, got {sigma_noise}")
    rng = np.random.default_rng(seed)
    yaw = rng.uniform(-max_yaw, max_yaw) if max_yaw > 0 else 0.0
    transform = RigidTransform.from_yaw(yaw)
    points = transform.apply_points(cloud.points)
    if sigma_noise > 0:
        points = points + rng.normal(0.0, sigma_noise, size=points.shape)
    return PointCloud(points), transform


def canonical_order(points: np.ndarray) -> np.ndarray:
    """Index order by (x, y, z); independent of the input ordering."""
    return np.lexsort((points[:, 2], points[:, 1], points[:, 0]))


def canonical_subsample(points: np.ndarray, n: int, seed: int) -> np.ndarray:
    """Seeded subset of ``n`` point indices that depends on the point set
    only, so permuting the input permutes the selection accordingly."""
    if not 1 <= n <= points.shape[0]:
        raise InvalidArgumentError(f"cannot subsample {n} of {points.shape[0]} points")
    order = canonical_order(points)
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(points.shape[0], size=n, replace=False))
    return order[chosen]
