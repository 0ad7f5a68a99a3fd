"""Synthetic scenes with planted positions, and the on-disk dataset layout.

A dataset directory holds one ``<id>.dhpc`` per scene plus ``manifest.csv``
with the columns ``id,file,x,y`` (positions in meters).

Scenes are views of a few synthetic places. A place is a fixed layout of
walls, free-standing planar structures and clutter, without a ground plane.
Each view resamples the surfaces, keeps what lies within range of the view
location, turns by a small yaw and gets Gaussian noise. Its position label
is the place position plus the view offset (at most ``VIEW_OFFSET`` meters).
"""

import csv
import math
import os
from dataclasses import dataclass

import numpy as np

from ..errors import InsufficientDataError, InvalidArgumentError, ParseError
from ..geometry import PointCloud, RigidTransform
from ..utils.log import log
from .clouds import read_dhpc, write_dhpc

MANIFEST_NAME = "manifest.csv"
MANIFEST_COLUMNS = ["id", "file", "x", "y"]

PLACE_SPACING = 100.0
PLACE_JITTER = 10.0
PLACE_EXTENT = 15.0
VIEWS_PER_PLACE = 3
VIEW_OFFSET = 3.0
VIEW_RANGE = 13.0
VIEW_YAW = 15.0
VIEW_NOISE = 0.02
CLUTTER_FRACTION = 0.15


@dataclass
class Scene:
    id: str
    cloud: PointCloud
    position: np.ndarray

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).reshape(-1)
        if self.position.shape[0] not in (2, 3):
            raise InvalidArgumentError(f"scene position must be 2D or 3D, got {self.position.shape}")


@dataclass
class PlaceLayout:
    """Planar patches (corner, edge u, edge v) and clutter blob centers."""

    origins: np.ndarray
    edges_u: np.ndarray
    edges_v: np.ndarray
    blobs: np.ndarray

    @property
    def areas(self) -> np.ndarray:
        return np.linalg.norm(np.cross(self.edges_u, self.edges_v), axis=1)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        n_clutter = int(round(n * CLUTTER_FRACTION))
        n_surface = n - n_clutter
        areas = self.areas
        patch = rng.choice(len(areas), size=n_surface, p=areas / areas.sum())
        st = rng.uniform(0.0, 1.0, size=(n_surface, 2))
        surface = self.origins[patch] + st[:, :1] * self.edges_u[patch] + st[:, 1:] * self.edges_v[patch]
        blob = rng.integers(0, len(self.blobs), size=n_clutter)
        clutter = self.blobs[blob] + rng.normal(0.0, 0.4, size=(n_clutter, 3))
        return np.concatenate([surface, clutter])


def _heading(angles: np.ndarray) -> np.ndarray:
    return np.column_stack([np.cos(angles), np.sin(angles), np.zeros_like(angles)])


def place_layout(rng: np.random.Generator) -> PlaceLayout:
    n_walls = int(rng.integers(3, 6))
    wall_origins = np.column_stack([rng.uniform(-PLACE_EXTENT, PLACE_EXTENT, (n_walls, 2)), rng.uniform(-1.0, 0.0, n_walls)])
    wall_u = _heading(rng.uniform(0.0, np.pi, n_walls)) * rng.uniform(6.0, 20.0, (n_walls, 1))
    wall_v = np.column_stack([np.zeros((n_walls, 2)), rng.uniform(2.5, 7.0, n_walls)])

    n_planes = int(rng.integers(4, 9))
    plane_origins = np.column_stack([rng.uniform(-PLACE_EXTENT, PLACE_EXTENT, (n_planes, 2)), rng.uniform(0.0, 3.0, n_planes)])
    plane_u = _heading(rng.uniform(0.0, 2 * np.pi, n_planes)) * rng.uniform(1.0, 5.0, (n_planes, 1))
    plane_v = rng.normal(size=(n_planes, 3))
    plane_v -= plane_u * (np.sum(plane_v * plane_u, axis=1) / np.sum(plane_u * plane_u, axis=1))[:, None]
    plane_v *= (rng.uniform(1.0, 4.0, n_planes) / np.linalg.norm(plane_v, axis=1))[:, None]

    blobs = np.column_stack([rng.uniform(-PLACE_EXTENT, PLACE_EXTENT, (8, 2)), rng.uniform(0.0, 4.0, 8)])
    return PlaceLayout(
        origins=np.concatenate([wall_origins, plane_origins]),
        edges_u=np.concatenate([wall_u, plane_u]),
        edges_v=np.concatenate([wall_v, plane_v]),
        blobs=blobs,
    )


def place_positions(n_places: int, rng: np.random.Generator) -> np.ndarray:
    """Places on a jittered grid; neighbours stay more than 60 m apart."""
    cols = max(1, math.ceil(math.sqrt(n_places)))
    idx = np.arange(n_places)
    grid = np.column_stack([idx % cols, idx // cols]) * PLACE_SPACING
    return grid + rng.uniform(-PLACE_JITTER, PLACE_JITTER, size=(n_places, 2))


def render_view(layout: PlaceLayout, rng: np.random.Generator, n_points: int) -> tuple[np.ndarray, np.ndarray]:
    """Returns (points in the view frame, 2D offset of the view from the place)."""
    radius = VIEW_OFFSET * math.sqrt(rng.uniform())
    angle = rng.uniform(0.0, 2 * np.pi)
    offset = radius * np.array([math.cos(angle), math.sin(angle)])
    kept = []
    total = 0
    for _ in range(100):
        candidates = layout.sample(rng, 2 * n_points)
        candidates = candidates[np.linalg.norm(candidates[:, :2] - offset, axis=1) < VIEW_RANGE]
        kept.append(candidates)
        total += len(candidates)
        if total >= n_points:
            break
    else:
        raise InsufficientDataError(f"view range holds too few surface points for {n_points} samples")
    points = np.concatenate(kept)
    points = points[rng.choice(len(points), size=n_points, replace=False)]
    points[:, :2] -= offset
    yaw = RigidTransform.from_yaw(rng.uniform(-VIEW_YAW, VIEW_YAW))
    points = yaw.apply_points(points) + rng.normal(0.0, VIEW_NOISE, size=points.shape)
    return points, offset


def generate_scenes(count: int, points_per_cloud: int, seed: int = 0, views_per_place: int = VIEWS_PER_PLACE) -> list[Scene]:
    """Deterministic synthetic dataset: ``count`` views over ⌈count / views_per_place⌉ places."""
    if count < 1 or points_per_cloud < 1 or views_per_place < 1:
        raise InvalidArgumentError("count, points_per_cloud and views_per_place must be positive")
    n_places = math.ceil(count / views_per_place)
    positions = place_positions(n_places, np.random.default_rng((seed, 0)))
    layouts = [place_layout(np.random.default_rng((seed, 1, p))) for p in range(n_places)]
    scenes = []
    for s in range(count):
        place = s % n_places
        points, offset = render_view(layouts[place], np.random.default_rng((seed, 2, s)), points_per_cloud)
        scenes.append(Scene(id=f"scene_{s:04d}", cloud=PointCloud(points), position=positions[place] + offset))
    log.logger.info(f"Generated {count} scenes over {n_places} places ({points_per_cloud} points each)")
    return scenes


def write_dataset(scenes: list[Scene], out_dir: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    manifest = os.path.join(out_dir, MANIFEST_NAME)
    with open(manifest, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(MANIFEST_COLUMNS)
        for scene in scenes:
            filename = f"{scene.id}.dhpc"
            write_dhpc(os.path.join(out_dir, filename), scene.cloud)
            writer.writerow([scene.id, filename, repr(float(scene.position[0])), repr(float(scene.position[1]))])
    log.logger.info(f"Wrote {len(scenes)} scenes and {manifest}")
    return manifest


def load_dataset(directory: str) -> list[Scene]:
    manifest = os.path.join(directory, MANIFEST_NAME)
    if not os.path.exists(manifest):
        raise InsufficientDataError(f"dataset manifest not found: {manifest}")
    with open(manifest, "rb") as f:
        lines = f.read().splitlines(keepends=True)
    scenes = []
    offset = 0
    for number, raw in enumerate(lines):
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as e:
            raise ParseError("invalid UTF-8", offset=offset + e.start, path=manifest)
        row = next(csv.reader([text.rstrip("\r\n")]), [])
        if number == 0:
            if row != MANIFEST_COLUMNS:
                raise ParseError(f"manifest header must be {','.join(MANIFEST_COLUMNS)}", offset=0, path=manifest)
        elif row:
            if len(row) != len(MANIFEST_COLUMNS):
                raise ParseError(f"expected {len(MANIFEST_COLUMNS)} fields, got {len(row)}", offset=offset, path=manifest)
            try:
                position = [float(row[2]), float(row[3])]
            except ValueError:
                raise ParseError("malformed position", offset=offset, path=manifest)
            scenes.append(Scene(id=row[0], cloud=read_dhpc(os.path.join(directory, row[1])), position=position))
        offset += len(raw)
    if not scenes:
        raise InsufficientDataError(f"dataset {directory} lists no scenes")
    return scenes
