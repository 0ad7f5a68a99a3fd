"""Two-resolution local feature encoder.

Each resolution runs conv1x1 → ReLU → FlexConv → ReLU → FlexConv → SE.
The coarse branch runs on a seeded, permutation-independent subsample and
is copied back to every point from its nearest subsample point; the two
branches are added into Ψ and Ψ is row-normalized into the descriptors X.
"""

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidArgumentError
from ..geometry import NeighborIndex, PointCloud, canonical_subsample, dilated_neighborhoods
from .layers import (
    conv1x1_backward,
    conv1x1_forward,
    flexconv_backward,
    flexconv_forward,
    l2_normalize_backward,
    l2_normalize_forward,
    relu_backward,
    relu_forward,
    se_backward,
    se_forward,
)
from .params import ModelParams

CENTERING_TOLERANCE = 1e-6


@dataclass
class BranchGeometry:
    points: np.ndarray
    neighborhoods: list[np.ndarray]


@dataclass
class EncoderGeometry:
    """Neighborhoods and the coarse-to-fine assignment of one cloud; depends
    on the point coordinates and the architecture only."""

    fine: BranchGeometry
    coarse: BranchGeometry
    coarse_indices: np.ndarray
    assignment: np.ndarray


@dataclass
class EncoderPass:
    psi: np.ndarray
    x: np.ndarray
    geometry: EncoderGeometry
    caches: dict = field(default_factory=dict)


def _branch_geometry(points: np.ndarray, model: ModelParams) -> BranchGeometry:
    index = NeighborIndex(points)
    arch = model.arch
    return BranchGeometry(
        points=points,
        neighborhoods=[dilated_neighborhoods(index, k, d) for k, d in zip(arch.flex_k, arch.flex_dilation)],
    )


def encoder_geometry(points: np.ndarray, model: ModelParams) -> EncoderGeometry:
    n = points.shape[0]
    n_coarse = max(1, n // model.arch.coarse_ratio)
    coarse_indices = canonical_subsample(points, n_coarse, model.arch.subsample_seed)
    coarse_points = points[coarse_indices]
    assignment, _ = NeighborIndex(coarse_points).nearest(points)
    return EncoderGeometry(
        fine=_branch_geometry(points, model),
        coarse=_branch_geometry(coarse_points, model),
        coarse_indices=coarse_indices,
        assignment=assignment,
    )


def _branch_forward(geo: BranchGeometry, model: ModelParams, branch: str):
    prefix = f"encoder.{branch}"
    arch = model.arch
    x = geo.points.astype(model.dtype)
    h, conv_cache = conv1x1_forward(x, model[f"{prefix}.conv.weight"], model[f"{prefix}.conv.bias"])
    h, conv_mask = relu_forward(h)
    flex_caches = []
    for i in range(2):
        flex = model.flex(f"{prefix}.flex{i + 1}", arch.flex_k[i], arch.flex_dilation[i])
        h, flex_cache = flexconv_forward(geo.points, h, flex, geo.neighborhoods[i])
        mask = None
        if i == 0:
            h, mask = relu_forward(h)
        flex_caches.append((flex_cache, mask))
    se_cache = None
    se = model.se(f"{prefix}.se")
    if se is not None:
        h, se_cache = se_forward(h, se)
    return h, (conv_cache, conv_mask, flex_caches, se_cache)


def _branch_backward(d_out: np.ndarray, cache, branch: str) -> dict[str, np.ndarray]:
    prefix = f"encoder.{branch}"
    conv_cache, conv_mask, flex_caches, se_cache = cache
    grads = {}
    d = d_out
    if se_cache is not None:
        d, g = se_backward(d, se_cache)
        grads.update({f"{prefix}.se.{k}": v for k, v in g.items()})
    for i in reversed(range(2)):
        flex_cache, mask = flex_caches[i]
        if mask is not None:
            d = relu_backward(d, mask)
        d, g = flexconv_backward(d, flex_cache)
        grads.update({f"{prefix}.flex{i + 1}.{k}": v for k, v in g.items()})
    d = relu_backward(d, conv_mask)
    _, g = conv1x1_backward(d, conv_cache)
    grads.update({f"{prefix}.conv.{k}": v for k, v in g.items()})
    return grads


def _points_of(cloud) -> np.ndarray:
    return cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)


def encoder_run(cloud, model: ModelParams, geometry: EncoderGeometry | None = None) -> EncoderPass:
    points = _points_of(cloud)
    if np.abs(points.mean(axis=0)).max() > CENTERING_TOLERANCE:
        raise InvalidArgumentError("encoder input must be centered on its centroid")
    geometry = geometry or encoder_geometry(points, model)
    fine, fine_cache = _branch_forward(geometry.fine, model, "fine")
    coarse, coarse_cache = _branch_forward(geometry.coarse, model, "coarse")
    psi = fine + coarse[geometry.assignment]
    x, norm_cache = l2_normalize_forward(psi, axis=1)
    return EncoderPass(
        psi=psi,
        x=x,
        geometry=geometry,
        caches={"fine": fine_cache, "coarse": coarse_cache, "norm": norm_cache, "n_coarse": coarse.shape},
    )


def encoder_forward(cloud, model: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """(Ψ, X) for a centered cloud: fused features and unit-norm descriptors."""
    record = encoder_run(cloud, model)
    return record.psi, record.x


def encoder_backward(record: EncoderPass, d_psi: np.ndarray | None = None, d_x: np.ndarray | None = None):
    """Parameter gradients of the encoder given upstream gradients on Ψ and/or X."""
    total = np.zeros_like(record.psi) if d_psi is None else np.array(d_psi, dtype=record.psi.dtype)
    if d_x is not None:
        total = total + l2_normalize_backward(d_x, record.caches["norm"])
    d_coarse = np.zeros(record.caches["n_coarse"], dtype=total.dtype)
    np.add.at(d_coarse, record.geometry.assignment, total)
    grads = _branch_backward(total, record.caches["fine"], "fine")
    grads.update(_branch_backward(d_coarse, record.caches["coarse"], "coarse"))
    return grads
