"""Single-pass inference and the matching backward pass over the whole
network: encoder → (detector, assembler) sharing one Ψ/X computation."""

from dataclasses import dataclass

import numpy as np

from ..errors import NumericError
from ..geometry import NeighborIndex, PointCloud, canonical_subsample, dilated_neighborhoods
from .aggregation import AggregationPass, netvlad_backward, netvlad_run, pool_backward, pool_run
from .encoder import EncoderGeometry, EncoderPass, encoder_backward, encoder_run
from .heads import attention_backward, attention_run, detector_backward, detector_run
from .layers import flexconv_backward, flexconv_forward, relu_backward, relu_forward
from .params import ModelParams


class Gradients(dict):
    """Parameter name → gradient array, accumulated across passes."""

    def __init__(self, model: ModelParams, names=None):
        super().__init__()
        for name in names if names is not None else model.names():
            self[name] = np.zeros_like(model[name])

    def accumulate(self, grads: dict[str, np.ndarray], scale: float = 1.0):
        for name, g in grads.items():
            if name in self:
                self[name] += scale * g

    def check_finite(self):
        for name, g in self.items():
            if not np.all(np.isfinite(g)):
                raise NumericError("non-finite gradient", parameter=name)
        return self


@dataclass
class LocalPass:
    encoder: EncoderPass
    saliency: np.ndarray
    detector_cache: tuple

    @property
    def psi(self) -> np.ndarray:
        return self.encoder.psi

    @property
    def x(self) -> np.ndarray:
        return self.encoder.x


@dataclass
class GlobalPass:
    descriptor: np.ndarray
    degenerate: bool
    aggregation: AggregationPass
    projection_caches: list | None = None
    attention: np.ndarray | None = None
    attention_cache: tuple | None = None
    kept: np.ndarray | None = None
    n_points: int = 0


@dataclass
class ForwardPass:
    local: LocalPass
    global_: GlobalPass | None = None


def _points_of(cloud) -> np.ndarray:
    return cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)


def local_run(cloud, model: ModelParams, geometry: EncoderGeometry | None = None) -> LocalPass:
    record = encoder_run(cloud, model, geometry)
    saliency, det_cache = detector_run(record.psi, model)
    return LocalPass(record, saliency, det_cache)


def projection_neighborhoods(points: np.ndarray, model: ModelParams) -> np.ndarray:
    return dilated_neighborhoods(NeighborIndex(points), model.arch.projection_k, 1)


def global_run(points: np.ndarray, x_local: np.ndarray, model: ModelParams, neighborhoods: np.ndarray | None = None) -> GlobalPass:
    """Global descriptor from local descriptors X of a cloud with coordinates ``points``."""
    arch = model.arch
    n = points.shape[0]
    if arch.aggregator != "netvlad":
        record = pool_run(x_local, arch.aggregator, model)
        return GlobalPass(record.descriptor, record.degenerate, record, n_points=n)

    if neighborhoods is None:
        neighborhoods = projection_neighborhoods(points, model)
    h = x_local.astype(model.dtype, copy=False)
    proj_caches = []
    for i in range(2):
        flex = model.flex(f"assembler.proj{i + 1}", arch.projection_k, 1)
        h, cache = flexconv_forward(points, h, flex, neighborhoods)
        mask = None
        if i == 0:
            h, mask = relu_forward(h)
        proj_caches.append((cache, mask))

    kept = None
    if arch.aggregate_points is not None and n > arch.aggregate_points:
        kept = canonical_subsample(points, arch.aggregate_points, arch.subsample_seed)
        h = h[kept]
    weights, att_cache = attention_run(h, model)
    record = netvlad_run(h, weights, model)
    return GlobalPass(
        descriptor=record.descriptor,
        degenerate=record.degenerate,
        aggregation=record,
        projection_caches=proj_caches,
        attention=weights,
        attention_cache=att_cache,
        kept=kept,
        n_points=n,
    )


def global_backward(record: GlobalPass, d_descriptor: np.ndarray) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Assembler parameter gradients and the gradient w.r.t. the local descriptors."""
    if record.projection_caches is None:
        d_x, grads = pool_backward(d_descriptor, record.aggregation)
        return grads, d_x
    d_h, d_w, grads = netvlad_backward(d_descriptor, record.aggregation)
    d_h_att, att_grads = attention_backward(d_w, record.attention_cache)
    grads.update(att_grads)
    d_h = d_h + d_h_att
    if record.kept is not None:
        full = np.zeros((record.n_points, d_h.shape[1]), dtype=d_h.dtype)
        full[record.kept] = d_h
        d_h = full
    for i in reversed(range(2)):
        cache, mask = record.projection_caches[i]
        if mask is not None:
            d_h = relu_backward(d_h, mask)
        d_h, g = flexconv_backward(d_h, cache)
        grads.update({f"assembler.proj{i + 1}.{k}": v for k, v in g.items()})
    return grads, d_h


def extract(cloud, model: ModelParams, with_global: bool = True) -> ForwardPass:
    """One forward execution producing X, S and (optionally) the global descriptor."""
    local = local_run(cloud, model)
    global_ = global_run(_points_of(cloud), local.x, model) if with_global else None
    return ForwardPass(local, global_)


def backward(
    forward: ForwardPass,
    model: ModelParams,
    d_x: np.ndarray | None = None,
    d_psi: np.ndarray | None = None,
    d_saliency: np.ndarray | None = None,
    d_descriptor: np.ndarray | None = None,
    freeze_encoder: bool = False,
    grads: Gradients | None = None,
) -> Gradients:
    """Accumulates parameter gradients for the given upstream gradients."""
    grads = grads if grads is not None else Gradients(model)
    d_psi_total = None if d_psi is None else np.array(d_psi, dtype=model.dtype)
    d_x_total = None if d_x is None else np.array(d_x, dtype=model.dtype)

    if d_descriptor is not None and forward.global_ is not None:
        assembler_grads, d_x_global = global_backward(forward.global_, np.asarray(d_descriptor, dtype=model.dtype))
        grads.accumulate(assembler_grads)
        d_x_total = d_x_global if d_x_total is None else d_x_total + d_x_global

    if d_saliency is not None:
        d_psi_det, det_grads = detector_backward(np.asarray(d_saliency, dtype=model.dtype), forward.local.detector_cache)
        grads.accumulate(det_grads)
        d_psi_total = d_psi_det if d_psi_total is None else d_psi_total + d_psi_det

    if not freeze_encoder and (d_psi_total is not None or d_x_total is not None):
        grads.accumulate(encoder_backward(forward.local.encoder, d_psi_total, d_x_total))
    return grads.check_finite()
