"""Global descriptor aggregation: attention-weighted NetVLAD with FC
compression, and the max/avg pooling baselines."""

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgumentError
from ..utils.log import log
from .layers import (
    conv1x1_backward,
    conv1x1_forward,
    l2_normalize_backward,
    l2_normalize_forward,
    softmax_backward,
    softmax_forward,
)
from .params import ModelParams

DEFAULT_CLUSTERS = 64
DEFAULT_GLOBAL_DIM = 256

# Cluster residual blocks at or below this norm count as empty.
VLAD_EPS = 1e-10


@dataclass
class AggregationPass:
    descriptor: np.ndarray
    degenerate: bool
    cache: dict


def _compress(flat: np.ndarray, model: ModelParams):
    compressed, fc_cache = conv1x1_forward(flat[None, :], model["assembler.fc.weight"], model["assembler.fc.bias"])
    descriptor, out_cache = l2_normalize_forward(compressed[0], axis=0)
    return descriptor, {"fc": fc_cache, "out": out_cache}


def _compress_backward(d_descriptor: np.ndarray, cache: dict):
    d_comp = l2_normalize_backward(d_descriptor, cache["out"])
    d_flat, g = conv1x1_backward(d_comp[None, :], cache["fc"])
    return d_flat[0], {f"assembler.fc.{k}": v for k, v in g.items()}


def netvlad_run(features: np.ndarray, attention: np.ndarray, model: ModelParams) -> AggregationPass:
    arch = model.arch
    x = features.astype(model.dtype, copy=False)
    centers = model["assembler.netvlad.centers"]
    if x.ndim != 2 or x.shape[1] != centers.shape[1]:
        raise InvalidArgumentError(f"netvlad: expected (N, {centers.shape[1]}) features, got {x.shape}")
    n = x.shape[0]
    if attention.shape != (n, 1):
        raise InvalidArgumentError(f"netvlad: attention must be ({n}, 1), got {attention.shape}")
    if arch.aggregate_points is not None and n < arch.aggregate_points:
        raise InvalidArgumentError(f"netvlad: {n} points is fewer than the aggregation count {arch.aggregate_points}")

    w = attention[:, 0].astype(model.dtype, copy=False)
    logits = x @ model["assembler.netvlad.assign_weight"].T + model["assembler.netvlad.assign_bias"]
    assign, soft_cache = softmax_forward(logits, axis=1)
    weighted = assign * w[:, None]
    mass = weighted.sum(axis=0)
    vlad = weighted.T @ x - mass[:, None] * centers
    intra, intra_cache = l2_normalize_forward(vlad, axis=1, eps=VLAD_EPS)
    flat, flat_cache = l2_normalize_forward(intra.reshape(-1), axis=0)
    if not flat.any():
        log.logger.warning("NetVLAD residuals vanished; returning the zero descriptor.")
        return AggregationPass(np.zeros(arch.global_dim, dtype=model.dtype), True, {})
    descriptor, compress_cache = _compress(flat, model)
    cache = {
        "x": x,
        "w": w,
        "assign": assign,
        "soft": soft_cache,
        "weighted": weighted,
        "mass": mass,
        "centers": centers,
        "assign_weight": model["assembler.netvlad.assign_weight"],
        "intra": intra_cache,
        "flat": flat_cache,
        "compress": compress_cache,
    }
    return AggregationPass(descriptor, False, cache)


def netvlad_forward(features: np.ndarray, attention: np.ndarray, model: ModelParams) -> np.ndarray:
    """Attention-weighted VLAD, intra- and L2-normalized, compressed by FC, L2-normalized."""
    return netvlad_run(features, attention, model).descriptor


def netvlad_backward(d_descriptor: np.ndarray, record: AggregationPass):
    """Returns (d_features, d_attention, grads)."""
    if record.degenerate:
        raise InvalidArgumentError("no gradient through a degenerate (zero) descriptor")
    c = record.cache
    d_flat, grads = _compress_backward(d_descriptor, c["compress"])
    d_intra = l2_normalize_backward(d_flat, c["flat"]).reshape(c["centers"].shape)
    d_vlad = l2_normalize_backward(d_intra, c["intra"])

    x, w, assign, weighted, mass, centers = c["x"], c["w"], c["assign"], c["weighted"], c["mass"], c["centers"]
    d_mass = -np.sum(d_vlad * centers, axis=1)
    d_weighted = x @ d_vlad.T + d_mass[None, :]
    d_x = weighted @ d_vlad
    d_assign = d_weighted * w[:, None]
    d_w = np.sum(d_weighted * assign, axis=1)
    d_logits = softmax_backward(d_assign, c["soft"])
    d_x = d_x + d_logits @ c["assign_weight"]
    grads["assembler.netvlad.centers"] = -mass[:, None] * d_vlad
    grads["assembler.netvlad.assign_weight"] = d_logits.T @ x
    grads["assembler.netvlad.assign_bias"] = d_logits.sum(axis=0)
    return d_x, d_w[:, None], grads


# -- pooling baselines --------------------------------------------------------------------

def pool_features(features: np.ndarray, mode: str) -> tuple[np.ndarray, np.ndarray | None]:
    """Column-wise max or mean; for max also returns the winning row per column."""
    if features.ndim != 2 or features.shape[0] < 1:
        raise InvalidArgumentError(f"pooling needs a non-empty (N, C) map, got {features.shape}")
    if mode == "max":
        rows = np.argmax(features, axis=0)
        return features[rows, np.arange(features.shape[1])], rows
    if mode == "avg":
        return features.mean(axis=0), None
    raise InvalidArgumentError(f"unknown pooling mode '{mode}'")


def pool_run(features: np.ndarray, mode: str, model: ModelParams) -> AggregationPass:
    x = features.astype(model.dtype, copy=False)
    pooled, rows = pool_features(x, mode)
    descriptor, compress_cache = _compress(pooled, model)
    return AggregationPass(descriptor, False, {"mode": mode, "rows": rows, "shape": x.shape, "compress": compress_cache})


def pool_aggregate(features: np.ndarray, mode: str, model: ModelParams) -> np.ndarray:
    """Max/avg pool over points, FC to the global dimension, L2-normalize."""
    return pool_run(features, mode, model).descriptor


def pool_backward(d_descriptor: np.ndarray, record: AggregationPass):
    c = record.cache
    d_pooled, grads = _compress_backward(d_descriptor, c["compress"])
    n, channels = c["shape"]
    d_x = np.zeros(c["shape"], dtype=d_pooled.dtype)
    if c["mode"] == "max":
        d_x[c["rows"], np.arange(channels)] = d_pooled
    else:
        d_x[:] = d_pooled / n
    return d_x, grads
