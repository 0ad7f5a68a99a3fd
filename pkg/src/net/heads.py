"""Per-point heads: the keypoint detector and the attention predictor."""

import numpy as np

from .layers import mlp_backward, mlp_forward, sigmoid_backward, sigmoid_forward, softmax_backward, softmax_forward
from .params import ModelParams

DETECTOR_LAYERS = 4
ATTENTION_LAYERS = 3


def _named(prefix: str, grads: list[dict]) -> dict[str, np.ndarray]:
    return {f"{prefix}.conv{i + 1}.{k}": v for i, g in enumerate(grads) for k, v in g.items()}


def detector_run(psi: np.ndarray, model: ModelParams):
    """Saliency S (N, 1): four 1x1 layers with ReLU between, sigmoid at the end."""
    logits, caches = mlp_forward(psi.astype(model.dtype, copy=False), model.mlp("detector", DETECTOR_LAYERS))
    saliency, sig_cache = sigmoid_forward(logits)
    return saliency, (caches, sig_cache)


def detector_forward(psi: np.ndarray, model: ModelParams) -> np.ndarray:
    return detector_run(psi, model)[0]


def detector_backward(d_saliency: np.ndarray, cache):
    caches, sig_cache = cache
    d_logits = sigmoid_backward(d_saliency, sig_cache)
    d_psi, grads = mlp_backward(d_logits, caches)
    return d_psi, _named("detector", grads)


def attention_run(features: np.ndarray, model: ModelParams):
    """Attention weights (N, 1): three 1x1 layers, softmax over points."""
    prefix = "assembler.attention"
    logits, caches = mlp_forward(features.astype(model.dtype, copy=False), model.mlp(prefix, ATTENTION_LAYERS))
    weights, soft_cache = softmax_forward(logits, axis=0)
    return weights, (caches, soft_cache)


def attention_forward(features: np.ndarray, model: ModelParams) -> np.ndarray:
    return attention_run(features, model)[0]


def attention_backward(d_weights: np.ndarray, cache):
    caches, soft_cache = cache
    d_logits = softmax_backward(d_weights, soft_cache)
    d_features, grads = mlp_backward(d_logits, caches)
    return d_features, _named("assembler.attention", grads)
