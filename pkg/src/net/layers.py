"""Layer primitives with analytic backward passes.

Every ``*_forward`` returns ``(output, cache)``; the matching ``*_backward``
takes the upstream gradient and that cache and returns the input gradient
plus a dict of parameter gradients keyed by the local parameter name.
Feature maps are (N, C) arrays with one row per point.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgumentError
from ..geometry.neighbors import NeighborIndex, dilated_neighborhoods


def _check_rows(x: np.ndarray, channels: int, what: str):
    if x.ndim != 2 or x.shape[1] != channels:
        raise InvalidArgumentError(f"{what}: expected (N, {channels}) input, got {x.shape}")


# -- 1x1 convolution --------------------------------------------------------------------

def conv1x1_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray):
    """out_i = W·x_i + b for every row; W is (C_out, C_in)."""
    _check_rows(x, weight.shape[1], "conv1x1")
    if bias.shape != (weight.shape[0],):
        raise InvalidArgumentError(f"conv1x1: bias shape {bias.shape} does not match weight {weight.shape}")
    return x @ weight.T + bias, (x, weight)


def conv1x1_backward(dout: np.ndarray, cache):
    x, weight = cache
    return dout @ weight, {"weight": dout.T @ x, "bias": dout.sum(axis=0)}


# -- pointwise nonlinearities -------------------------------------------------------------

def relu_forward(x: np.ndarray):
    mask = x > 0
    return x * mask, mask


def relu_backward(dout: np.ndarray, mask):
    return dout * mask


def sigmoid(x: np.ndarray) -> np.ndarray:
    # Split by sign so neither branch overflows.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_forward(x: np.ndarray):
    out = sigmoid(x)
    return out, out


def sigmoid_backward(dout: np.ndarray, out):
    return dout * out * (1.0 - out)


def softmax_forward(x: np.ndarray, axis: int = 0):
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)
    return out, (out, axis)


def softmax_backward(dout: np.ndarray, cache):
    out, axis = cache
    return out * (dout - np.sum(dout * out, axis=axis, keepdims=True))


# -- L2 normalization ---------------------------------------------------------------------

def l2_normalize_forward(x: np.ndarray, axis: int = -1, eps: float = 0.0):
    """Unit-norm slices along ``axis``; slices with norm <= eps map to zero."""
    norm = np.sqrt(np.sum(x * x, axis=axis, keepdims=True))
    nonzero = norm > eps
    safe = np.where(nonzero, norm, 1.0)
    out = np.where(nonzero, x / safe, 0.0).astype(x.dtype, copy=False)
    return out, (out, safe, nonzero, axis)


def l2_normalize_backward(dout: np.ndarray, cache):
    out, safe, nonzero, axis = cache
    proj = np.sum(out * dout, axis=axis, keepdims=True)
    return np.where(nonzero, (dout - out * proj) / safe, 0.0)


# -- FlexConv -----------------------------------------------------------------------------

@dataclass
class FlexConvParams:
    """theta (C_out, C_in, 3) and theta_b (C_out, C_in); in depthwise mode
    theta is (C, 3) and theta_b is (C,)."""

    theta: np.ndarray
    theta_b: np.ndarray
    k: int = 9
    dilation: int = 1
    depthwise: bool = False

    def __post_init__(self):
        if self.k < 1 or self.dilation < 1:
            raise InvalidArgumentError(f"FlexConv needs k >= 1 and dilation >= 1 (k={self.k}, d={self.dilation})")

    @property
    def in_channels(self) -> int:
        return self.theta.shape[0] if self.depthwise else self.theta.shape[1]

    @property
    def out_channels(self) -> int:
        return self.theta.shape[0]


def flexconv_forward(points: np.ndarray, features: np.ndarray, params: FlexConvParams, neighbors):
    """out[l] = Σ_i (⟨θ, p_l − p_{l_i}⟩ + θ_b) · f[l_i] over the precomputed
    neighborhood rows ``neighbors`` (N, k).
    A NeighborIndex may be passed instead; its dilated neighborhoods are used."""
    if isinstance(neighbors, NeighborIndex):
        neighbors = dilated_neighborhoods(neighbors, params.k, params.dilation)
    n = points.shape[0]
    if features.shape[0] != n or neighbors.shape[0] != n:
        raise InvalidArgumentError(
            f"flexconv: {n} points, {features.shape[0]} feature rows, {neighbors.shape[0]} neighborhoods"
        )
    _check_rows(features, params.in_channels, "flexconv")
    rel = (points[:, None, :] - points[neighbors]).astype(features.dtype)   # (N, k, 3)
    gathered = features[neighbors]                                           # (N, k, C_in)
    summed = gathered.sum(axis=1)                                            # (N, C_in)
    if params.depthwise:
        moments = np.einsum("nki,nkc->nci", rel, gathered)                   # (N, C, 3)
        out = np.einsum("nci,ci->nc", moments, params.theta) + summed * params.theta_b
    else:
        moments = np.matmul(rel.transpose(0, 2, 1), gathered)                # (N, 3, C_in)
        out = moments.reshape(n, -1) @ _flat_theta(params.theta).T + summed @ params.theta_b.T
    return out, (rel, moments, summed, neighbors, features.shape, params)


def _flat_theta(theta: np.ndarray) -> np.ndarray:
    """(C_out, C_in, 3) -> (C_out, 3·C_in) laid out to match flattened moments."""
    return theta.transpose(0, 2, 1).reshape(theta.shape[0], -1)


def flexconv_backward(dout: np.ndarray, cache):
    rel, moments, summed, neighbors, feat_shape, params = cache
    if params.depthwise:
        d_theta = np.einsum("nc,nci->ci", dout, moments)
        d_theta_b = np.sum(dout * summed, axis=0)
        d_moments = dout[:, :, None] * params.theta[None]
        d_gathered = np.einsum("nki,nci->nkc", rel, d_moments) + (dout * params.theta_b)[:, None, :]
    else:
        n, _, c_in = moments.shape
        d_theta = (dout.T @ moments.reshape(n, -1)).reshape(-1, 3, c_in).transpose(0, 2, 1)
        d_theta_b = dout.T @ summed
        d_moments = (dout @ _flat_theta(params.theta)).reshape(n, 3, c_in)
        d_gathered = np.matmul(rel, d_moments) + (dout @ params.theta_b)[:, None, :]
    d_features = np.zeros(feat_shape, dtype=dout.dtype)
    np.add.at(d_features, neighbors, d_gathered)
    return d_features, {"theta": d_theta, "theta_b": d_theta_b}


# -- Squeeze-and-Excitation -------------------------------------------------------------

@dataclass
class SEParams:
    reduce_weight: np.ndarray   # (C/r, C)
    reduce_bias: np.ndarray     # (C/r,)
    expand_weight: np.ndarray   # (C, C/r)
    expand_bias: np.ndarray     # (C,)

    @property
    def channels(self) -> int:
        return self.reduce_weight.shape[1]


def se_gate(z: np.ndarray, params: SEParams):
    hidden_pre = params.reduce_weight @ z + params.reduce_bias
    hidden = np.maximum(hidden_pre, 0)
    gate = sigmoid(params.expand_weight @ hidden + params.expand_bias)
    return gate, hidden


def se_forward(u: np.ndarray, params: SEParams):
    """Squeeze by mean over points, excite through FC-ReLU-FC-sigmoid, rescale channels."""
    _check_rows(u, params.channels, "se")
    z = u.mean(axis=0)
    gate, hidden = se_gate(z, params)
    return u * gate, (u, z, hidden, gate, params)


def se_backward(dout: np.ndarray, cache):
    u, z, hidden, gate, params = cache
    d_gate = np.sum(dout * u, axis=0)
    d_expand_pre = d_gate * gate * (1.0 - gate)
    d_hidden = params.expand_weight.T @ d_expand_pre
    d_reduce_pre = d_hidden * (hidden > 0)
    d_z = params.reduce_weight.T @ d_reduce_pre
    d_u = dout * gate + d_z[None, :] / u.shape[0]
    return d_u, {
        "reduce_weight": np.outer(d_reduce_pre, z),
        "reduce_bias": d_reduce_pre,
        "expand_weight": np.outer(d_expand_pre, hidden),
        "expand_bias": d_expand_pre,
    }


# -- multi-layer 1x1 stacks ---------------------------------------------------------------

def mlp_forward(x: np.ndarray, layers: list[tuple[np.ndarray, np.ndarray]]):
    """1x1 convolutions with ReLU between them; the last layer stays linear."""
    caches = []
    h = x
    for i, (weight, bias) in enumerate(layers):
        h, conv_cache = conv1x1_forward(h, weight, bias)
        mask = None
        if i < len(layers) - 1:
            h, mask = relu_forward(h)
        caches.append((conv_cache, mask))
    return h, caches


def mlp_backward(dout: np.ndarray, caches):
    grads = []
    d = dout
    for conv_cache, mask in reversed(caches):
        if mask is not None:
            d = relu_backward(d, mask)
        d, g = conv1x1_backward(d, conv_cache)
        grads.append(g)
    return d, list(reversed(grads))
