"""Central finite-difference checks of every analytic backward pass.

Each block builds a small 64-bit instance, reduces the block output to a
scalar (a random projection for layers, the loss itself for losses) and
compares the analytic gradient of every input and parameter array with
central differences. The error of one array is
‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖, ERROR_FLOOR); a block
reports the largest error over its arrays.
"""

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from ..config import ArchitectureConfig, LossConfig, TrainingConfig
from ..geometry import NeighborIndex, PointCloud, center_cloud, dilated_neighborhoods
from ..losses import (
    desc_loss,
    desc_loss_grad,
    det_loss,
    det_loss_grad,
    feature_distances,
    feature_distances_backward,
    lazy_quadruplet_loss,
    weak_triplet_loss,
)
from ..net.aggregation import netvlad_backward, netvlad_run, pool_backward, pool_run
from ..net.encoder import encoder_backward, encoder_geometry, encoder_run
from ..net.heads import attention_backward, attention_run, detector_backward, detector_run
from ..net.layers import (
    FlexConvParams,
    SEParams,
    conv1x1_backward,
    conv1x1_forward,
    flexconv_backward,
    flexconv_forward,
    l2_normalize_backward,
    l2_normalize_forward,
    sigmoid_backward,
    sigmoid_forward,
    se_backward,
    se_forward,
    softmax_backward,
    softmax_forward,
)
from ..net.model import Gradients
from ..net.params import ModelParams
from ..utils.log import log
from .batches import GlobalBatch, make_local_pair
from .global_phase import quadruplet_objective, scene_features
from .local_phase import local_pair_objective

DEFAULT_STEP = 1e-5
DEFAULT_TOLERANCE = 1e-4
# Keeps arrays whose true gradient is zero from turning round-off into a large ratio.
ERROR_FLOOR = 1e-5

TOY_ARCHITECTURE = dict(
    local_dim=8,
    conv_width=4,
    flex_widths=[6, 8],
    flex_k=[3, 3],
    flex_dilation=[1, 2],
    se_reduction=2,
    coarse_ratio=2,
    detector_widths=[6, 5, 4],
    attention_widths=[6, 4],
    projection_widths=[6, 10],
    projection_k=3,
    clusters=3,
    global_dim=5,
)


@dataclass
class BlockReport:
    block: str
    max_error: float
    worst: str
    passed: bool


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), ERROR_FLOOR)
    return float(np.linalg.norm(analytic - numeric) / scale)


def numeric_gradient(fn: Callable[[], float], array: np.ndarray, h: float = DEFAULT_STEP) -> np.ndarray:
    """∂fn/∂array by central differences; ``array`` is perturbed in place and restored."""
    grad = np.zeros(array.shape, dtype=np.float64)
    flat = array.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        up = fn()
        flat[i] = original - h
        down = fn()
        flat[i] = original
        grad.reshape(-1)[i] = (up - down) / (2.0 * h)
    return grad


def check_arrays(
    block: str,
    fn: Callable[[], float],
    arrays: dict[str, np.ndarray],
    analytic: dict[str, np.ndarray],
    h: float = DEFAULT_STEP,
    tolerance: float = DEFAULT_TOLERANCE,
) -> BlockReport:
    errors = {name: relative_error(analytic[name], numeric_gradient(fn, arr, h)) for name, arr in arrays.items()}
    worst = max(errors, key=errors.get)
    report = BlockReport(block, errors[worst], worst, errors[worst] < tolerance)
    log.logger.debug(f"gradcheck {block}: max relative error {report.max_error:.3e} ({worst})")
    return report


def _projection(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.normal(size=shape)


# -- layer blocks ---------------------------------------------------------------------

def _check_conv1x1(rng, h, tol):
    x, w, b = rng.normal(size=(5, 4)), rng.normal(size=(3, 4)), rng.normal(size=3)
    r = _projection(rng, (5, 3))
    out, cache = conv1x1_forward(x, w, b)
    d_x, g = conv1x1_backward(r, cache)
    return check_arrays(
        "conv1x1", lambda: float(np.sum(conv1x1_forward(x, w, b)[0] * r)),
        {"input": x, "weight": w, "bias": b}, {"input": d_x, **g}, h, tol,
    )


def _flex_instance(rng, depthwise: bool):
    points = rng.normal(size=(9, 3))
    c_in, c_out = (3, 3) if depthwise else (3, 4)
    if depthwise:
        params = FlexConvParams(rng.normal(size=(c_out, 3)), rng.normal(size=c_out), k=3, dilation=2, depthwise=True)
    else:
        params = FlexConvParams(rng.normal(size=(c_out, c_in, 3)), rng.normal(size=(c_out, c_in)), k=3, dilation=2)
    features = rng.normal(size=(9, c_in))
    neighbors = dilated_neighborhoods(NeighborIndex(points), params.k, params.dilation)
    return points, features, params, neighbors


def _check_flexconv(rng, h, tol, depthwise=False):
    points, features, params, neighbors = _flex_instance(rng, depthwise)
    r = _projection(rng, (points.shape[0], params.out_channels))
    _, cache = flexconv_forward(points, features, params, neighbors)
    d_f, g = flexconv_backward(r, cache)
    fn = lambda: float(np.sum(flexconv_forward(points, features, params, neighbors)[0] * r))
    return check_arrays(
        "flexconv_depthwise" if depthwise else "flexconv", fn,
        {"input": features, "theta": params.theta, "theta_b": params.theta_b},
        {"input": d_f, **g}, h, tol,
    )


def _check_se(rng, h, tol):
    u = rng.normal(size=(6, 8))
    params = SEParams(
        rng.normal(size=(4, 8)), rng.normal(size=4) * 0.1 + 0.5, rng.normal(size=(8, 4)), rng.normal(size=8) * 0.5
    )
    r = _projection(rng, u.shape)
    _, cache = se_forward(u, params)
    d_u, g = se_backward(r, cache)
    arrays = {
        "input": u, "reduce_weight": params.reduce_weight, "reduce_bias": params.reduce_bias,
        "expand_weight": params.expand_weight, "expand_bias": params.expand_bias,
    }
    return check_arrays("se", lambda: float(np.sum(se_forward(u, params)[0] * r)), arrays, {"input": d_u, **g}, h, tol)


def _check_pointwise(rng, h, tol):
    reports = []
    x = rng.normal(size=(5, 4))
    r = _projection(rng, x.shape)
    _, cache = l2_normalize_forward(x, axis=1)
    reports.append(check_arrays(
        "l2_normalize", lambda: float(np.sum(l2_normalize_forward(x, axis=1)[0] * r)),
        {"input": x}, {"input": l2_normalize_backward(r, cache)}, h, tol,
    ))
    y = rng.normal(size=(4, 3))
    ry = _projection(rng, y.shape)
    _, cache = softmax_forward(y, axis=0)
    reports.append(check_arrays(
        "softmax", lambda: float(np.sum(softmax_forward(y, axis=0)[0] * ry)),
        {"input": y}, {"input": softmax_backward(ry, cache)}, h, tol,
    ))
    z = rng.normal(size=(5, 2))
    rz = _projection(rng, z.shape)
    _, cache = sigmoid_forward(z)
    reports.append(check_arrays(
        "sigmoid", lambda: float(np.sum(sigmoid_forward(z)[0] * rz)),
        {"input": z}, {"input": sigmoid_backward(rz, cache)}, h, tol,
    ))
    return reports


# -- network blocks -------------------------------------------------------------------

def toy_architecture(**overrides) -> ArchitectureConfig:
    return ArchitectureConfig(**{**TOY_ARCHITECTURE, **overrides})


def _toy_cloud(rng, n: int = 14) -> PointCloud:
    return center_cloud(PointCloud(rng.uniform(-1.0, 1.0, size=(n, 3))))[0]


def _params_under(model: ModelParams, prefix: str) -> dict[str, np.ndarray]:
    return {name: model.arrays[name] for name in model.names(prefix)}


def _check_encoder(rng, model, h, tol):
    cloud = _toy_cloud(rng)
    geometry = encoder_geometry(cloud.points, model)
    record = encoder_run(cloud, model, geometry)
    r_psi, r_x = _projection(rng, record.psi.shape), _projection(rng, record.x.shape)
    analytic = encoder_backward(record, r_psi, r_x)

    def fn():
        rec = encoder_run(cloud, model, geometry)
        return float(np.sum(rec.psi * r_psi) + np.sum(rec.x * r_x))

    return check_arrays("encoder", fn, _params_under(model, "encoder"), analytic, h, tol)


def _check_detector(rng, model, h, tol):
    psi = rng.normal(size=(7, model.arch.local_dim))
    _, cache = detector_run(psi, model)
    r = _projection(rng, (7, 1))
    d_psi, g = detector_backward(r, cache)
    fn = lambda: float(np.sum(detector_run(psi, model)[0] * r))
    return check_arrays("detector", fn, {"input": psi, **_params_under(model, "detector")}, {"input": d_psi, **g}, h, tol)


def _check_attention(rng, model, h, tol):
    feats = rng.normal(size=(7, model.arch.projection_widths[-1]))
    _, cache = attention_run(feats, model)
    r = _projection(rng, (7, 1))
    d_f, g = attention_backward(r, cache)
    fn = lambda: float(np.sum(attention_run(feats, model)[0] * r))
    arrays = {"input": feats, **_params_under(model, "assembler.attention")}
    return check_arrays("attention", fn, arrays, {"input": d_f, **g}, h, tol)


def _check_netvlad(rng, model, h, tol):
    feats = rng.normal(size=(7, model.arch.projection_widths[-1]))
    weights = rng.uniform(0.5, 1.5, size=(7, 1))
    weights /= weights.sum()
    record = netvlad_run(feats, weights, model)
    r = _projection(rng, record.descriptor.shape)
    d_f, d_w, g = netvlad_backward(r, record)
    fn = lambda: float(np.sum(netvlad_run(feats, weights, model).descriptor * r))
    arrays = {"input": feats, "attention": weights}
    arrays.update(_params_under(model, "assembler.netvlad"))
    arrays.update(_params_under(model, "assembler.fc"))
    return check_arrays("netvlad", fn, arrays, {"input": d_f, "attention": d_w, **g}, h, tol)


def _check_pool(rng, mode, h, tol, seed):
    model = ModelParams.initialize(toy_architecture(aggregator=mode), seed, dtype=np.float64)
    feats = rng.normal(size=(6, model.arch.local_dim))
    record = pool_run(feats, mode, model)
    r = _projection(rng, record.descriptor.shape)
    d_f, g = pool_backward(r, record)
    fn = lambda: float(np.sum(pool_run(feats, mode, model).descriptor * r))
    return check_arrays(f"pool_{mode}", fn, {"input": feats, **_params_under(model, "assembler.fc")}, {"input": d_f, **g}, h, tol)


# -- loss blocks ----------------------------------------------------------------------

def _check_desc_loss(rng, h, tol):
    x, x2 = rng.normal(size=(6, 4)) * 0.5, rng.normal(size=(5, 4)) * 0.5
    corr = np.zeros((6, 5), dtype=np.uint8)
    corr[np.arange(5), np.arange(5)] = 1
    cfg = LossConfig(mu=1.5)
    dist, cache = feature_distances(x, x2)
    d_x, d_x2 = feature_distances_backward(desc_loss_grad(dist, corr, cfg), cache)
    fn = lambda: desc_loss(feature_distances(x, x2)[0], corr, cfg)
    return check_arrays("desc_loss", fn, {"anchors": x, "partners": x2}, {"anchors": d_x, "partners": d_x2}, h, tol)


def _check_det_loss(rng, h, tol):
    s = rng.uniform(0.1, 0.9, size=8)
    asr = rng.uniform(0.0, 1.0, size=8)
    fn = lambda: det_loss(s, asr)
    return check_arrays("det_loss", fn, {"saliency": s}, {"saliency": det_loss_grad(s, asr)}, h, tol)


def _check_quadruplet(rng, h, tol):
    a, pos, neg, star = rng.normal(size=4), rng.normal(size=(2, 4)), rng.normal(size=(5, 4)), rng.normal(size=4)
    cfg = LossConfig(alpha=3.0, beta=3.0)
    _, g = lazy_quadruplet_loss(a, pos, neg, star, cfg, with_grads=True)
    fn = lambda: lazy_quadruplet_loss(a, pos, neg, star, cfg)
    arrays = {"anchor": a, "positives": pos, "negatives": neg, "negstar": star}
    return check_arrays("lazy_quadruplet", fn, arrays, g, h, tol)


def _check_weak_triplet(rng, h, tol):
    x, pos, neg = rng.normal(size=(4, 3)), rng.normal(size=(5, 3)), rng.normal(size=(6, 3))
    _, g = weak_triplet_loss(x, pos, neg, 2.0, with_grads=True)
    fn = lambda: weak_triplet_loss(x, pos, neg, 2.0)
    return check_arrays("weak_triplet", fn, {"anchor": x, "positives": pos, "negatives": neg}, g, h, tol)


def _check_local_objective(rng, model, h, tol, seed):
    """desc + λ·det of one synthetic pair through encoder and detector."""
    cloud = _toy_cloud(rng, 16)
    training = TrainingConfig(anchors_per_pair=10, sigma_noise=0.01, tau=0.3, max_yaw=30.0)
    pair = make_local_pair(cloud, training, seed)
    cfg = LossConfig(lambda_det=1.0)
    grads = Gradients(model, model.names("encoder") + model.names("detector"))
    local_pair_objective(model, pair, cfg, grads)
    arrays = {name: model.arrays[name] for name in grads}
    return check_arrays("local_objective", lambda: local_pair_objective(model, pair, cfg).loss, arrays, dict(grads), h, tol)


def _check_global_objective(rng, h, tol, seed):
    """Lazy quadruplet loss through projection, attention, NetVLAD and FC."""
    model = ModelParams.initialize(toy_architecture(aggregate_points=10), seed, dtype=np.float64)
    features = [scene_features(_toy_cloud(rng), model) for _ in range(5)]
    batch = GlobalBatch(anchor=0, positives=[1], negatives=[2, 3], negstar=4)
    cfg = LossConfig(alpha=3.0, beta=3.0)
    grads = Gradients(model, model.names("assembler"))
    quadruplet_objective(model, features, batch, cfg, grads)
    arrays = {name: model.arrays[name] for name in grads}
    fn = lambda: quadruplet_objective(model, features, batch, cfg)
    return check_arrays("global_objective", fn, arrays, dict(grads), h, tol)


def run_gradcheck(seed: int = 0, h: float = DEFAULT_STEP, tolerance: float = DEFAULT_TOLERANCE) -> list[BlockReport]:
    rng = np.random.default_rng(seed)
    model = ModelParams.initialize(toy_architecture(), seed, dtype=np.float64)
    reports = [
        _check_conv1x1(rng, h, tolerance),
        _check_flexconv(rng, h, tolerance),
        _check_flexconv(rng, h, tolerance, depthwise=True),
        _check_se(rng, h, tolerance),
        *_check_pointwise(rng, h, tolerance),
        _check_encoder(rng, model, h, tolerance),
        _check_detector(rng, model, h, tolerance),
        _check_attention(rng, model, h, tolerance),
        _check_netvlad(rng, model, h, tolerance),
        _check_pool(rng, "max", h, tolerance, seed),
        _check_pool(rng, "avg", h, tolerance, seed),
        _check_desc_loss(rng, h, tolerance),
        _check_det_loss(rng, h, tolerance),
        _check_quadruplet(rng, h, tolerance),
        _check_weak_triplet(rng, h, tolerance),
        _check_local_objective(rng, model, h, tolerance, seed),
        _check_global_objective(rng, h, tolerance, seed),
    ]
    failed = [r.block for r in reports if not r.passed]
    if failed:
        log.logger.error(f"Gradient check failed for: {', '.join(failed)}")
    else:
        log.logger.info(f"Gradient check passed for all {len(reports)} blocks")
    return reports
