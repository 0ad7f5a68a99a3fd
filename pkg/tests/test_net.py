import numpy as np
import pytest

from src.config import ArchitectureConfig
from src.errors import InvalidArgumentError, NumericError
from src.geometry import NeighborIndex, PointCloud, dilated_neighborhoods
from src.net import (
    DEFAULT_CLUSTERS,
    DEFAULT_GLOBAL_DIM,
    FlexConvParams,
    Gradients,
    ModelParams,
    SEParams,
    architecture_shapes,
    attention_forward,
    conv1x1_forward,
    detector_forward,
    encoder_forward,
    extract,
    flexconv_forward,
    netvlad_run,
    pool_aggregate,
    pool_features,
    se_forward,
)
from src.net.layers import l2_normalize_backward, l2_normalize_forward
from src.training.gradcheck import toy_architecture

from .conftest import random_cloud


class TestConv1x1:
    def test_identity(self, rng):
        x = rng.normal(size=(5, 3))
        out, _ = conv1x1_forward(x, np.eye(3), np.zeros(3))
        np.testing.assert_array_equal(out, x)

    def test_hand_case(self):
        out, _ = conv1x1_forward(np.array([[1.0, 2.0]]), np.array([[1.0, 1.0], [0.0, 1.0]]), np.zeros(2))
        np.testing.assert_array_equal(out, [[3.0, 2.0]])

    def test_matmul_oracle(self, rng):
        x, w, b = rng.normal(size=(7, 4)), rng.normal(size=(3, 4)), rng.normal(size=3)
        out, _ = conv1x1_forward(x, w, b)
        oracle = np.array([[sum(w[o, c] * x[n, c] for c in range(4)) + b[o] for o in range(3)] for n in range(7)])
        np.testing.assert_allclose(out, oracle, atol=1e-12)

    def test_rejects_wrong_width(self, rng):
        with pytest.raises(InvalidArgumentError):
            conv1x1_forward(rng.normal(size=(2, 5)), np.eye(3), np.zeros(3))


class TestFlexConv:
    def test_counting_kernel(self, rng):
        cloud = random_cloud(rng, 12)
        params = FlexConvParams(np.zeros((1, 1, 3)), np.ones((1, 1)), k=4)
        out, _ = flexconv_forward(cloud.points, np.ones((12, 1)), params, NeighborIndex(cloud))
        np.testing.assert_array_equal(out, 4.0)

    def test_self_neighborhood_is_1x1_conv(self, rng):
        cloud = random_cloud(rng, 9)
        feats = rng.normal(size=(9, 3))
        theta, theta_b = rng.normal(size=(2, 3, 3)), rng.normal(size=(2, 3))
        out, _ = flexconv_forward(cloud.points, feats, FlexConvParams(theta, theta_b, k=1), NeighborIndex(cloud))
        np.testing.assert_allclose(out, feats @ theta_b.T, atol=1e-12)

    def test_double_loop_oracle(self):
        for seed in range(100):
            rng = np.random.default_rng(seed)
            pts = rng.normal(size=(5, 3))
            feats = rng.normal(size=(5, 2))
            theta, theta_b = rng.normal(size=(2, 2, 3)), rng.normal(size=(2, 2))
            neighbors = dilated_neighborhoods(NeighborIndex(pts), 3, 1)
            out, _ = flexconv_forward(pts, feats, FlexConvParams(theta, theta_b, k=3), neighbors)
            oracle = np.zeros((5, 2))
            for l in range(5):
                for i in neighbors[l]:
                    rel = pts[l] - pts[i]
                    for o in range(2):
                        for c in range(2):
                            oracle[l, o] += (theta[o, c] @ rel + theta_b[o, c]) * feats[i, c]
            np.testing.assert_allclose(out, oracle, atol=1e-10)

    def test_depthwise_oracle(self):
        for seed in range(100):
            rng = np.random.default_rng(seed)
            pts = rng.normal(size=(6, 3))
            feats = rng.normal(size=(6, 4))
            theta, theta_b = rng.normal(size=(4, 3)), rng.normal(size=4)
            neighbors = dilated_neighborhoods(NeighborIndex(pts), 3, 1)
            out, _ = flexconv_forward(pts, feats, FlexConvParams(theta, theta_b, k=3, depthwise=True), neighbors)
            oracle = np.zeros((6, 4))
            for l in range(6):
                for i in neighbors[l]:
                    oracle[l] += (theta @ (pts[l] - pts[i]) + theta_b) * feats[i]
            np.testing.assert_allclose(out, oracle, atol=1e-10)

    def test_rejects_bad_neighborhood_parameters(self):
        with pytest.raises(InvalidArgumentError):
            FlexConvParams(np.zeros((1, 1, 3)), np.zeros((1, 1)), k=0)


class TestSqueezeExcitation:
    def _params(self, channels, hidden, expand_bias):
        return SEParams(
            np.zeros((hidden, channels)), np.zeros(hidden), np.zeros((channels, hidden)), np.full(channels, expand_bias)
        )

    def test_open_gate_is_identity(self, rng):
        u = rng.normal(size=(4, 6))
        out, _ = se_forward(u, self._params(6, 3, 1000.0))
        np.testing.assert_array_equal(out, u)

    def test_squeeze_of_constant_channel(self, rng):
        u = rng.normal(size=(5, 4))
        u[:, 2] = 3.5
        _, (_, z, _, _, _) = se_forward(u, self._params(4, 2, 0.0))
        assert z[2] == pytest.approx(3.5)

    def test_scalar_oracle(self, rng):
        u = rng.normal(size=(4, 6))
        params = SEParams(rng.normal(size=(3, 6)) * 0.1, rng.normal(size=3) * 0.1, rng.normal(size=(6, 3)) * 0.1, rng.normal(size=6) * 0.1)
        out, _ = se_forward(u, params)
        z = [sum(u[n, c] for n in range(4)) / 4 for c in range(6)]
        hidden = [max(sum(params.reduce_weight[h, c] * z[c] for c in range(6)) + params.reduce_bias[h], 0.0) for h in range(3)]
        gate = [
            1.0 / (1.0 + np.exp(-(sum(params.expand_weight[c, h] * hidden[h] for h in range(3)) + params.expand_bias[c])))
            for c in range(6)
        ]
        np.testing.assert_allclose(out, u * np.array(gate), atol=1e-12)


class TestL2Normalize:
    def test_gradient_along_ray_vanishes(self, rng):
        v = rng.normal(size=5)
        v /= np.linalg.norm(v)
        _, cache = l2_normalize_forward(v, axis=0)
        np.testing.assert_allclose(l2_normalize_backward(v, cache), 0.0, atol=1e-12)

    def test_zero_rows_stay_zero(self):
        out, _ = l2_normalize_forward(np.zeros((2, 3)), axis=1)
        np.testing.assert_array_equal(out, 0.0)


class TestModelParams:
    def test_default_global_sizes(self):
        arch = ArchitectureConfig()
        assert arch.global_dim == DEFAULT_GLOBAL_DIM == 256
        assert arch.clusters == DEFAULT_CLUSTERS == 64
        assert architecture_shapes(arch)["assembler.netvlad.centers"] == (64, 1024)

    def test_initialization_is_seeded(self, toy_arch):
        a = ModelParams.initialize(toy_arch, seed=3)
        b = ModelParams.initialize(toy_arch, seed=3)
        assert a.digest() == b.digest()
        assert a.digest() != ModelParams.initialize(toy_arch, seed=4).digest()

    def test_rejects_missing_parameters(self, toy_model):
        arrays = dict(toy_model.arrays)
        arrays.pop("detector.conv1.bias")
        with pytest.raises(InvalidArgumentError):
            ModelParams(toy_model.arch, arrays)

    def test_no_se_parameters_without_se(self):
        shapes = architecture_shapes(toy_architecture(use_se=False))
        assert not any(".se." in name for name in shapes)

    def test_digest_by_prefix(self, toy_model):
        before = toy_model.digest("encoder")
        toy_model["detector.conv1.bias"] = toy_model["detector.conv1.bias"] + 1.0
        assert toy_model.digest("encoder") == before


class TestEncoder:
    def test_descriptors_are_unit_norm(self, toy_model, cloud):
        psi, x = encoder_forward(cloud, toy_model)
        assert psi.shape == x.shape == (cloud.count, toy_model.arch.local_dim)
        np.testing.assert_allclose(np.linalg.norm(x, axis=1), 1.0, atol=1e-6)

    def test_permutation_equivariance(self, toy_model, cloud, rng):
        perm = rng.permutation(cloud.count)
        psi, x = encoder_forward(cloud, toy_model)
        psi_p, x_p = encoder_forward(PointCloud(cloud.points[perm]), toy_model)
        np.testing.assert_allclose(psi_p, psi[perm], atol=1e-10)
        np.testing.assert_allclose(x_p, x[perm], atol=1e-10)

    def test_deterministic(self, toy_model, cloud):
        a = encoder_forward(cloud, toy_model)
        b = encoder_forward(cloud, toy_model)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])

    def test_requires_centered_input(self, toy_model, rng):
        with pytest.raises(InvalidArgumentError):
            encoder_forward(PointCloud(rng.uniform(5, 6, size=(20, 3))), toy_model)

    def test_depthwise_variant(self, cloud):
        arch = toy_architecture(depthwise=True, conv_width=8, flex_widths=[8, 8])
        _, x = encoder_forward(cloud, ModelParams.initialize(arch, 0, np.float64))
        np.testing.assert_allclose(np.linalg.norm(x, axis=1), 1.0, atol=1e-6)


class TestHeads:
    def test_zero_detector_gives_half(self, toy_model, rng):
        for name in toy_model.names("detector"):
            toy_model[name] = np.zeros_like(toy_model[name])
        s = detector_forward(rng.normal(size=(6, 8)), toy_model)
        np.testing.assert_array_equal(s, 0.5)

    def test_saliency_in_open_interval(self, toy_model, rng):
        s = detector_forward(rng.normal(size=(50, 8)) * 3, toy_model)
        assert s.shape == (50, 1)
        assert s.min() > 0.0 and s.max() < 1.0

    def test_detector_layer_oracle(self, toy_model, rng):
        psi = rng.normal(size=(6, 8))
        h = psi
        for i in range(1, 5):
            h = h @ toy_model[f"detector.conv{i}.weight"].T + toy_model[f"detector.conv{i}.bias"]
            if i < 4:
                h = np.maximum(h, 0.0)
        np.testing.assert_allclose(detector_forward(psi, toy_model), 1.0 / (1.0 + np.exp(-h)), atol=1e-12)

    def test_attention_uniform_on_identical_rows(self, toy_model, rng):
        feats = np.tile(rng.normal(size=(1, 10)), (7, 1))
        np.testing.assert_allclose(attention_forward(feats, toy_model), 1.0 / 7, atol=1e-12)

    def test_attention_sums_to_one(self, toy_model, rng):
        w = attention_forward(rng.normal(size=(30, 10)), toy_model)
        assert w.sum() == pytest.approx(1.0, abs=1e-6)
        assert np.all(w > 0)


class TestNetVLAD:
    def test_hand_oracle(self, toy_arch):
        for seed in range(100):
            rng = np.random.default_rng(seed)
            model = ModelParams.initialize(toy_arch, seed, np.float64)
            n = int(rng.integers(1, 7))
            x = rng.normal(size=(n, 10))
            a = rng.uniform(0.1, 1.0, size=(n, 1))
            a /= a.sum()
            record = netvlad_run(x, a, model)
            centers = model["assembler.netvlad.centers"]
            w, b = model["assembler.netvlad.assign_weight"], model["assembler.netvlad.assign_bias"]
            blocks = []
            for k in range(3):
                v = np.zeros(10)
                for i in range(n):
                    logits = w @ x[i] + b
                    soft = np.exp(logits - logits.max())
                    soft /= soft.sum()
                    v += a[i, 0] * soft[k] * (x[i] - centers[k])
                blocks.append(v / np.linalg.norm(v))
            flat = np.concatenate(blocks)
            flat /= np.linalg.norm(flat)
            g = model["assembler.fc.weight"] @ flat + model["assembler.fc.bias"]
            np.testing.assert_allclose(record.descriptor, g / np.linalg.norm(g), atol=1e-10)
            assert not record.degenerate

    def test_zero_residuals_are_degenerate(self, toy_model):
        centers = toy_model["assembler.netvlad.centers"]
        toy_model["assembler.netvlad.assign_weight"] = np.zeros_like(toy_model["assembler.netvlad.assign_weight"])
        toy_model["assembler.netvlad.assign_bias"] = np.array([1000.0, 0.0, 0.0])
        x = np.tile(centers[0], (4, 1))
        record = netvlad_run(x, np.full((4, 1), 0.25), toy_model)
        assert record.degenerate
        np.testing.assert_array_equal(record.descriptor, 0.0)

    def test_rejects_bad_attention_shape(self, toy_model, rng):
        with pytest.raises(InvalidArgumentError):
            netvlad_run(rng.normal(size=(3, 10)), np.ones((2, 1)), toy_model)


class TestPooling:
    def test_single_point(self, rng):
        row = rng.normal(size=(1, 4))
        for mode in ("max", "avg"):
            np.testing.assert_array_equal(pool_features(row, mode)[0], row[0])

    def test_constant_rows(self):
        feats = np.tile([1.0, -2.0, 3.0], (5, 1))
        np.testing.assert_allclose(pool_features(feats, "max")[0], pool_features(feats, "avg")[0])

    def test_column_scan_oracle(self, rng):
        feats = rng.normal(size=(5, 4))
        maxed = [max(feats[n, c] for n in range(5)) for c in range(4)]
        np.testing.assert_array_equal(pool_features(feats, "max")[0], maxed)
        np.testing.assert_allclose(pool_features(feats, "avg")[0], feats.sum(axis=0) / 5, atol=1e-12)

    def test_pool_descriptor_unit_norm(self, rng):
        model = ModelParams.initialize(toy_architecture(aggregator="avg"), 0, np.float64)
        g = pool_aggregate(rng.normal(size=(9, 8)), "avg", model)
        assert g.shape == (5,)
        assert np.linalg.norm(g) == pytest.approx(1.0)

    def test_unknown_mode(self, rng):
        with pytest.raises(InvalidArgumentError):
            pool_features(rng.normal(size=(3, 2)), "median")


class TestExtract:
    def test_single_pass_outputs(self, toy_model, cloud):
        result = extract(cloud, toy_model)
        np.testing.assert_allclose(np.linalg.norm(result.local.x, axis=1), 1.0, atol=1e-6)
        assert result.local.saliency.shape == (cloud.count, 1)
        assert result.global_.descriptor.shape == (toy_model.arch.global_dim,)
        assert np.linalg.norm(result.global_.descriptor) == pytest.approx(1.0)

    def test_global_descriptor_permutation_invariant(self, toy_model, cloud, rng):
        perm = rng.permutation(cloud.count)
        g = extract(cloud, toy_model).global_.descriptor
        g_p = extract(PointCloud(cloud.points[perm]), toy_model).global_.descriptor
        np.testing.assert_allclose(g_p, g, atol=1e-10)

    def test_aggregation_subsample_is_permutation_invariant(self, cloud, rng):
        model = ModelParams.initialize(toy_architecture(aggregate_points=20), 0, np.float64)
        perm = rng.permutation(cloud.count)
        g = extract(cloud, model).global_.descriptor
        g_p = extract(PointCloud(cloud.points[perm]), model).global_.descriptor
        np.testing.assert_allclose(g_p, g, atol=1e-10)

    def test_local_only(self, toy_model, cloud):
        assert extract(cloud, toy_model, with_global=False).global_ is None


class TestGradients:
    def test_accumulate_filters_names(self, toy_model):
        grads = Gradients(toy_model, toy_model.names("detector"))
        grads.accumulate({"detector.conv1.bias": np.ones_like(toy_model["detector.conv1.bias"]), "encoder.fine.conv.bias": 1.0}, 2.0)
        np.testing.assert_array_equal(grads["detector.conv1.bias"], 2.0)
        assert "encoder.fine.conv.bias" not in grads

    def test_non_finite_names_parameter(self, toy_model):
        grads = Gradients(toy_model, ["detector.conv1.bias"])
        grads["detector.conv1.bias"][0] = np.inf
        with pytest.raises(NumericError) as info:
            grads.check_finite()
        assert info.value.parameter == "detector.conv1.bias"
