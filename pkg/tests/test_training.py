import numpy as np
import pytest

from src.config import TrainingConfig
from src.errors import ConfigurationError, DegenerateBatchError, InsufficientDataError, NumericError
from src.fileio import generate_scenes
from src.geometry import PointCloud
from src.net import ModelParams
from src.training import (
    AdamState,
    LOCAL_LOG_COLUMNS,
    adam_step,
    lr_schedule_global,
    lr_schedule_local,
    make_local_pair,
    prepare_cloud,
    sample_global_batch,
    sample_local_batch,
    train_global,
    train_local,
    write_loss_log,
)
from src.training.batches import quadruplet_anchors

from .conftest import random_cloud, toy_pipeline


class TestAdam:
    def test_matches_hand_recursion(self):
        grads = [0.5, -0.2, 0.1]
        params = {"w": np.array([1.0])}
        state = AdamState(lr=0.1)
        m = v = 0.0
        expected = 1.0
        for t, g in enumerate(grads, start=1):
            adam_step(params, {"w": np.array([g])}, state)
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            expected -= 0.1 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
            assert params["w"][0] == pytest.approx(expected, abs=1e-12)
        assert state.step == 3

    def test_first_step_moves_by_lr(self):
        params = {"w": np.array([2.0, -1.0])}
        adam_step(params, {"w": np.array([3.0, -0.01])}, AdamState(lr=0.01))
        np.testing.assert_allclose(params["w"], [1.99, -0.99], atol=1e-8)

    def test_zero_gradient_leaves_parameters(self):
        params = {"w": np.array([1.5])}
        adam_step(params, {"w": np.zeros(1)}, AdamState(lr=0.1))
        assert params["w"][0] == 1.5

    def test_only_named_parameters_move(self):
        params = {"a": np.array([1.0]), "b": np.array([1.0])}
        adam_step(params, {"a": np.array([1.0])}, AdamState(lr=0.1))
        assert params["b"][0] == 1.0

    def test_non_finite_gradient_is_rejected_before_update(self):
        params = {"a": np.array([1.0]), "b": np.array([1.0])}
        state = AdamState(lr=0.1)
        with pytest.raises(NumericError) as info:
            adam_step(params, {"a": np.array([1.0]), "b": np.array([np.nan])}, state)
        assert info.value.parameter == "b"
        assert params["a"][0] == 1.0
        assert state.step == 0

    def test_updates_model_params(self, toy_model):
        name = "detector.conv4.bias"
        before = toy_model[name].copy()
        adam_step(toy_model, {name: np.ones_like(before)}, AdamState(lr=0.1))
        np.testing.assert_allclose(toy_model[name], before - 0.1, atol=1e-7)


class TestSchedules:
    def test_local_halving(self):
        assert lr_schedule_local(0) == pytest.approx(1e-4)
        assert lr_schedule_local(4) == pytest.approx(1e-4)
        assert lr_schedule_local(5) == pytest.approx(5e-5)
        assert lr_schedule_local(10) == pytest.approx(2.5e-5)

    def test_global_decay_and_floor(self):
        assert lr_schedule_global(0) == pytest.approx(5e-4)
        assert lr_schedule_global(10) == pytest.approx(2.5e-4)
        assert lr_schedule_global(20) == pytest.approx(1.25e-4)
        assert lr_schedule_global(1000) == pytest.approx(1e-5)

    def test_negative_epoch(self):
        with pytest.raises(ValueError):
            lr_schedule_local(-1)


class TestLocalBatches:
    def test_prepare_centers_and_samples(self, rng, toy_config):
        cloud = random_cloud(rng, 400, scale=5.0, centered=False)
        prepared = prepare_cloud(cloud, toy_config.pipeline.training, seed=0)
        assert prepared.count == 64
        np.testing.assert_allclose(prepared.points.mean(axis=0), 0.0, atol=1e-9)

    def test_prepare_rejects_sparse_cloud(self, toy_config):
        cloud = PointCloud(np.zeros((30, 3)))
        with pytest.raises(InsufficientDataError):
            prepare_cloud(cloud, toy_config.pipeline.training, seed=0)

    def test_pair_anchors_have_correspondents(self, rng, toy_config):
        cfg = toy_config.pipeline.training
        cloud = prepare_cloud(random_cloud(rng, 400, scale=5.0), cfg, seed=0)
        pair = make_local_pair(cloud, cfg, seed=3)
        assert pair.anchors.shape == pair.anchors_other.shape == (cfg.anchors_per_pair,)
        assert np.all(np.diag(pair.correspondences))
        assert not pair.correspondences.all()
        np.testing.assert_allclose(pair.other.points.mean(axis=0), 0.0, atol=1e-9)

    def test_pair_transform_maps_onto_noiseless_copy(self, rng, toy_config):
        cfg = toy_config.pipeline.training.model_copy(update={"sigma_noise": 0.0})
        cloud = prepare_cloud(random_cloud(rng, 400, scale=5.0), cfg, seed=0)
        pair = make_local_pair(cloud, cfg, seed=7)
        np.testing.assert_allclose(pair.transform.apply_points(cloud.points), pair.other.points, atol=1e-9)

    def test_pair_is_seeded(self, rng, toy_config):
        cfg = toy_config.pipeline.training
        cloud = prepare_cloud(random_cloud(rng, 400, scale=5.0), cfg, seed=0)
        a, b = make_local_pair(cloud, cfg, seed=5), make_local_pair(cloud, cfg, seed=5)
        np.testing.assert_array_equal(a.other.points, b.other.points)
        np.testing.assert_array_equal(a.anchors, b.anchors)

    def test_batch_size_and_combinations(self, rng, toy_config):
        cfg = toy_config.pipeline.training
        clouds = [prepare_cloud(random_cloud(rng, 400, scale=5.0), cfg, seed=i) for i in range(3)]
        batch = sample_local_batch(clouds, cfg, np.random.default_rng(0))
        assert len(batch.pairs) == cfg.pairs_per_batch
        assert batch.combinations == cfg.pairs_per_batch * cfg.anchors_per_pair**2

    def test_default_batch_combinations(self):
        cfg = TrainingConfig()
        assert cfg.pairs_per_batch * cfg.anchors_per_pair**2 == 6 * 512**2


def _grid_positions():
    # Three scenes at each of four places 100 m apart.
    places = np.array([[0.0, 0.0], [100.0, 0.0], [0.0, 100.0], [100.0, 100.0]])
    return np.concatenate([places + offset for offset in ([0, 0], [1, 0], [0, 1])])


class TestGlobalBatches:
    def test_composition(self):
        cfg = TrainingConfig(positives=2, negatives=8)
        batch = sample_global_batch(_grid_positions(), cfg, np.random.default_rng(0))
        assert len(batch.positives) == 2
        assert len(batch.negatives) == 8
        assert len(set(batch.members)) == 12

    def test_roles_respect_distances(self):
        cfg = TrainingConfig(positives=2, negatives=8)
        positions = _grid_positions()
        for seed in range(10):
            batch = sample_global_batch(positions, cfg, np.random.default_rng(seed))
            anchor = positions[batch.anchor]
            assert all(np.linalg.norm(positions[i] - anchor) <= 10.0 for i in batch.positives)
            assert all(np.linalg.norm(positions[i] - anchor) >= 50.0 for i in batch.negatives + [batch.negstar])
            assert batch.negstar not in batch.negatives

    def test_negstar_prefers_isolated_scene(self):
        cfg = TrainingConfig(positives=1, negatives=1)
        positions = np.array([[0.0, 0.0], [1.0, 0.0], [100.0, 0.0], [101.0, 0.0], [0.0, 100.0]])
        for seed in range(10):
            batch = sample_global_batch(positions, cfg, np.random.default_rng(seed))
            if batch.anchor in (0, 1) and batch.negatives[0] in (2, 3):
                assert batch.negstar == 4

    def test_anchor_needs_spare_negative(self):
        cfg = TrainingConfig(positives=1, negatives=2)
        positions = np.array([[0.0, 0.0], [1.0, 0.0], [100.0, 0.0], [200.0, 0.0]])
        assert set(quadruplet_anchors(positions, cfg).tolist()) == set()

    def test_no_valid_anchor(self):
        cfg = TrainingConfig(positives=2, negatives=8)
        with pytest.raises(ConfigurationError):
            sample_global_batch(np.zeros((5, 2)), cfg, np.random.default_rng(0))


@pytest.fixture(scope="module")
def scenes():
    return generate_scenes(6, 200, seed=0, views_per_place=3)


def _global_config():
    return toy_pipeline(training={"positives": 1, "negatives": 2, "local_steps": 3, "global_steps": 3, "double_precision": True})


class TestTrainLocal:
    def test_seeded_runs_are_identical(self, scenes):
        config = _global_config().pipeline
        a = train_local(scenes, config, seed=11)
        b = train_local(scenes, config, seed=11)
        assert a.losses == b.losses
        assert a.model.digest() == b.model.digest()

    def test_parameters_change_and_history_is_finite(self, scenes):
        config = _global_config().pipeline
        start = ModelParams.initialize(config.architecture, 11, np.float64)
        result = train_local(scenes, config, seed=11, model=start.copy())
        assert result.history
        assert all(np.isfinite(result.losses))
        assert result.model.digest("encoder") != start.digest("encoder")
        assert result.model.digest("assembler") == start.digest("assembler")

    def test_weak_supervision_leaves_detector(self, scenes):
        config = toy_pipeline(
            training={"positives": 1, "negatives": 2, "local_steps": 2, "supervision": "weak", "double_precision": True}
        ).pipeline
        start = ModelParams.initialize(config.architecture, 2, np.float64)
        result = train_local(scenes, config, seed=2, model=start.copy())
        assert result.model.digest("detector") == start.digest("detector")
        assert all(r.det == 0.0 for r in result.history)

    def test_weak_supervision_needs_positions(self, rng):
        config = toy_pipeline(training={"supervision": "weak"}).pipeline
        with pytest.raises(ConfigurationError):
            train_local([random_cloud(rng, 200, scale=5.0)], config)

    def test_empty_dataset(self, toy_config):
        with pytest.raises(ConfigurationError):
            train_local([], toy_config.pipeline)

    def test_checkpoints(self, scenes):
        config = toy_pipeline(training={"local_steps": 4, "checkpoint_every": 2}).pipeline
        seen = []
        train_local(scenes, config, seed=0, on_checkpoint=lambda step, model: seen.append(step))
        assert seen and all(step % 2 == 0 for step in seen)

    def test_loss_log(self, scenes, tmp_path):
        config = _global_config().pipeline
        result = train_local(scenes, config, seed=1)
        path = tmp_path / "loss.csv"
        write_loss_log(str(path), result.history, LOCAL_LOG_COLUMNS)
        lines = path.read_text().splitlines()
        assert lines[0] == "step,epoch,lr,loss,desc,det"
        assert len(lines) == len(result.history) + 1


class TestTrainGlobal:
    def test_encoder_frozen(self, scenes):
        config = _global_config().pipeline
        model = ModelParams.initialize(config.architecture, 5, np.float64)
        result = train_global(scenes, model, config, seed=5)
        assert result.model.digest("encoder") == model.digest("encoder")
        assert result.model.digest("detector") == model.digest("detector")
        if result.history:
            assert result.model.digest("assembler") != model.digest("assembler")

    def test_pool_aggregator(self, scenes):
        config = toy_pipeline(
            architecture={"aggregator": "max"}, training={"positives": 1, "negatives": 2, "global_steps": 2}
        ).pipeline
        model = ModelParams.initialize(config.architecture, 5)
        result = train_global(scenes, model, config, seed=5)
        assert result.model.digest("encoder") == model.digest("encoder")

    def test_requires_model(self, scenes):
        with pytest.raises(ConfigurationError):
            train_global(scenes, None, _global_config().pipeline)

    def test_requires_valid_quadruplet(self, scenes):
        config = toy_pipeline(training={"positives": 2, "negatives": 8}).pipeline
        model = ModelParams.initialize(config.architecture, 0)
        with pytest.raises(ConfigurationError):
            train_global(scenes, model, config)

    def test_requires_scene_positions(self, rng):
        config = _global_config().pipeline
        model = ModelParams.initialize(config.architecture, 0)
        with pytest.raises(ConfigurationError):
            train_global([random_cloud(rng, 200)], model, config)
