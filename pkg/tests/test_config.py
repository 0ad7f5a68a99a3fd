import pytest

from src.config import DEFAULT_CONFIG_PATH, ArchitectureConfig, Config, PipelineConfig, load_config
from src.errors import ConfigurationError


def test_shipped_config_matches_defaults():
    config = Config(DEFAULT_CONFIG_PATH, configure_logging=False)
    assert config.pipeline == PipelineConfig()


def test_load_config_defaults_to_shipped_file():
    assert load_config().path == DEFAULT_CONFIG_PATH


def test_dotted_get():
    config = Config.from_dict({"eval": {"keypoints": 64}})
    assert config.get("eval.keypoints") == 64
    assert config.get("eval.missing", "fallback") == "fallback"
    assert config.pipeline.eval.keypoints == 64
    assert config.pipeline.eval.nms_radius == 0.5


def test_unknown_key_rejected():
    with pytest.raises(ConfigurationError):
        Config.from_dict({"training": {"learning_rate": 0.1}})


def test_unknown_section_rejected():
    with pytest.raises(ConfigurationError):
        Config.from_dict({"metrics": {}})


def test_out_of_range_value_rejected():
    with pytest.raises(ConfigurationError):
        Config.from_dict({"loss": {"kappa": 1.5}})


def test_server_section():
    config = Config.from_dict({"server": {"port": 9001, "transport": "stdio"}})
    assert config.pipeline.server.port == 9001
    assert config.pipeline.server.host == "127.0.0.1"
    with pytest.raises(ConfigurationError):
        Config.from_dict({"server": {"transport": "websocket"}})


def test_missing_file(tmp_path):
    with pytest.raises(ConfigurationError):
        Config(str(tmp_path / "absent.yaml"), configure_logging=False)


def test_invalid_yaml(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text("training: [unclosed\n")
    with pytest.raises(ConfigurationError):
        Config(str(path), configure_logging=False)


def test_empty_file_gives_defaults(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text("")
    assert Config(str(path), configure_logging=False).pipeline == PipelineConfig()


@pytest.mark.parametrize(
    "overrides",
    [
        {"flex_widths": [64, 96]},
        {"flex_k": [9]},
        {"se_reduction": 3},
        {"depthwise": True},
        {"detector_widths": [64, 32]},
        {"projection_widths": [256]},
    ],
)
def test_architecture_shape_rules(overrides):
    with pytest.raises(ValueError):
        ArchitectureConfig(**overrides)


def test_depthwise_with_uniform_widths():
    arch = ArchitectureConfig(depthwise=True, conv_width=128, flex_widths=[128, 128])
    assert arch.depthwise
