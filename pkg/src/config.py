import os
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigurationError
from .utils.log import log, pre_configure_logging, setup_logging

# Perform initial, temporary logging configuration.
pre_configure_logging()

PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
DEFAULT_CONFIG_PATH = os.path.join(PROJECT_ROOT, "config.yaml")


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ArchitectureConfig(_Section):
    local_dim: int = Field(128, ge=1)
    conv_width: int = Field(32, ge=1)
    flex_widths: list[int] = [64, 128]
    flex_k: list[int] = [9, 9]
    flex_dilation: list[int] = [1, 2]
    se_reduction: int = Field(4, ge=1)
    use_se: bool = True
    depthwise: bool = False
    coarse_ratio: int = Field(4, ge=1)
    subsample_seed: int = 0
    detector_widths: list[int] = [128, 64, 32]
    attention_widths: list[int] = [256, 64]
    projection_widths: list[int] = [256, 1024]
    projection_k: int = Field(9, ge=1)
    clusters: int = Field(64, ge=1)
    global_dim: int = Field(256, ge=1)
    aggregator: Literal["netvlad", "max", "avg"] = "netvlad"
    aggregate_points: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def _check_shapes(self):
        if len(self.flex_widths) != 2 or len(self.flex_k) != 2 or len(self.flex_dilation) != 2:
            raise ValueError("each resolution branch has exactly two FlexConv layers")
        if self.flex_widths[-1] != self.local_dim:
            raise ValueError("the last FlexConv width must equal local_dim (additive fusion)")
        if any(k < 1 for k in self.flex_k) or any(d < 1 for d in self.flex_dilation):
            raise ValueError("FlexConv k and dilation must be >= 1")
        if self.use_se and self.local_dim % self.se_reduction:
            raise ValueError("se_reduction must divide local_dim")
        if self.depthwise and len(set([self.conv_width, *self.flex_widths])) != 1:
            raise ValueError("depthwise FlexConv cannot change the channel count")
        if len(self.detector_widths) != 3:
            raise ValueError("the detector has four 1x1 layers (three hidden widths)")
        if len(self.attention_widths) != 2:
            raise ValueError("the attention predictor has three 1x1 layers (two hidden widths)")
        if len(self.projection_widths) != 2:
            raise ValueError("the assembler projects with exactly two FlexConv layers")
        return self


class LossConfig(_Section):
    mu: float = Field(0.5, gt=0)
    eta_bal: float = Field(1.0, ge=0)
    kappa: float = Field(0.6, ge=0, le=1)
    asr_k: int = Field(5, ge=1)
    lambda_det: float = Field(1.0, ge=0)
    alpha: float = Field(0.5, ge=0)
    beta: float = Field(0.2, ge=0)
    gamma: float = Field(0.2, ge=0)


class TrainingConfig(_Section):
    seed: int = 0
    double_precision: bool = False
    supervision: Literal["synthetic", "weak"] = "synthetic"
    voxel_grid: float = Field(0.2, gt=0)
    points_per_cloud: int = Field(1024, ge=1)
    pairs_per_batch: int = Field(6, ge=1)
    anchors_per_pair: int = Field(512, ge=2)
    max_yaw: float = Field(360.0, ge=0)
    sigma_noise: float = Field(0.02, ge=0)
    tau: float = Field(0.5, gt=0)
    local_steps: int = Field(2000, ge=0)
    local_steps_per_epoch: int = Field(100, ge=1)
    local_lr: float = Field(1e-4, gt=0)
    local_halving_epochs: int = Field(5, ge=1)
    global_steps: int = Field(100, ge=0)
    global_steps_per_epoch: int = Field(10, ge=1)
    global_lr: float = Field(5e-4, gt=0)
    global_lr_min: float = Field(1e-5, gt=0)
    global_decay: float = Field(0.5, gt=0, le=1)
    global_decay_epochs: int = Field(10, ge=1)
    positives: int = Field(2, ge=1)
    negatives: int = Field(8, ge=1)
    positive_distance: float = Field(10.0, gt=0)
    negative_distance: float = Field(50.0, gt=0)
    adam_beta1: float = Field(0.9, ge=0, lt=1)
    adam_beta2: float = Field(0.999, ge=0, lt=1)
    adam_eps: float = Field(1e-8, gt=0)
    checkpoint_every: int = Field(500, ge=0)


class EvalConfig(_Section):
    keypoints: int = Field(256, ge=1)
    nms_radius: float = Field(0.5, ge=0)
    repeatability_radius: float = Field(0.5, gt=0)
    inlier_threshold: float = Field(0.5, gt=0)
    ransac_max_iter: int = Field(10000, ge=1)
    ransac_confidence: float = Field(0.99, gt=0, lt=1)
    match_mode: Literal["nn", "mutual"] = "mutual"
    rte_threshold: float = Field(2.0, gt=0)
    rre_threshold: float = Field(5.0, gt=0)
    positive_radius: float = Field(25.0, gt=0)
    top_n: int = Field(25, ge=1)
    seed: int = 0


class LoggingConfig(_Section):
    level: str = "INFO"
    file_enabled: bool = False


class ServerConfig(_Section):
    name: str = "Point Cloud Descriptor Server"
    model_path: str = "models/local.dhmd"
    host: str = "127.0.0.1"
    port: int = Field(8000, ge=1, le=65535)
    transport: Literal["http", "stdio", "sse"] = "http"


class PipelineConfig(_Section):
    architecture: ArchitectureConfig = ArchitectureConfig()
    loss: LossConfig = LossConfig()
    training: TrainingConfig = TrainingConfig()
    eval: EvalConfig = EvalConfig()
    logging: LoggingConfig = LoggingConfig()
    server: ServerConfig = ServerConfig()


class Config:
    def __init__(self, config_path=DEFAULT_CONFIG_PATH, configure_logging=True):
        self.path = config_path
        self.config = self._load_config(config_path)
        self.pipeline = self._validate(self.config)
        if configure_logging:
            # Set up the logger using the loaded configuration
            setup_logging(self)

    def _load_config(self, config_path):
        log.logger.info(f"Loading configuration from {config_path}...")
        try:
            with open(config_path, "r") as f:
                config_data = yaml.safe_load(f) or {}
            log.logger.info("Configuration loaded successfully.")
            return config_data
        except FileNotFoundError:
            log.logger.error(f"Configuration file not found at {config_path}.")
            raise ConfigurationError(f"configuration file not found: {config_path}")
        except yaml.YAMLError as e:
            log.logger.error(f"Error parsing YAML in {config_path}: {e}")
            raise ConfigurationError(f"invalid YAML in {config_path}: {e}")

    def _validate(self, config_data):
        try:
            return PipelineConfig.model_validate(config_data)
        except ValidationError as e:
            log.logger.error(f"Configuration {self.path} failed validation: {e}")
            raise ConfigurationError(f"invalid configuration {self.path}: {e}")

    @classmethod
    def from_dict(cls, data: dict, configure_logging=False):
        """Builds a configuration without a file (tests, programmatic use)."""
        instance = cls.__new__(cls)
        instance.path = "<dict>"
        instance.config = data
        instance.pipeline = instance._validate(data)
        if configure_logging:
            setup_logging(instance)
        return instance

    def get(self, key, default=None):
        keys = key.split(".")
        value = self.config
        try:
            for k in keys:
                value = value[k]
            log.logger.debug(f"Retrieved config key '{key}' with value: {value}")
            return value
        except (KeyError, TypeError):
            log.logger.debug(f"Config key '{key}' not found, returning default: {default}")
            return default


def load_config(config_path=None) -> Config:
    return Config(config_path or DEFAULT_CONFIG_PATH)
