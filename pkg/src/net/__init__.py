from .aggregation import (
    DEFAULT_CLUSTERS,
    DEFAULT_GLOBAL_DIM,
    netvlad_backward,
    netvlad_forward,
    netvlad_run,
    pool_aggregate,
    pool_backward,
    pool_features,
    pool_run,
)
from .encoder import encoder_backward, encoder_forward, encoder_geometry, encoder_run
from .heads import attention_backward, attention_forward, attention_run, detector_backward, detector_forward, detector_run
from .layers import (
    FlexConvParams,
    SEParams,
    conv1x1_backward,
    conv1x1_forward,
    flexconv_backward,
    flexconv_forward,
    se_backward,
    se_forward,
)
from .model import ForwardPass, Gradients, backward, extract, global_backward, global_run, local_run
from .params import ModelParams, architecture_shapes

__all__ = [
    "DEFAULT_CLUSTERS",
    "DEFAULT_GLOBAL_DIM",
    "FlexConvParams",
    "ForwardPass",
    "Gradients",
    "ModelParams",
    "SEParams",
    "architecture_shapes",
    "attention_backward",
    "attention_forward",
    "attention_run",
    "backward",
    "conv1x1_backward",
    "conv1x1_forward",
    "detector_backward",
    "detector_forward",
    "detector_run",
    "encoder_backward",
    "encoder_forward",
    "encoder_geometry",
    "encoder_run",
    "extract",
    "flexconv_backward",
    "flexconv_forward",
    "global_backward",
    "global_run",
    "local_run",
    "netvlad_backward",
    "netvlad_forward",
    "netvlad_run",
    "pool_aggregate",
    "pool_backward",
    "pool_features",
    "pool_run",
    "se_backward",
    "se_forward",
]
