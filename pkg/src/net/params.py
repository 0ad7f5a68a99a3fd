"""Named-parameter registry for the whole network.

Every trainable array lives under a unique dotted name, e.g.
``encoder.fine.flex1.theta`` or ``assembler.netvlad.centers``. The
optimizer, the model file codec and the gradient checker all walk
this registry.
"""

import hashlib
from collections.abc import Iterator

import numpy as np

from ..config import ArchitectureConfig
from ..errors import InvalidArgumentError
from .layers import FlexConvParams, SEParams

BRANCHES = ("fine", "coarse")


def _normal(rng: np.random.Generator, shape, std: float) -> np.ndarray:
    return rng.normal(0.0, std, size=shape)


def architecture_shapes(arch: ArchitectureConfig) -> dict[str, tuple[int, ...]]:
    """Every parameter name of the configured architecture with its shape."""
    shapes: dict[str, tuple[int, ...]] = {}
    d = arch.local_dim
    for branch in BRANCHES:
        prefix = f"encoder.{branch}"
        shapes[f"{prefix}.conv.weight"] = (arch.conv_width, 3)
        shapes[f"{prefix}.conv.bias"] = (arch.conv_width,)
        c_in = arch.conv_width
        for i, c_out in enumerate(arch.flex_widths, start=1):
            if arch.depthwise:
                shapes[f"{prefix}.flex{i}.theta"] = (c_out, 3)
                shapes[f"{prefix}.flex{i}.theta_b"] = (c_out,)
            else:
                shapes[f"{prefix}.flex{i}.theta"] = (c_out, c_in, 3)
                shapes[f"{prefix}.flex{i}.theta_b"] = (c_out, c_in)
            c_in = c_out
        if arch.use_se:
            hidden = d // arch.se_reduction
            shapes[f"{prefix}.se.reduce_weight"] = (hidden, d)
            shapes[f"{prefix}.se.reduce_bias"] = (hidden,)
            shapes[f"{prefix}.se.expand_weight"] = (d, hidden)
            shapes[f"{prefix}.se.expand_bias"] = (d,)

    widths = [d, *arch.detector_widths, 1]
    for i in range(4):
        shapes[f"detector.conv{i + 1}.weight"] = (widths[i + 1], widths[i])
        shapes[f"detector.conv{i + 1}.bias"] = (widths[i + 1],)

    if arch.aggregator == "netvlad":
        c_in = d
        for i, c_out in enumerate(arch.projection_widths, start=1):
            shapes[f"assembler.proj{i}.theta"] = (c_out, c_in, 3)
            shapes[f"assembler.proj{i}.theta_b"] = (c_out, c_in)
            c_in = c_out
        widths = [c_in, *arch.attention_widths, 1]
        for i in range(3):
            shapes[f"assembler.attention.conv{i + 1}.weight"] = (widths[i + 1], widths[i])
            shapes[f"assembler.attention.conv{i + 1}.bias"] = (widths[i + 1],)
        shapes["assembler.netvlad.centers"] = (arch.clusters, c_in)
        shapes["assembler.netvlad.assign_weight"] = (arch.clusters, c_in)
        shapes["assembler.netvlad.assign_bias"] = (arch.clusters,)
        shapes["assembler.fc.weight"] = (arch.global_dim, arch.clusters * c_in)
    else:
        shapes["assembler.fc.weight"] = (arch.global_dim, d)
    shapes["assembler.fc.bias"] = (arch.global_dim,)
    return shapes


class ModelParams:
    """All network parameters plus the architecture they instantiate."""

    def __init__(self, arch: ArchitectureConfig, arrays: dict[str, np.ndarray], dtype=np.float32):
        expected = architecture_shapes(arch)
        missing = sorted(set(expected) - set(arrays))
        unknown = sorted(set(arrays) - set(expected))
        if missing or unknown:
            raise InvalidArgumentError(f"parameter set mismatch: missing={missing}, unknown={unknown}")
        for name, shape in expected.items():
            if tuple(arrays[name].shape) != shape:
                raise InvalidArgumentError(f"parameter {name} has shape {arrays[name].shape}, expected {shape}")
        self.arch = arch
        self.dtype = np.dtype(dtype)
        self.arrays = {name: np.array(arrays[name], dtype=self.dtype) for name in expected}

    @classmethod
    def initialize(cls, arch: ArchitectureConfig, seed: int = 0, dtype=np.float32) -> "ModelParams":
        rng = np.random.default_rng(seed)
        arrays = {}
        for name, shape in architecture_shapes(arch).items():
            leaf = name.rsplit(".", 1)[-1]
            if leaf in ("bias", "reduce_bias", "assign_bias"):
                arrays[name] = np.zeros(shape)
            elif leaf == "expand_bias":
                # Gates start open (sigmoid(2) ≈ 0.88) so SE does not damp early training.
                arrays[name] = np.full(shape, 2.0)
            elif leaf == "theta":
                fan_in = int(np.prod(shape[1:]))
                arrays[name] = _normal(rng, shape, 1.0 / np.sqrt(fan_in))
            elif leaf == "theta_b":
                fan_in = shape[1] if len(shape) > 1 else 1
                k = arch.projection_k if name.startswith("assembler") else max(arch.flex_k)
                arrays[name] = _normal(rng, shape, np.sqrt(2.0 / (fan_in * k)))
            elif leaf == "centers":
                centers = _normal(rng, shape, 1.0)
                arrays[name] = centers / np.linalg.norm(centers, axis=1, keepdims=True)
            elif leaf == "assign_weight":
                arrays[name] = _normal(rng, shape, 1.0 / np.sqrt(shape[1]))
            else:
                arrays[name] = _normal(rng, shape, np.sqrt(2.0 / shape[-1]))
        return cls(arch, arrays, dtype=dtype)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def __setitem__(self, name: str, value: np.ndarray):
        if name not in self.arrays:
            raise KeyError(name)
        self.arrays[name] = np.asarray(value, dtype=self.dtype).reshape(self.arrays[name].shape)

    def __iter__(self) -> Iterator[str]:
        return iter(self.arrays)

    def __len__(self):
        return len(self.arrays)

    def names(self, prefix: str = "") -> list[str]:
        return [name for name in self.arrays if name.startswith(prefix)]

    def items(self):
        return self.arrays.items()

    def copy(self) -> "ModelParams":
        return ModelParams(self.arch, {k: v.copy() for k, v in self.arrays.items()}, dtype=self.dtype)

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(self.arch, self.arrays, dtype=dtype)

    def digest(self, prefix: str = "") -> str:
        """SHA-256 over names, shapes and raw bytes of parameters under ``prefix``."""
        h = hashlib.sha256()
        for name in self.names(prefix):
            arr = np.ascontiguousarray(self.arrays[name])
            h.update(name.encode())
            h.update(str(arr.shape).encode())
            h.update(arr.tobytes())
        return h.hexdigest()

    # -- typed views ---------------------------------------------------------------------

    def flex(self, prefix: str, k: int, dilation: int = 1) -> FlexConvParams:
        return FlexConvParams(
            theta=self.arrays[f"{prefix}.theta"],
            theta_b=self.arrays[f"{prefix}.theta_b"],
            k=k,
            dilation=dilation,
            depthwise=self.arrays[f"{prefix}.theta"].ndim == 2,
        )

    def se(self, prefix: str) -> SEParams | None:
        if f"{prefix}.reduce_weight" not in self.arrays:
            return None
        return SEParams(
            reduce_weight=self.arrays[f"{prefix}.reduce_weight"],
            reduce_bias=self.arrays[f"{prefix}.reduce_bias"],
            expand_weight=self.arrays[f"{prefix}.expand_weight"],
            expand_bias=self.arrays[f"{prefix}.expand_bias"],
        )

    def mlp(self, prefix: str, layers: int) -> list[tuple[np.ndarray, np.ndarray]]:
        return [
            (self.arrays[f"{prefix}.conv{i}.weight"], self.arrays[f"{prefix}.conv{i}.bias"])
            for i in range(1, layers + 1)
        ]
