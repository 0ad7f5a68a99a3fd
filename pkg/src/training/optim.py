"""Adam with bias correction over a named-parameter mapping."""

from collections.abc import Mapping, MutableMapping
from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericError

DEFAULT_BETA1 = 0.9
DEFAULT_BETA2 = 0.999
DEFAULT_EPS = 1e-8


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = DEFAULT_BETA1
    beta2: float = DEFAULT_BETA2
    eps: float = DEFAULT_EPS
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: MutableMapping[str, np.ndarray], grads: Mapping[str, np.ndarray], state: AdamState):
    """Updates ``params`` in place for every name in ``grads`` and advances the step.

    Gradients are validated before any parameter is written, so a
    non-finite gradient leaves both parameters and state untouched.
    """
    for name, g in grads.items():
        if np.shape(g) != np.shape(params[name]):
            raise NumericError(f"gradient shape {np.shape(g)} does not match {np.shape(params[name])}", parameter=name)
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient", parameter=name)

    state.step += 1
    t = state.step
    correction1 = 1.0 - state.beta1**t
    correction2 = 1.0 - state.beta2**t
    for name, g in grads.items():
        g = np.asarray(g, dtype=np.float64)
        m = state.m.get(name)
        v = state.v.get(name)
        m = (1.0 - state.beta1) * g if m is None else state.beta1 * m + (1.0 - state.beta1) * g
        v = (1.0 - state.beta2) * g * g if v is None else state.beta2 * v + (1.0 - state.beta2) * g * g
        state.m[name] = m
        state.v[name] = v
        update = state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        params[name] = params[name] - update
    return params, state
