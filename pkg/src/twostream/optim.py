"""RMSprop and SGD-with-halving, the two optimizers used by the training loops.

Both operate on ordered name->array parameter dicts and update in place; the
training loop is the single owner of optimizer state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError


@dataclass
class RmspropState:
    """Squared-gradient accumulators plus hyperparameters (defaults: learning
    rate 0.001, decay 0.9, momentum 0)."""

    learning_rate: float = 0.001
    decay: float = 0.9
    momentum: float = 0.0
    epsilon: float = 1e-8  # inside the root; unrelated to batchnorm's epsilon
    acc: dict = field(default_factory=dict)
    vel: dict = field(default_factory=dict)


def rmsprop_step(state: RmspropState, params: dict, grads: dict) -> dict:
    """acc <- decay*acc + (1-decay)*g^2 ; p <- p - lr * g / sqrt(acc + eps).

    With nonzero momentum the scaled step accumulates into a velocity buffer
    first. Updates params in place and returns them.
    """
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise DimensionError(f"grad shape {g.shape} != param shape {p.shape} for {name!r}")
        acc = state.acc.get(name)
        if acc is None:
            acc = state.acc[name] = np.zeros_like(p)
        acc *= state.decay
        acc += (1.0 - state.decay) * g * g
        step = state.learning_rate * g / np.sqrt(acc + state.epsilon)
        if state.momentum != 0.0:
            vel = state.vel.get(name)
            if vel is None:
                vel = state.vel[name] = np.zeros_like(p)
            vel *= state.momentum
            vel += step
            step = vel
        p -= step
    return params


@dataclass
class SgdHalvingState:
    """Plain SGD whose learning rate halves after `patience` evaluations in a
    row without validation improvement."""

    learning_rate: float = 0.0001
    patience: int = 3
    bad_evals: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning rate must be positive, got {self.learning_rate}")


def sgd_halving_step(state: SgdHalvingState, params: dict, grads: dict, improved=None) -> dict:
    """p <- p - lr * g. `improved` is the validation signal: True/False when an
    evaluation just happened, None otherwise."""
    if improved is True:
        state.bad_evals = 0
    elif improved is False:
        state.bad_evals += 1
        if state.bad_evals >= state.patience:
            state.learning_rate *= 0.5
            state.bad_evals = 0
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise DimensionError(f"grad shape {g.shape} != param shape {p.shape} for {name!r}")
        p -= state.learning_rate * g
    return params
