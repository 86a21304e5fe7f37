"""
Adam and the reduce-on-plateau learning-rate rule.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from lift.errors import ConfigError, NonFiniteError

logger = logging.getLogger("lift.optim")

BETA1 = 0.9
BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class AdamState:
    """First/second moment estimates and the step counter."""

    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def zeros_like(cls, params: Mapping[str, np.ndarray]) -> AdamState:
        return cls(
            step=0,
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    lr: float,
    weight_decay: float = 0.0,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """
    One bias-corrected Adam update (β1=0.9, β2=0.999, eps=1e-8).

    ``weight_decay`` adds ``weight_decay·p`` to each gradient. Inputs are
    not modified.

    Raises:
        NonFiniteError: Naming the first parameter with a NaN/Inf gradient.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(
                f"gradient of {name!r} is not finite", operation="adam_step", argument=name
            )
    step = state.step + 1
    c1 = 1.0 - BETA1**step
    c2 = 1.0 - BETA2**step
    new_params: dict[str, np.ndarray] = {}
    new_m: dict[str, np.ndarray] = {}
    new_v: dict[str, np.ndarray] = {}
    for name, p in params.items():
        g = grads.get(name)
        m_prev = state.m.get(name)
        v_prev = state.v.get(name)
        if m_prev is None:
            m_prev = np.zeros_like(p)
        if v_prev is None:
            v_prev = np.zeros_like(p)
        if g is None:
            g = np.zeros_like(p)
        if weight_decay:
            g = g + weight_decay * p
        m = BETA1 * m_prev + (1.0 - BETA1) * g
        v = BETA2 * v_prev + (1.0 - BETA2) * g * g
        update = lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
        new_params[name] = (p - update).astype(p.dtype)
        new_m[name] = m.astype(p.dtype)
        new_v[name] = v.astype(p.dtype)
    return new_params, AdamState(step=step, m=new_m, v=new_v)


@dataclass
class PlateauScheduler:
    """
    Multiply the learning rate by ``factor`` after ``patience`` epochs
    without a relative improvement of at least ``threshold``.

    The rate never drops below ``min_lr``; an improvement resets the count.
    """

    lr: float
    factor: float = 0.5
    patience: int = 10
    min_lr: float = 1e-6
    threshold: float = 1e-4
    best: float = math.inf
    bad_epochs: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.factor < 1.0:
            raise ConfigError(f"plateau factor must be in (0, 1), got {self.factor}")
        if self.patience < 1:
            raise ConfigError(f"plateau patience must be >= 1, got {self.patience}")
        if self.lr <= 0 or self.min_lr < 0:
            raise ConfigError("learning rates must be positive")

    def _improved(self, loss: float) -> bool:
        if math.isinf(self.best):
            return True
        return loss < self.best - self.threshold * abs(self.best)

    def step(self, loss: float) -> float:
        """Feed one epoch's loss; return the learning rate for the next epoch."""
        if not math.isfinite(loss):
            raise NonFiniteError(f"epoch loss is not finite: {loss}", operation="lr_plateau_step")
        if self._improved(loss):
            self.best = loss
            self.bad_epochs = 0
            return self.lr
        self.bad_epochs += 1
        if self.bad_epochs >= self.patience:
            new_lr = max(self.lr * self.factor, self.min_lr)
            if new_lr < self.lr:
                logger.info("reducing learning rate %.3g -> %.3g", self.lr, new_lr)
            self.lr = new_lr
            self.bad_epochs = 0
        return self.lr


def lr_plateau_step(state: PlateauScheduler, epoch_loss: float) -> float:
    """Functional alias of ``PlateauScheduler.step``."""
    return state.step(epoch_loss)
