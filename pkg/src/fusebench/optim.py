"""Adam optimizer and a reduce-on-plateau learning-rate scheduler.

The scheduler monitors a higher-is-better metric (validation AUC): when the
metric fails to improve for more than ``patience`` consecutive steps, the
learning rate is multiplied by ``factor`` and the counter resets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autograd import Tensor


class Adam:
    """Standard Adam with bias correction over a fixed parameter list.

    State (first/second moments, step counter) is keyed by parameter
    position; parameters with a ``None`` gradient are skipped for the step,
    which leaves them (and their moments) exactly unchanged.
    """

    def __init__(self, params, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError(f"lr must be positive, got {lr}")
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                # zero gradient: moments decay but the update is exactly 0,
                # so skipping leaves the parameter (and future steps) identical
                continue
            if g.shape != p.data.shape:
                raise ValueError(
                    f"gradient shape {g.shape} does not match parameter {p.data.shape}"
                )
            m, v = self.m[i], self.v[i]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            denom = np.sqrt(v / bc2)
            denom += self.eps
            update = m / (bc1 / self.lr)
            update /= denom
            p.data -= update


@dataclass
class PlateauScheduler:
    """Halve-style LR reduction once a metric plateaus past ``patience``.

    ``step`` is called once per epoch with the epoch's validation metric
    (higher is better) and returns the learning rate to use next. An
    improvement must exceed ``min_delta`` strictly.
    """

    lr: float
    patience: int = 2
    factor: float = 0.5
    min_delta: float = 0.0
    best_metric: float = field(default=-np.inf)
    epochs_since_improvement: int = 0

    def __post_init__(self):
        if not 0.0 < self.factor < 1.0:
            raise ValueError(f"factor must be in (0, 1), got {self.factor}")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")

    def step(self, metric: float) -> float:
        if metric > self.best_metric + self.min_delta:
            self.best_metric = metric
            self.epochs_since_improvement = 0
        else:
            self.epochs_since_improvement += 1
            if self.epochs_since_improvement > self.patience:
                self.lr *= self.factor
                self.epochs_since_improvement = 0
        return self.lr
