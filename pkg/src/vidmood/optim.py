"""Optimizers, learning-rate schedules, and early stopping."""

from __future__ import annotations

import math

import numpy as np

from .nn import Module, Parameter

__all__ = ["Adam", "AdamW", "PlateauSchedule", "CosineSchedule", "EarlyStopper"]


class Adam:
    """Adam with bias correction; a missing gradient counts as zero."""

    def __init__(self, params: list[Parameter], lr: float,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = float(lr)
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.data, dtype=np.float64) for p in self.params]
        self._v = [np.zeros_like(p.data, dtype=np.float64) for p in self.params]

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad if p.grad is not None else 0.0
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            self._decay(p)
            p.data = p.data - (self.lr * update).astype(p.data.dtype, copy=False)

    def _decay(self, p: Parameter) -> None:
        pass


class AdamW(Adam):
    """Adam plus decoupled weight decay applied directly to the parameter."""

    def __init__(self, params, lr, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01):
        super().__init__(params, lr, betas, eps)
        self.weight_decay = weight_decay

    def _decay(self, p: Parameter) -> None:
        p.data = p.data - (self.lr * self.weight_decay) * p.data


class PlateauSchedule:
    """Multiply lr by `factor` after `patience` consecutive non-improving
    epochs (improvement = drop below best by more than `min_improve`)."""

    def __init__(self, optimizer, factor: float = 0.1, patience: int = 5,
                 min_improve: float = 1e-4):
        self.optimizer = optimizer
        self.factor = factor
        self.patience = patience
        self.min_improve = min_improve
        self.best = math.inf
        self.stale = 0

    def step(self, val_loss: float) -> float:
        if val_loss < self.best - self.min_improve:
            self.best = val_loss
            self.stale = 0
        else:
            self.stale += 1
            if self.stale >= self.patience:
                self.optimizer.lr *= self.factor
                self.stale = 0
        return self.optimizer.lr


class CosineSchedule:
    """lr(e) = lr0 * 0.5 * (1 + cos(pi * e / max_epochs)) for epoch index e."""

    def __init__(self, optimizer, max_epochs: int):
        self.optimizer = optimizer
        self.lr0 = optimizer.lr
        self.max_epochs = max_epochs

    def lr_at(self, epoch: int) -> float:
        return self.lr0 * 0.5 * (1.0 + math.cos(math.pi * epoch / self.max_epochs))

    def step(self, epoch: int) -> float:
        self.optimizer.lr = self.lr_at(epoch)
        return self.optimizer.lr


class EarlyStopper:
    """Stop after `patience` consecutive epochs without val-loss improvement;
    keeps a copy of the best-epoch weights for restoring."""

    def __init__(self, patience: int = 10, min_improve: float = 1e-4):
        self.patience = patience
        self.min_improve = min_improve
        self.best = math.inf
        self.best_epoch = 0
        self.best_state: dict[str, np.ndarray] | None = None
        self.stale = 0

    def update(self, epoch: int, val_loss: float, model: Module) -> bool:
        """Record epoch `epoch` (1-based); True means training should stop."""
        if val_loss < self.best - self.min_improve:
            self.best = val_loss
            self.best_epoch = epoch
            self.best_state = model.state_dict()
            self.stale = 0
            return False
        self.stale += 1
        return self.stale >= self.patience

    def restore(self, model: Module) -> None:
        if self.best_state is not None:
            model.load_state_dict(self.best_state)
