"""Imitation training: Adam on candidate-masked cross-entropy.

Plateau handling: the learning rate decays by 0.2 after 10 epochs without a
validation improvement and training stops after 20; the returned parameters
are the best-validation snapshot.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gcnn import GcnnParams, batch_loss, fit_prenorm, loss_and_grads


@dataclass
class TrainConfig:
    batch_size: int = 64
    lr: float = 0.001
    plateau_patience: int = 10
    plateau_factor: float = 0.2
    early_stop: int = 20
    max_epochs: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be positive")
        if self.lr < 0:
            raise ValueError("lr must be nonnegative")
        if self.plateau_patience < 1 or self.early_stop < 1:
            raise ValueError("patience values must be positive")


class Adam:
    def __init__(self, params: GcnnParams, lr: float,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.tensors.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.tensors.items()}

    def step(self, params: GcnnParams, grads: dict):
        self.t += 1
        b1t = 1.0 - self.b1**self.t
        b2t = 1.0 - self.b2**self.t
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            mhat = self.m[k] / b1t
            vhat = self.v[k] / b2t
            params.tensors[k] -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    valid_loss: float
    lr: float
    topk: dict = field(default_factory=dict)


def train(dataset, params: GcnnParams, config: TrainConfig):
    """Fit ``params`` on the dataset's train split; returns (params, history).

    ``dataset`` provides ``train_samples()`` and ``valid_samples()``. The
    prenorm standardization is fitted once on the train split before the
    first update.
    """
    from .datagen import top_k_accuracy

    train_samples = list(dataset.train_samples())
    valid_samples = list(dataset.valid_samples())
    if len(train_samples) < config.batch_size:
        raise ValueError(
            f"train split ({len(train_samples)}) is smaller than one batch "
            f"({config.batch_size})"
        )
    if not valid_samples:
        raise ValueError("validation split is empty")

    fit_prenorm(params, [s.state for s in train_samples])
    opt = Adam(params, config.lr)
    rng = np.random.default_rng(config.seed)

    history: list[EpochRecord] = []
    best_valid = np.inf
    best_params = params.copy()
    stagnant = 0

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_samples))
        losses = []
        for start in range(0, len(order), config.batch_size):
            batch = [train_samples[i] for i in order[start:start + config.batch_size]]
            loss, grads = loss_and_grads(params, batch)
            opt.step(params, grads)
            losses.append(loss)
        valid_loss = batch_loss(params, valid_samples)
        topk = top_k_accuracy(params, valid_samples, ks=(1, 3, 5, 10))
        history.append(EpochRecord(
            epoch=epoch,
            train_loss=float(np.mean(losses)),
            valid_loss=valid_loss,
            lr=opt.lr,
            topk=topk,
        ))
        if valid_loss < best_valid:
            best_valid = valid_loss
            best_params = params.copy()
            stagnant = 0
        else:
            stagnant += 1
            if stagnant >= config.early_stop:
                break
            if stagnant % config.plateau_patience == 0:
                opt.lr *= config.plateau_factor
    return best_params, history
