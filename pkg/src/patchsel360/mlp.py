"""Per-patch quality regression: a two-layer MLP trained with MSE.

Architecture is fixed: hidden layer of 512 ReLU units, linear scalar
output. Training is plain minibatch gradient descent (Adam or SGD with
momentum) on numpy arrays, deterministic under a fixed seed.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, InputError, ShapeError
from .rng import substream

HIDDEN_UNITS = 512

ADAM = "adam"
SGD_MOMENTUM = "sgd-momentum"


@dataclass
class MlpModel:
    """Weights of the two-layer regression head."""

    w1: np.ndarray  # (c, 512)
    b1: np.ndarray  # (512,)
    w2: np.ndarray  # (512,)
    b2: float
    rng_seed: int = 0

    @property
    def input_dim(self):
        return self.w1.shape[0]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 32
    epochs: int = 50
    optimizer: str = ADAM
    seed: int = 0
    momentum: float = 0.9  # SGD only
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate < 0:
            raise InputError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise InputError("batch_size must be >= 1")
        if self.optimizer not in (ADAM, SGD_MOMENTUM):
            raise InputError(f"unknown optimizer {self.optimizer!r}")


def init_model(input_dim, seed=0, hidden=HIDDEN_UNITS):
    """He-normal initialization from the 'init' substream of ``seed``."""
    if input_dim < 1:
        raise InputError("input_dim must be >= 1")
    rng = substream(seed, "init")
    w1 = rng.normal(0.0, np.sqrt(2.0 / input_dim), size=(input_dim, hidden))
    w2 = rng.normal(0.0, np.sqrt(2.0 / hidden), size=hidden)
    return MlpModel(w1=w1, b1=np.zeros(hidden), w2=w2, b2=0.0, rng_seed=seed)


def mlp_forward(model, e):
    """Predicted score(s): linear(ReLU(W1 e + b1)) + b2.

    Accepts a single embedding (c,) or a batch (m, c).
    """
    e = np.asarray(e, dtype=np.float64)
    single = e.ndim == 1
    batch = e.reshape(1, -1) if single else e
    if batch.shape[1] != model.input_dim:
        raise ShapeError(
            f"embedding length {batch.shape[1]} != model input {model.input_dim}"
        )
    hidden = np.maximum(batch @ model.w1 + model.b1, 0.0)
    out = hidden @ model.w2 + model.b2
    return float(out[0]) if single else out


def _gradients(model, x, y):
    """MSE gradients for one minibatch; returns (loss, dw1, db1, dw2, db2)."""
    b = x.shape[0]
    hidden_pre = x @ model.w1 + model.b1
    hidden = np.maximum(hidden_pre, 0.0)
    pred = hidden @ model.w2 + model.b2
    err = pred - y
    loss = float(np.mean(err**2))

    dpred = 2.0 * err / b
    dw2 = hidden.T @ dpred
    db2 = float(dpred.sum())
    dhidden = np.outer(dpred, model.w2)
    dhidden[hidden_pre <= 0] = 0.0
    dw1 = x.T @ dhidden
    db1 = dhidden.sum(axis=0)
    return loss, dw1, db1, dw2, db2


def mlp_train(model, embeddings, labels, cfg):
    """Train in place on (embeddings, per-patch labels); returns loss curve.

    Labels are the parent image's MOS repeated per patch. The minibatch
    shuffle stream and the init stream both derive from ``cfg.seed``, so
    runs are reproducible.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ShapeError("embeddings (m, c) and labels (m,) must align")
    if x.shape[0] < 1:
        raise InputError("need at least one training sample")
    if not np.all(np.isfinite(y)):
        raise InputError("labels must be finite")

    m = x.shape[0]
    rng = substream(cfg.seed, "shuffle")
    params = [model.w1, model.b1, model.w2]  # b2 handled as scalar below

    if cfg.optimizer == ADAM:
        mom1 = [np.zeros_like(p) for p in params] + [0.0]
        mom2 = [np.zeros_like(p) for p in params] + [0.0]
    else:
        vel = [np.zeros_like(p) for p in params] + [0.0]

    losses = []
    step = 0
    for _epoch in range(cfg.epochs):
        order = rng.permutation(m)
        for start in range(0, m, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, dw1, db1, dw2, db2 = _gradients(model, x[idx], y[idx])
            step += 1
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"loss became non-finite at step {step}", step=step
                )
            losses.append(loss)
            grads = [dw1, db1, dw2, db2]
            if cfg.optimizer == ADAM:
                lr_t = cfg.learning_rate * (
                    np.sqrt(1.0 - cfg.adam_beta2**step)
                    / (1.0 - cfg.adam_beta1**step)
                )
                for i, g in enumerate(grads):
                    mom1[i] = cfg.adam_beta1 * mom1[i] + (1 - cfg.adam_beta1) * g
                    mom2[i] = cfg.adam_beta2 * mom2[i] + (1 - cfg.adam_beta2) * np.square(g)
                    update = lr_t * mom1[i] / (np.sqrt(mom2[i]) + cfg.adam_eps)
                    if i < 3:
                        params[i] -= update
                    else:
                        model.b2 -= float(update)
            else:
                for i, g in enumerate(grads):
                    vel[i] = cfg.momentum * vel[i] - cfg.learning_rate * g
                    if i < 3:
                        params[i] += vel[i]
                    else:
                        model.b2 += float(vel[i])
    for name, p in (("w1", model.w1), ("b1", model.b1), ("w2", model.w2)):
        if not np.all(np.isfinite(p)):
            raise DivergenceError(f"parameter {name} became non-finite", step=step)
    return losses


#: Guard against the median weight 1 / |pmos_i - median| dividing by zero.
POOL_EPSILON = 1e-6


def pool_scores(patch_scores, epsilon=POOL_EPSILON):
    """Median-consistency pooling of per-patch scores into one value.

    Weighted arithmetic mean with w_i = 1 / (|pmos_i - median| + eps);
    scores at the median dominate.
    """
    s = np.asarray(patch_scores, dtype=np.float64)
    if s.ndim != 1 or s.size == 0:
        raise InputError("patch_scores must be a non-empty 1-D sequence")
    med = float(np.median(s))
    w = 1.0 / (np.abs(s - med) + epsilon)
    return float((w * s).sum() / w.sum())
