"""Feed-forward regressor: ``blocks`` x (dense -> batch norm -> ELU) followed
by a sigmoid output unit, trained with Nesterov momentum, a cyclical
learning rate, L2 weight decay and early stopping.

Everything is float64 numpy with hand-written backpropagation.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .features import TargetTransform, inverse_transform

logger = logging.getLogger(__name__)

TRAIN = "train"
INFER = "infer"


class TrainingDivergedError(FloatingPointError):
    def __init__(self, message: str, batch_index: int | None = None):
        super().__init__(message)
        self.batch_index = batch_index


@dataclass(frozen=True)
class MLPConfig:
    input_dim: int = 50
    blocks: int = 10
    block_width: int = 512
    l2_lambda: float = 0.01
    bn_momentum: float = 0.99
    bn_eps: float = 1e-8

    def __post_init__(self):
        if self.blocks < 1 or self.block_width < 1 or self.input_dim < 1:
            raise ValueError("blocks, block_width and input_dim must be positive")
        if self.l2_lambda < 0:
            raise ValueError("l2_lambda must be non-negative")


@dataclass(frozen=True)
class TrainConfig:
    lr_min: float = 1e-4
    lr_max: float = 1e-2
    lr_step_size: int = 50
    lr_decay_gamma: float = 0.9999
    momentum: float = 0.9
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 10
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.lr_min <= self.lr_max:
            raise ValueError("need 0 < lr_min <= lr_max")
        if self.patience < 1 or self.batch_size < 2 or self.lr_step_size < 1:
            raise ValueError("patience >= 1, batch_size >= 2 and lr_step_size >= 1 required")


@dataclass
class MLPParams:
    """Trainable tensors in ``weights``; batch-norm running statistics in
    ``stats``.  Tensor names: ``dense{k}.weight``, ``dense{k}.bias``,
    ``bn{k}.gain``, ``bn{k}.shift``, ``out.weight``, ``out.bias`` and
    ``bn{k}.running_mean`` / ``bn{k}.running_var``."""

    weights: dict[str, np.ndarray]
    stats: dict[str, np.ndarray]

    def copy(self) -> "MLPParams":
        return MLPParams(
            {k: v.copy() for k, v in self.weights.items()},
            {k: v.copy() for k, v in self.stats.items()},
        )

    def tensors(self) -> dict[str, np.ndarray]:
        return {**self.weights, **self.stats}

    @property
    def n_blocks(self) -> int:
        return sum(1 for k in self.weights if k.endswith(".gain"))


def penalized_names(params_or_weights) -> list[str]:
    """Fully connected weight matrices, the tensors that carry L2."""
    names = params_or_weights.weights if isinstance(params_or_weights, MLPParams) else params_or_weights
    return [k for k in names if k.endswith(".weight")]


def init_params(config: MLPConfig, rng: np.random.Generator) -> MLPParams:
    """He-normal weights, zero biases, identity batch norm."""
    weights, stats = {}, {}
    fan_in = config.input_dim
    for k in range(config.blocks):
        width = config.block_width
        weights[f"dense{k}.weight"] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, width))
        weights[f"dense{k}.bias"] = np.zeros(width)
        weights[f"bn{k}.gain"] = np.ones(width)
        weights[f"bn{k}.shift"] = np.zeros(width)
        stats[f"bn{k}.running_mean"] = np.zeros(width)
        stats[f"bn{k}.running_var"] = np.ones(width)
        fan_in = width
    weights["out.weight"] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=fan_in)
    weights["out.bias"] = np.zeros(1)
    return MLPParams(weights, stats)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def forward(params: MLPParams, batch: np.ndarray, mode: str = INFER, eps: float = 1e-8):
    """Predictions in (0, 1) for each row of ``batch``.

    Returns ``(pred, cache)``; ``cache`` holds the intermediates needed by
    :func:`backward` and the batch statistics (Train mode only, else None).
    """
    w = params.weights
    h = np.asarray(batch, dtype=np.float64)
    if h.ndim == 1:
        h = h[None, :]
    n = h.shape[0]
    if mode == TRAIN and n < 2:
        raise ValueError("batch statistics need at least 2 rows in train mode")
    if h.shape[1] != w["dense0.weight"].shape[0]:
        raise ValueError(f"expected {w['dense0.weight'].shape[0]} inputs, got {h.shape[1]}")
    layers = []
    for k in range(params.n_blocks):
        h_in = h
        z = h @ w[f"dense{k}.weight"]
        z += w[f"dense{k}.bias"]
        if mode == TRAIN:
            mu = np.add.reduce(z, axis=0) / n
            d = z - mu
            var = np.add.reduce(d * d, axis=0) / n
        else:
            mu = params.stats[f"bn{k}.running_mean"]
            var = params.stats[f"bn{k}.running_var"]
            d = z - mu
        inv_std = 1.0 / np.sqrt(var + eps)
        zhat = d * inv_std
        y = zhat * w[f"bn{k}.gain"]
        y += w[f"bn{k}.shift"]
        # ELU; exp(min(y, 0)) doubles as its derivative
        slope = np.exp(np.minimum(y, 0.0))
        positive = y > 0
        h = np.where(positive, y, slope - 1.0)
        if mode == TRAIN:
            slope[positive] = 1.0
            layers.append((h_in, zhat, inv_std, slope, mu, var))
    logit = h @ w["out.weight"] + w["out.bias"][0]
    pred = _sigmoid(logit)
    if mode != TRAIN:
        return pred, None
    return pred, {"layers": layers, "top": h, "pred": pred}


def backward(params: MLPParams, cache: dict, dpred: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss w.r.t. every trainable tensor given
    ``dpred`` = dloss/dpred (data term only)."""
    w = params.weights
    grads = {}
    pred = cache["pred"]
    dlogit = dpred * pred * (1.0 - pred)
    grads["out.weight"] = cache["top"].T @ dlogit
    grads["out.bias"] = np.array([dlogit.sum()])
    dh = np.outer(dlogit, w["out.weight"])
    for k in reversed(range(params.n_blocks)):
        h_in, zhat, inv_std, slope, _, _ = cache["layers"][k]
        n = zhat.shape[0]
        dy = dh * slope
        dgain = np.add.reduce(dy * zhat, axis=0)
        dshift = np.add.reduce(dy, axis=0)
        grads[f"bn{k}.gain"] = dgain
        grads[f"bn{k}.shift"] = dshift
        # batch-norm backward with the batch sums folded in
        dz = dy - dshift / n
        dz -= zhat * (dgain / n)
        dz *= w[f"bn{k}.gain"] * inv_std
        grads[f"dense{k}.weight"] = h_in.T @ dz
        grads[f"dense{k}.bias"] = np.add.reduce(dz, axis=0)
        if k > 0:
            dh = dz @ w[f"dense{k}.weight"].T
    return grads


def l2_penalty(params: MLPParams, l2_lambda: float) -> float:
    return l2_lambda * sum(float(np.sum(params.weights[k] ** 2)) for k in penalized_names(params))


def loss_and_gradients(
    params: MLPParams,
    batch: np.ndarray,
    targets: np.ndarray,
    l2_lambda: float = 0.01,
    eps: float = 1e-8,
    batch_index: int | None = None,
):
    """Mean squared error plus ``l2_lambda`` times the summed squared
    weights, and its gradients.  Also returns the forward cache (for the
    batch-norm statistics)."""
    pred, cache = forward(params, batch, TRAIN, eps)
    resid = pred - targets
    mse = float(np.mean(resid**2))
    loss = mse + l2_penalty(params, l2_lambda)
    if not np.isfinite(loss):
        raise TrainingDivergedError(f"non-finite loss at batch {batch_index}", batch_index)
    grads = backward(params, cache, 2.0 * resid / resid.shape[0])
    for k in penalized_names(params):
        grads[k] = grads[k] + 2.0 * l2_lambda * params.weights[k]
    return loss, grads, cache


def cyclical_lr(iteration: int, t: TrainConfig) -> float:
    """Triangular cycle between ``lr_min`` and ``lr_max`` with an
    exponentially decaying amplitude ("exp_range"); starts at ``lr_min``."""
    if iteration < 0:
        raise ValueError("iteration must be non-negative")
    cycle = np.floor(1 + iteration / (2 * t.lr_step_size))
    x = abs(iteration / t.lr_step_size - 2 * cycle + 1)
    return float(t.lr_min + (t.lr_max - t.lr_min) * max(0.0, 1 - x) * t.lr_decay_gamma**iteration)


def nag_step(
    theta: np.ndarray,
    velocity: np.ndarray,
    grad_at: Callable[[np.ndarray], np.ndarray],
    lr: float,
    momentum: float,
) -> None:
    """One in-place Nesterov update of the flat parameter vector ``theta``;
    the gradient is taken at the look-ahead point ``theta + momentum * v``."""
    grads = grad_at(theta + momentum * velocity)
    velocity *= momentum
    velocity -= lr * grads
    theta += velocity


class FlatLayout:
    """Maps named tensors to slices of one contiguous vector."""

    def __init__(self, tensors: dict[str, np.ndarray]):
        self.names = list(tensors)
        self.shapes = [tensors[k].shape for k in self.names]
        sizes = [int(np.prod(sh, dtype=np.int64)) for sh in self.shapes]
        self.bounds = np.cumsum([0] + sizes)

    def pack(self, tensors: dict[str, np.ndarray]) -> np.ndarray:
        return np.concatenate([np.ravel(tensors[k]) for k in self.names])

    def views(self, vec: np.ndarray) -> dict[str, np.ndarray]:
        b = self.bounds
        return {k: vec[b[i] : b[i + 1]].reshape(sh) for i, (k, sh) in enumerate(zip(self.names, self.shapes))}


class EarlyStopping:
    """Stops after ``patience`` consecutive epochs of rising validation
    loss and remembers the best snapshot seen."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best_loss = np.inf
        self.best_epoch = -1
        self.best_state = None
        self.rises = 0
        self._previous = np.inf

    def update(self, epoch: int, val_loss: float, snapshot: Callable[[], object]) -> bool:
        if val_loss < self.best_loss:
            self.best_loss, self.best_epoch, self.best_state = val_loss, epoch, snapshot()
        self.rises = self.rises + 1 if val_loss > self._previous else 0
        self._previous = val_loss
        return self.rises >= self.patience


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    best_epoch: int = -1
    stopped_early: bool = False


def mse(params: MLPParams, X: np.ndarray, y: np.ndarray, eps: float = 1e-8) -> float:
    pred, _ = forward(params, X, INFER, eps)
    return float(np.mean((pred - y) ** 2))


def train(
    train_set: tuple[np.ndarray, np.ndarray],
    val_set: tuple[np.ndarray, np.ndarray],
    mconfig: MLPConfig,
    tconfig: TrainConfig,
    params: MLPParams | None = None,
) -> tuple[MLPParams, TrainHistory]:
    """Fit on ``train_set = (scores, transformed targets)``; return the
    parameters with the lowest validation MSE and the training history."""
    X, y = (np.asarray(a, dtype=np.float64) for a in train_set)
    Xv, yv = (np.asarray(a, dtype=np.float64) for a in val_set)
    if len(X) < 2 or len(Xv) == 0:
        raise ValueError("need at least 2 training rows and 1 validation row")
    rng = np.random.default_rng(tconfig.seed)
    if params is None:
        params = init_params(mconfig, rng)
    else:
        params = params.copy()
    layout = FlatLayout(params.weights)
    theta = layout.pack(params.weights)
    velocity = np.zeros_like(theta)
    params.weights = layout.views(theta)
    stopper = EarlyStopping(tconfig.patience)
    history = TrainHistory()
    mom, eps = mconfig.bn_momentum, mconfig.bn_eps
    iteration = 0
    n = len(X)
    bs = tconfig.batch_size

    for epoch in range(tconfig.max_epochs):
        order = rng.permutation(n)
        losses = []
        for b, start in enumerate(range(0, n, bs)):
            idx = order[start : start + bs]
            if len(idx) < 2:
                continue
            xb, yb = X[idx], y[idx]
            lr = cyclical_lr(iteration, tconfig)
            seen = {}

            def grad_at(look, xb=xb, yb=yb, b=b):
                loss, grads, cache = loss_and_gradients(
                    MLPParams(layout.views(look), params.stats), xb, yb, mconfig.l2_lambda, eps, batch_index=b
                )
                seen["loss"], seen["cache"] = loss, cache
                return layout.pack(grads)

            nag_step(theta, velocity, grad_at, lr, tconfig.momentum)
            for k, (*_, mu, var) in enumerate(seen["cache"]["layers"]):
                rm, rv = params.stats[f"bn{k}.running_mean"], params.stats[f"bn{k}.running_var"]
                rm *= mom
                rm += (1 - mom) * mu
                rv *= mom
                rv += (1 - mom) * var
            losses.append(seen["loss"])
            history.lr.append(lr)
            iteration += 1
        val = mse(params, Xv, yv, eps)
        if not np.isfinite(val):
            raise TrainingDivergedError(f"non-finite validation loss at epoch {epoch}")
        history.train_loss.append(float(np.mean(losses)))
        history.val_loss.append(val)
        if stopper.update(epoch, val, params.copy):
            history.stopped_early = True
            break
    history.best_epoch = stopper.best_epoch
    return stopper.best_state, history


def predict(
    params: MLPParams | None,
    scores: np.ndarray,
    transform: TargetTransform,
    eps: float = 1e-8,
    constant: float | None = None,
):
    """Input coefficient(s) for one score vector or a matrix of them.

    ``constant`` short-circuits the network for coefficients that never
    varied in training.
    """
    scores = np.asarray(scores, dtype=np.float64)
    single = scores.ndim == 1
    if constant is not None or params is None:
        value = transform.a_L if constant is None else constant
        out = np.full(1 if single else len(scores), float(value))
    else:
        pred, _ = forward(params, scores, INFER, eps)
        out = inverse_transform(pred, transform)
    return float(out[0]) if single else out
