"""Single-hidden-layer classifier written directly against numpy.

Architecture::

    input -> dense -> ReLU -> batchnorm -> dropout -> dense -> softmax(2)

Loss is mean categorical cross-entropy plus ``l2_factor`` times the squared
Frobenius norm of both dense kernels.  Optimisation is mini-batch Adam with
early stopping on a held-out slice of the training rows.

All parameters live in flat float64 arrays on :class:`NetworkState` so that a
state can be shipped between nodes as-is (see :mod:`collabqoe.transport`).
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np
from scipy.special import logsumexp

from .data import GroupDataset
from .errors import ConfigurationError, DataError, DivergenceError, ShapeError

N_CLASSES = 2
BN_EPS = 1e-3
BN_MOMENTUM = 0.9
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class ModelConfig:
    hidden_neurons: int = 16
    max_epochs: int = 400
    learning_rate: float = 0.001
    dropout_rate: float = 0.30
    l2_factor: float = 0.02
    early_stop_patience: int = 10
    batch_size: int = 32
    validation_fraction: float = 0.2

    def __post_init__(self):
        if self.hidden_neurons < 1:
            raise ConfigurationError(f"hidden_neurons must be >= 1, got {self.hidden_neurons}")
        if self.max_epochs < 1:
            raise ConfigurationError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if not self.learning_rate >= 0:
            raise ConfigurationError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigurationError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if not self.l2_factor >= 0:
            raise ConfigurationError(f"l2_factor must be >= 0, got {self.l2_factor}")
        if self.early_stop_patience < 1:
            raise ConfigurationError("early_stop_patience must be >= 1")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ConfigurationError("validation_fraction must lie in (0, 1)")

    @property
    def label(self) -> str:
        return f"NN({self.hidden_neurons}, {self.max_epochs})"


@dataclass(frozen=True, eq=False)
class NetworkState:
    """Flat parameter storage.

    ``weights`` holds each dense kernel row-major, layer after layer;
    ``biases`` the per-layer bias vectors; ``batchnorm_params`` is
    ``[scale, shift, running_mean, running_var]`` each of length hidden.
    """

    layer_shapes: tuple[tuple[int, int], ...]
    weights: np.ndarray
    biases: np.ndarray
    batchnorm_params: np.ndarray
    epoch_counter: int = 0

    def __post_init__(self):
        shapes = tuple((int(r), int(c)) for r, c in self.layer_shapes)
        object.__setattr__(self, "layer_shapes", shapes)
        if len(shapes) != 2 or shapes[0][1] != shapes[1][0] or shapes[1][1] != N_CLASSES:
            raise ShapeError(f"expected [(d, h), (h, {N_CLASSES})], got {list(shapes)}")
        for name in ("weights", "biases", "batchnorm_params"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        n_w = sum(r * c for r, c in shapes)
        n_b = sum(c for _, c in shapes)
        if self.weights.shape != (n_w,) or self.biases.shape != (n_b,):
            raise ShapeError(
                f"flat arrays {self.weights.shape}/{self.biases.shape} do not match shapes {list(shapes)}"
            )
        if self.batchnorm_params.shape != (4 * self.hidden,):
            raise ShapeError(f"batchnorm params must have length {4 * self.hidden}")

    @property
    def input_dim(self) -> int:
        return self.layer_shapes[0][0]

    @property
    def hidden(self) -> int:
        return self.layer_shapes[0][1]

    def unpack(self) -> dict[str, np.ndarray]:
        d, h = self.layer_shapes[0]
        w, b, bn = self.weights, self.biases, self.batchnorm_params
        return {
            "W1": w[: d * h].reshape(d, h),
            "W2": w[d * h :].reshape(h, N_CLASSES),
            "b1": b[:h],
            "b2": b[h:],
            "gamma": bn[:h],
            "beta": bn[h : 2 * h],
            "running_mean": bn[2 * h : 3 * h],
            "running_var": bn[3 * h :],
        }

    def trainable(self) -> np.ndarray:
        """Weights, biases, BN scale and shift as one vector (the Adam view)."""
        h = self.hidden
        return np.concatenate([self.weights, self.biases, self.batchnorm_params[: 2 * h]])

    def with_trainable(self, theta: np.ndarray) -> "NetworkState":
        n_w, n_b, h = self.weights.size, self.biases.size, self.hidden
        bn = self.batchnorm_params.copy()
        bn[: 2 * h] = theta[n_w + n_b :]
        return replace(self, weights=theta[:n_w].copy(), biases=theta[n_w : n_w + n_b].copy(), batchnorm_params=bn)

    def is_finite(self) -> bool:
        return bool(
            np.isfinite(self.weights).all()
            and np.isfinite(self.biases).all()
            and np.isfinite(self.batchnorm_params).all()
        )

    def equals(self, other: "NetworkState") -> bool:
        """Bitwise equality of all parameter arrays."""
        return (
            self.layer_shapes == other.layer_shapes
            and self.weights.tobytes() == other.weights.tobytes()
            and self.biases.tobytes() == other.biases.tobytes()
            and self.batchnorm_params.tobytes() == other.batchnorm_params.tobytes()
        )


@dataclass
class TrainReport:
    final_train_loss: float
    final_validation_loss: float
    epochs_run: int
    wall_time: float
    steps: int = 0
    best_epoch: int = 0
    train_loss_history: list[float] = field(default_factory=list)
    validation_loss_history: list[float] = field(default_factory=list)


def init_network(config: ModelConfig, input_dim: int, seed: int) -> NetworkState:
    """Kernels ~ U(-a, a) with a = sqrt(6 / (fan_in + fan_out)); biases and
    BN shift zero, BN scale and running variance one."""
    if not isinstance(config, ModelConfig):
        raise ConfigurationError(f"expected ModelConfig, got {type(config).__name__}")
    if input_dim < 1:
        raise ConfigurationError(f"input_dim must be >= 1, got {input_dim}")
    h = config.hidden_neurons
    shapes = ((input_dim, h), (h, N_CLASSES))
    rng = np.random.default_rng(seed)
    kernels = []
    for fan_in, fan_out in shapes:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        kernels.append(rng.uniform(-limit, limit, size=fan_in * fan_out))
    bn = np.concatenate([np.ones(h), np.zeros(h), np.zeros(h), np.ones(h)])
    return NetworkState(
        layer_shapes=shapes,
        weights=np.concatenate(kernels),
        biases=np.zeros(h + N_CLASSES),
        batchnorm_params=bn,
    )


def _check_input(net: NetworkState, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ShapeError(f"network expects {net.input_dim} feature columns, got array of shape {x.shape}")
    return x


def _softmax(z: np.ndarray) -> np.ndarray:
    return np.exp(z - logsumexp(z, axis=1, keepdims=True))


def forward(
    net: NetworkState,
    features: np.ndarray,
    mode: Literal["train", "eval"] = "eval",
    seed: int | None = None,
    dropout_rate: float = 0.0,
) -> np.ndarray:
    """Class probabilities, one row per sample.

    In ``train`` mode batch statistics normalise the hidden layer and a
    dropout mask drawn from ``seed`` is applied at ``dropout_rate``; in
    ``eval`` mode running statistics are used and nothing is dropped.
    """
    x = _check_input(net, features)
    if mode == "eval":
        return _softmax(_eval_logits(net, x))
    if mode != "train":
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    mask = _dropout_mask(np.random.default_rng(seed), (x.shape[0], net.hidden), dropout_rate)
    z2, _ = _train_forward(net.unpack(), x, mask)
    return _softmax(z2)


def predict_proba(net: NetworkState, features: np.ndarray) -> np.ndarray:
    return forward(net, features, mode="eval")


def _eval_logits(net: NetworkState, x: np.ndarray) -> np.ndarray:
    p = net.unpack()
    a1 = np.maximum(x @ p["W1"] + p["b1"], 0.0)
    xhat = (a1 - p["running_mean"]) / np.sqrt(p["running_var"] + BN_EPS)
    hbn = p["gamma"] * xhat + p["beta"]
    return hbn @ p["W2"] + p["b2"]


def _dropout_mask(rng: np.random.Generator, shape, rate: float) -> np.ndarray | None:
    if rate <= 0.0:
        return None
    keep = 1.0 - rate
    return (rng.random(shape) < keep) / keep


def _train_forward(p: dict, x: np.ndarray, mask: np.ndarray | None):
    z1 = x @ p["W1"] + p["b1"]
    a1 = np.maximum(z1, 0.0)
    mu = a1.mean(axis=0)
    var = a1.var(axis=0)
    inv_std = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (a1 - mu) * inv_std
    hbn = p["gamma"] * xhat + p["beta"]
    hdrop = hbn if mask is None else hbn * mask
    z2 = hdrop @ p["W2"] + p["b2"]
    cache = (x, z1, xhat, inv_std, mask, hdrop, mu, var)
    return z2, cache


def _penalty(p: dict, l2: float) -> float:
    if l2 == 0.0:
        return 0.0
    return l2 * (float(np.sum(p["W1"] ** 2)) + float(np.sum(p["W2"] ** 2)))


def _cross_entropy(z2: np.ndarray, y: np.ndarray) -> float:
    logp = z2 - logsumexp(z2, axis=1, keepdims=True)
    return float(-np.mean(logp[np.arange(y.size), y]))


def loss_and_grads(
    net: NetworkState,
    x: np.ndarray,
    y: np.ndarray,
    l2_factor: float,
    mask: np.ndarray | None = None,
):
    """Training-mode loss and its gradient w.r.t. ``net.trainable()``.

    Also returns the batch mean/variance of the hidden activations so the
    caller can update running statistics; ``net`` itself is never mutated.
    """
    x = _check_input(net, x)
    y = np.asarray(y, dtype=np.int64)
    p = net.unpack()
    n = x.shape[0]
    z2, (x, z1, xhat, inv_std, mask, hdrop, mu, var) = _train_forward(p, x, mask)
    loss = _cross_entropy(z2, y) + _penalty(p, l2_factor)

    dz2 = _softmax(z2)
    dz2[np.arange(n), y] -= 1.0
    dz2 /= n
    dW2 = hdrop.T @ dz2 + 2.0 * l2_factor * p["W2"]
    db2 = dz2.sum(axis=0)
    dh = dz2 @ p["W2"].T
    if mask is not None:
        dh = dh * mask
    dgamma = np.sum(dh * xhat, axis=0)
    dbeta = dh.sum(axis=0)
    dxhat = dh * p["gamma"]
    da1 = (inv_std / n) * (n * dxhat - dxhat.sum(axis=0) - xhat * np.sum(dxhat * xhat, axis=0))
    dz1 = da1 * (z1 > 0)
    dW1 = x.T @ dz1 + 2.0 * l2_factor * p["W1"]
    db1 = dz1.sum(axis=0)

    grad = np.concatenate([dW1.ravel(), dW2.ravel(), db1, db2, dgamma, dbeta])
    return loss, grad, (mu, var)


def evaluate_loss(net: NetworkState, x: np.ndarray, y: np.ndarray, l2_factor: float) -> float:
    """Eval-mode (running statistics, no dropout) loss including the L2 term."""
    x = _check_input(net, x)
    return _cross_entropy(_eval_logits(net, x), np.asarray(y, dtype=np.int64)) + _penalty(net.unpack(), l2_factor)


@dataclass(frozen=True)
class AdamMoments:
    first: np.ndarray
    second: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "AdamMoments":
        return cls(np.zeros(n), np.zeros(n))


def adam_step(
    params: np.ndarray,
    grads: np.ndarray,
    moments: AdamMoments,
    step: int,
    learning_rate: float,
    beta1: float = ADAM_BETA1,
    beta2: float = ADAM_BETA2,
    eps: float = ADAM_EPS,
) -> tuple[np.ndarray, AdamMoments]:
    if params.shape != grads.shape or params.shape != moments.first.shape or params.shape != moments.second.shape:
        raise ShapeError(
            f"adam arrays disagree: params {params.shape}, grads {grads.shape}, moments {moments.first.shape}"
        )
    if step < 1:
        raise ValueError(f"step must be >= 1, got {step}")
    m = beta1 * moments.first + (1.0 - beta1) * grads
    v = beta2 * moments.second + (1.0 - beta2) * grads * grads
    m_hat = m / (1.0 - beta1**step)
    v_hat = v / (1.0 - beta2**step)
    return params - learning_rate * m_hat / (np.sqrt(v_hat) + eps), AdamMoments(m, v)


def _holdout(n: int, fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    # tiny sets validate on their own training rows
    if n < 5:
        idx = np.arange(n)
        return idx, idx
    n_val = max(1, int(round(fraction * n)))
    perm = rng.permutation(n)
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def _warm_batchnorm(net: NetworkState, x: np.ndarray) -> NetworkState:
    """Seed BN running statistics with the full-batch hidden statistics."""
    p = net.unpack()
    a1 = np.maximum(x @ p["W1"] + p["b1"], 0.0)
    h = net.hidden
    bn = net.batchnorm_params.copy()
    bn[2 * h : 3 * h] = a1.mean(axis=0)
    bn[3 * h :] = a1.var(axis=0)
    return replace(net, batchnorm_params=bn)


def sgd_fit(
    net: NetworkState,
    data: GroupDataset,
    config: ModelConfig,
    seed: int,
) -> tuple[NetworkState, TrainReport]:
    """Train ``net`` on ``data``'s training rows.

    A ``validation_fraction`` slice of the training rows (chosen by ``seed``)
    drives early stopping: training halts once validation loss has gone
    ``early_stop_patience`` epochs without a new minimum.  Adam moments start
    from zero on every call.  The returned state holds the final weights,
    not the best ones.
    """
    x_all, y_all = data.x_train, data.y_train
    if y_all.size == 0:
        raise DataError(f"group {data.group_id} has no training rows")
    x_all = _check_input(net, x_all)

    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    tr_idx, val_idx = _holdout(y_all.size, config.validation_fraction, rng)
    x_tr, y_tr = x_all[tr_idx], y_all[tr_idx]
    x_val, y_val = x_all[val_idx], y_all[val_idx]

    if net.epoch_counter == 0:
        net = _warm_batchnorm(net, x_tr)
    theta = net.trainable()
    moments = AdamMoments.zeros(theta.size)
    state = net
    h = net.hidden
    running = net.batchnorm_params[2 * h :].copy()
    step = 0
    best_val = np.inf
    best_epoch = 0
    train_hist: list[float] = []
    val_hist: list[float] = []
    epoch = 0
    n = y_tr.size

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        batch_losses = []
        for lo in range(0, n, config.batch_size):
            idx = order[lo : lo + config.batch_size]
            mask = _dropout_mask(rng, (idx.size, h), config.dropout_rate)
            loss, grad, (mu, var) = loss_and_grads(state, x_tr[idx], y_tr[idx], config.l2_factor, mask)
            if not np.isfinite(loss):
                raise DivergenceError(epoch, loss)
            step += 1
            theta, moments = adam_step(theta, grad, moments, step, config.learning_rate)
            running[:h] = BN_MOMENTUM * running[:h] + (1.0 - BN_MOMENTUM) * mu
            running[h:] = BN_MOMENTUM * running[h:] + (1.0 - BN_MOMENTUM) * var
            state = state.with_trainable(theta)
            state.batchnorm_params[2 * h :] = running
            batch_losses.append(loss)

        train_loss = float(np.mean(batch_losses))
        val_loss = evaluate_loss(state, x_val, y_val, config.l2_factor)
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            raise DivergenceError(epoch, val_loss if np.isfinite(train_loss) else train_loss)
        train_hist.append(train_loss)
        val_hist.append(val_loss)
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
        elif epoch - best_epoch >= config.early_stop_patience:
            break

    state = replace(state, epoch_counter=net.epoch_counter + epoch)
    report = TrainReport(
        final_train_loss=train_hist[-1],
        final_validation_loss=val_hist[-1],
        epochs_run=epoch,
        wall_time=time.perf_counter() - start,
        steps=step,
        best_epoch=best_epoch,
        train_loss_history=train_hist,
        validation_loss_history=val_hist,
    )
    return state, report
