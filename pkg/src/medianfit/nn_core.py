"""Feed-forward regression MLP: construction, passes, optimizers, training.

Parameters are held in a single flat vector (see ``_pykernels`` for the
layout). The hot minibatch update goes through the active kernel backend;
``forward``/``backward``/``optimizer_step`` here are the plain reference
operations.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import _backend
from . import _pykernels as ref
from .errors import ConfigError, DataError

ACTIVATIONS = ("relu", "sigmoid", "softmax", "softplus", "softsign", "tanh", "selu", "elu")
OPTIMIZERS = ("sgd", "adam", "nadam", "rmsprop", "adagrad", "adadelta", "adamax")
REGULARISATION_RATES = (0.0, 1e-5, 1e-4, 1e-3, 1e-2)
MAX_LAYERS = 4
MAX_NEURONS = 1000
INIT_STD = 0.1

OPTIMIZER_DEFAULTS = {
    "sgd": {"lr": 0.01},
    "adam": {"lr": 0.001, "beta1": 0.9, "beta2": 0.999, "eps": 1e-7},
    "nadam": {"lr": 0.001, "beta1": 0.9, "beta2": 0.999, "eps": 1e-7},
    "rmsprop": {"lr": 0.001, "rho": 0.9, "eps": 1e-7},
    "adagrad": {"lr": 0.01, "eps": 1e-7},
    "adadelta": {"lr": 1.0, "rho": 0.95, "eps": 1e-7},
    "adamax": {"lr": 0.001, "beta1": 0.9, "beta2": 0.999, "eps": 1e-7},
}

MODEL_FORMAT = "medianfit-mlp"
MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class NetworkConfig:
    hidden_layers: int
    neurons_per_layer: tuple[int, ...]
    activation: str = "relu"
    optimizer: str = "adam"
    l1_rate: float = 0.0
    l2_rate: float = 0.0
    dropout_rate: float = 0.0
    input_dim: int = 5
    output_dim: int = 1

    def __post_init__(self):
        object.__setattr__(self, "neurons_per_layer", tuple(int(n) for n in self.neurons_per_layer))
        if not 1 <= self.hidden_layers <= MAX_LAYERS:
            raise ConfigError(f"hidden_layers must be in [1, {MAX_LAYERS}], got {self.hidden_layers}")
        if len(self.neurons_per_layer) != self.hidden_layers:
            raise ConfigError("neurons_per_layer length must equal hidden_layers")
        if any(not 1 <= n <= MAX_NEURONS for n in self.neurons_per_layer):
            raise ConfigError(f"neuron counts must be in [1, {MAX_NEURONS}]")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.l1_rate not in REGULARISATION_RATES or self.l2_rate not in REGULARISATION_RATES:
            raise ConfigError(f"l1/l2 rates must be one of {REGULARISATION_RATES}")
        if not 0.0 <= self.dropout_rate < 0.9:
            raise ConfigError("dropout_rate must be in [0, 0.9)")
        if self.input_dim < 1 or self.output_dim < 1:
            raise ConfigError("input_dim and output_dim must be positive")

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.input_dim, *self.neurons_per_layer, self.output_dim)

    def summary(self) -> str:
        neurons = "x".join(str(n) for n in self.neurons_per_layer)
        return (f"{self.hidden_layers}L[{neurons}] {self.activation}/{self.optimizer} "
                f"l1={self.l1_rate:g} l2={self.l2_rate:g} drop={self.dropout_rate:.3f}")


@dataclass
class NetworkModel:
    config: NetworkConfig
    seed: int
    params: np.ndarray

    @property
    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return ref.unpack(self.params, self.config.sizes)

    @property
    def weights(self) -> list[np.ndarray]:
        return [w for w, _ in self.layers]

    @property
    def biases(self) -> list[np.ndarray]:
        return [b for _, b in self.layers]

    def copy(self) -> NetworkModel:
        return NetworkModel(self.config, self.seed, self.params.copy())

    def predict(self, inputs) -> np.ndarray:
        return forward(self, inputs)

    __call__ = predict


@dataclass
class TrainingSchedule:
    max_epochs: int = 20
    patience: int = 5
    batch_size: int = 128
    learning_rate: float | None = None

    def __post_init__(self):
        if self.max_epochs < 1 or self.patience < 1 or self.batch_size < 1:
            raise ConfigError("max_epochs, patience and batch_size must be >= 1")
        if self.learning_rate is not None and not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")


@dataclass
class TrainingHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    epochs_run: int = 0
    best_epoch: int = 0
    diverged: bool = False


def init_network(config: NetworkConfig, seed: int) -> NetworkModel:
    """Weights ~ Normal(0, 0.1), biases zero."""
    rng = np.random.default_rng(seed)
    params = np.zeros(ref.n_params(config.sizes))
    for (ws, bs, _), k, n in zip(ref.param_slices(config.sizes), config.sizes[:-1], config.sizes[1:]):
        params[ws:bs] = rng.normal(0.0, INIT_STD, size=k * n)
    return NetworkModel(config, int(seed), params)


def activation(kind: str, x):
    """Elementwise activation; softmax normalises over the last axis."""
    return ref.activate(ACTIVATIONS.index(kind), np.asarray(x, dtype=float))


def activation_derivative(kind: str, x):
    """Elementwise derivative. For softmax this is the Jacobian diagonal a(1 - a)."""
    code = ACTIVATIONS.index(kind)
    z = np.asarray(x, dtype=float)
    a = ref.activate(code, z)
    if code == ref.SOFTMAX:
        return a * (1.0 - a)
    return ref.activate_backward(code, z, a, np.ones_like(z))


def _check_inputs(model, inputs):
    X = np.ascontiguousarray(inputs, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != model.config.input_dim:
        raise DataError(f"expected {model.config.input_dim} inputs, got {X.shape[1]}")
    if not np.isfinite(X).all():
        raise DataError("inputs contain non-finite values")
    return X


def dropout_keep(rng, batch: int, config: NetworkConfig) -> np.ndarray | None:
    """uint8 keep flags for every hidden unit, or None if p == 0.

    Each flag compares 32 raw random bits with ``round(p * 2**32)``, which
    is several times cheaper than drawing floats.
    """
    p = config.dropout_rate
    if p <= 0.0:
        return None
    width = sum(config.neurons_per_layer)
    m = batch * width
    bits = rng.bit_generator.random_raw((m + 1) // 2).view(np.uint32)[:m]
    keep = bits.reshape(batch, width) >= np.uint32(round(p * 2.0**32))
    return keep.view(np.uint8)


def dropout_scale(config: NetworkConfig) -> float:
    return 1.0 / (1.0 - config.dropout_rate)


def dropout_masks(rng, batch: int, config: NetworkConfig) -> np.ndarray | None:
    """Inverted-dropout multipliers for every hidden unit, or None if p == 0."""
    keep = dropout_keep(rng, batch, config)
    return None if keep is None else keep * dropout_scale(config)


def _shape_output(out, config):
    return out[:, 0] if config.output_dim == 1 else out


def forward(model: NetworkModel, inputs, train_mode: bool = False,
            dropout_mask_seed: int | None = None) -> np.ndarray:
    X = _check_inputs(model, inputs)
    cfg = model.config
    act = ACTIVATIONS.index(cfg.activation)
    masks = None
    if train_mode:
        masks = dropout_masks(np.random.default_rng(dropout_mask_seed), len(X), cfg)
    if masks is None:
        out = _backend.kernels.predict(model.params, np.asarray(cfg.sizes, dtype=np.intp),
                                       np.ascontiguousarray(X), act)
    else:
        out, _, _ = ref.forward_cache(model.params, cfg.sizes, X, act, masks)
    return _shape_output(out, cfg)


def hidden_outputs(model: NetworkModel, inputs) -> list[np.ndarray]:
    """Inference-mode activations of each hidden layer."""
    X = _check_inputs(model, inputs)
    _, acts, _ = ref.forward_cache(model.params, model.config.sizes, X,
                                   ACTIVATIONS.index(model.config.activation))
    return acts[1:]


def loss_regularised_mae(predictions, targets, weights=(), l1_rate=0.0, l2_rate=0.0) -> float:
    pred = np.asarray(predictions, dtype=float).ravel()
    y = np.asarray(targets, dtype=float).ravel()
    if pred.size == 0:
        raise DataError("empty batch")
    if pred.shape != y.shape:
        raise DataError("predictions and targets differ in length")
    loss = float(np.abs(y - pred).mean())
    for w in weights:
        w = np.asarray(w, dtype=float)
        if l1_rate:
            loss += l1_rate * float(np.abs(w).sum())
        if l2_rate:
            loss += l2_rate * float((w * w).sum())
    return loss


def backward(model: NetworkModel, inputs, targets, train_mode: bool = False,
             dropout_mask_seed: int | None = None) -> np.ndarray:
    """Gradient of the regularised MAE loss, laid out like ``model.params``."""
    X = _check_inputs(model, inputs)
    y = np.asarray(targets, dtype=float).reshape(len(X), -1)
    if len(X) == 0:
        raise DataError("empty batch")
    cfg = model.config
    masks = None
    if train_mode:
        masks = dropout_masks(np.random.default_rng(dropout_mask_seed), len(X), cfg)
    _, grad = ref.loss_and_grad(model.params, cfg.sizes, X, y, ACTIVATIONS.index(cfg.activation),
                                masks, cfg.l1_rate, cfg.l2_rate)
    return grad


def optimizer_hyper(kind: str, learning_rate: float | None = None) -> np.ndarray:
    d = OPTIMIZER_DEFAULTS[kind]
    hyper = np.zeros(5)
    hyper[ref.LR] = d["lr"] if learning_rate is None else learning_rate
    hyper[ref.BETA1] = d.get("beta1", 0.0)
    hyper[ref.BETA2] = d.get("beta2", 0.0)
    hyper[ref.EPS] = d.get("eps", 0.0)
    hyper[ref.RHO] = d.get("rho", 0.0)
    return hyper


def init_optimizer_state(n: int) -> np.ndarray:
    """Two accumulator rows are enough for every supported optimizer."""
    return np.zeros((2, n))


def optimizer_step(kind: str, state: np.ndarray, params: np.ndarray, grads: np.ndarray,
                   step_index: int, learning_rate: float | None = None) -> np.ndarray:
    """Apply one update in place (``step_index`` counts from 1) and return params."""
    if state.shape != (2, params.size):
        raise ValueError("optimizer state shape does not match params")
    ref.optimizer_update(OPTIMIZERS.index(kind), params, np.asarray(grads, dtype=float), state,
                         optimizer_hyper(kind, learning_rate), step_index)
    return params


def mean_absolute_error(model: NetworkModel, X, y) -> float:
    return float(np.abs(forward(model, X) - np.asarray(y).ravel()).mean())


def train(model: NetworkModel, train_set, val_set, schedule: TrainingSchedule,
          evaluator=None) -> tuple[NetworkModel, TrainingHistory]:
    """Minibatch training with patience-based early stopping.

    ``train_set``/``val_set`` are ``(X, y)`` pairs. ``evaluator(model, epoch)``
    may replace the validation MAE. The best-validation parameters are
    restored on return; ``history.diverged`` flags a non-finite loss.
    """
    X, y = train_set
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float).ravel()
    Xv, yv = val_set
    if len(X) == 0 or len(Xv) == 0:
        raise DataError("train and validation sets must be nonempty")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise DataError("training data contains non-finite values")

    cfg = model.config
    sizes = np.asarray(cfg.sizes, dtype=np.intp)
    act = ACTIVATIONS.index(cfg.activation)
    opt = OPTIMIZERS.index(cfg.optimizer)
    hyper = optimizer_hyper(cfg.optimizer, schedule.learning_rate)
    state = init_optimizer_state(model.params.size)
    rng = np.random.default_rng([model.seed, 1])
    kernels = _backend.kernels
    scale = dropout_scale(cfg)
    work = np.empty(kernels.workspace_size(sizes, min(schedule.batch_size, len(X))))

    history = TrainingHistory()
    best_val = math.inf
    best_params = model.params.copy()
    wait = 0
    step = 0
    n = len(X)
    bs = schedule.batch_size
    for epoch in range(1, schedule.max_epochs + 1):
        order = rng.permutation(n)
        epoch_keep = dropout_keep(rng, n, cfg)
        Xe, ye = X[order], y[order]
        total = 0.0
        for start in range(0, n, bs):
            stop = min(start + bs, n)
            idx = slice(start, stop)
            keep = None if epoch_keep is None else epoch_keep[idx]
            step += 1
            loss = kernels.train_step(model.params, sizes, Xe[idx], ye[idx], act, keep, scale,
                                      cfg.l1_rate, cfg.l2_rate, opt, state, hyper, step, work)
            total += loss * (stop - start)
            if not math.isfinite(loss):
                break
        train_loss = total / n
        history.epochs_run = epoch
        history.train_loss.append(train_loss)
        if not math.isfinite(train_loss) or not np.isfinite(model.params).all():
            history.diverged = True
            break
        val = evaluator(model, epoch) if evaluator is not None else mean_absolute_error(model, Xv, yv)
        history.val_loss.append(float(val))
        if not math.isfinite(val):
            history.diverged = True
            break
        if val < best_val:
            best_val = val
            history.best_epoch = epoch
            best_params = model.params.copy()
            wait = 0
        else:
            wait += 1
            if wait >= schedule.patience:
                break
    if history.best_epoch:
        model.params = best_params
    return model, history


def save_model(model: NetworkModel, path) -> Path:
    path = Path(path)
    meta = {
        "format": MODEL_FORMAT,
        "version": MODEL_FORMAT_VERSION,
        "config": asdict(model.config),
        "seed": model.seed,
    }
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta, sort_keys=True)), params=model.params)
    return path


def load_model(path) -> NetworkModel:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        params = data["params"].copy()
    if meta.get("format") != MODEL_FORMAT:
        raise DataError(f"{path} is not a medianfit model file")
    if meta["version"] > MODEL_FORMAT_VERSION:
        raise DataError(f"model format version {meta['version']} is newer than supported")
    cfg = meta["config"]
    cfg["neurons_per_layer"] = tuple(cfg["neurons_per_layer"])
    config = NetworkConfig(**cfg)
    if params.size != ref.n_params(config.sizes):
        raise DataError(f"{path}: parameter count does not match config")
    return NetworkModel(config, int(meta["seed"]), params)
