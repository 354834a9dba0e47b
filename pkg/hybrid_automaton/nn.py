"""
Feedforward networks: construction, inference, gradient training and JSON
serialisation.

Layer l computes eta_l = act_l(W_l eta_{l-1} + b_l). Training minimises the
mean over pairs of the squared error norm by full-batch (or mini-batch) Adam
or plain gradient descent with hand-written backpropagation.
"""

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from hybrid_automaton.dataset import CellDataset
from hybrid_automaton.dynamics import make_rng
from hybrid_automaton.exceptions import (
    CellTrainingError,
    EmptyDatasetError,
    InvalidArgumentError,
    TrainingDivergedError,
)

logger = logging.getLogger(__name__)


class Activation(str, Enum):
    TANH = "tanh"
    RELU = "relu"
    IDENTITY = "identity"


def _relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def _identity(z: np.ndarray) -> np.ndarray:
    return z


# activation -> (function, derivative expressed through (z, a))
ACTIVATIONS: Dict[Activation, Tuple[Callable, Callable]] = {
    Activation.TANH: (np.tanh, lambda z, a: 1.0 - a * a),
    Activation.RELU: (_relu, lambda z, a: (z > 0.0).astype(np.float64)),
    Activation.IDENTITY: (_identity, lambda z, a: np.ones_like(z)),
}


@dataclass(frozen=True, eq=False)
class Layer:
    weights: np.ndarray
    bias: np.ndarray
    activation: Activation

    def __post_init__(self):
        weights = np.array(self.weights, dtype=np.float64, ndmin=2)
        bias = np.array(self.bias, dtype=np.float64).reshape(-1)
        if weights.ndim != 2 or bias.shape[0] != weights.shape[0]:
            raise InvalidArgumentError(f"layer weights {weights.shape} do not match bias {bias.shape}")
        if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(bias))):
            raise InvalidArgumentError("layer parameters must be finite")
        weights.setflags(write=False)
        bias.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "bias", bias)
        object.__setattr__(self, "activation", Activation(self.activation))

    @property
    def input_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def output_dim(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True, eq=False)
class NeuralNet:
    layers: Tuple[Layer, ...]

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise InvalidArgumentError("a network needs at least one layer")
        for previous, current in zip(layers, layers[1:]):
            if current.input_dim != previous.output_dim:
                raise InvalidArgumentError(
                    f"layer dimensions do not chain: {previous.output_dim} outputs feed {current.input_dim} inputs"
                )
        object.__setattr__(self, "layers", layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].input_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].output_dim

    @property
    def parameter_count(self) -> int:
        return sum(layer.weights.size + layer.bias.size for layer in self.layers)

    def to_dict(self) -> dict:
        return {
            "layers": [
                {"w": layer.weights.tolist(), "b": layer.bias.tolist(), "act": layer.activation.value}
                for layer in self.layers
            ]
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NeuralNet":
        try:
            return cls(
                layers=tuple(
                    Layer(weights=item["w"], bias=item["b"], activation=Activation(item["act"]))
                    for item in data["layers"]
                )
            )
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, InvalidArgumentError):
                raise
            raise InvalidArgumentError(f"malformed network: {e}") from e

    def __eq__(self, other) -> bool:
        if not isinstance(other, NeuralNet):
            return NotImplemented
        return len(self.layers) == len(other.layers) and all(
            a.activation == b.activation
            and np.array_equal(a.weights, b.weights)
            and np.array_equal(a.bias, b.bias)
            for a, b in zip(self.layers, other.layers)
        )

    __hash__ = None


@dataclass(frozen=True)
class Architecture:
    sizes: Tuple[int, ...]
    activations: Tuple[Activation, ...]

    def __post_init__(self):
        sizes = tuple(int(size) for size in self.sizes)
        activations = tuple(Activation(act) for act in self.activations)
        if len(sizes) < 2 or len(activations) != len(sizes) - 1:
            raise InvalidArgumentError("an architecture needs n layer sizes and n-1 activations")
        if any(size < 1 for size in sizes):
            raise InvalidArgumentError(f"layer sizes must be positive, got {list(sizes)}")
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "activations", activations)

    @classmethod
    def shallow(
        cls, n_in: int, hidden: Union[int, Sequence[int]], n_out: int, activation: Activation = Activation.TANH
    ) -> "Architecture":
        """Hidden layers with ``activation`` and a linear output layer."""
        hidden = [hidden] if isinstance(hidden, int) else list(hidden)
        sizes = (n_in, *hidden, n_out)
        return cls(sizes=sizes, activations=(*([activation] * len(hidden)), Activation.IDENTITY))

    @property
    def input_dim(self) -> int:
        return self.sizes[0]

    @property
    def output_dim(self) -> int:
        return self.sizes[-1]

    def to_dict(self) -> dict:
        return {"sizes": list(self.sizes), "activations": [act.value for act in self.activations]}

    @classmethod
    def from_dict(cls, data: dict) -> "Architecture":
        return cls(sizes=tuple(data["sizes"]), activations=tuple(data["activations"]))


class Optimizer(str, Enum):
    ADAM = "adam"
    SGD = "sgd"


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 2000
    learning_rate: float = 1e-3
    optimizer: Optimizer = Optimizer.ADAM
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise InvalidArgumentError(f"epochs must be at least 1, got {self.epochs}")
        if not self.learning_rate > 0:
            raise InvalidArgumentError(f"learning rate must be positive, got {self.learning_rate}")
        if self.batch_size is not None and self.batch_size < 1:
            raise InvalidArgumentError(f"batch size must be positive, got {self.batch_size}")
        object.__setattr__(self, "optimizer", Optimizer(self.optimizer))

    def to_dict(self) -> dict:
        data = asdict(self)
        data["optimizer"] = self.optimizer.value
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        return cls(**data)


@dataclass
class TrainResult:
    net: NeuralNet
    loss: float
    seconds: float
    cell: Optional[int] = None
    history: List[float] = field(default_factory=list)


@dataclass
class TrainingReport:
    results: List[Optional[TrainResult]]
    parallel_seconds: float
    workers: int

    @property
    def serial_seconds(self) -> float:
        """Sum of the per-cell job times, i.e. what a serial run costs."""
        return sum(result.seconds for result in self.results if result is not None)

    @property
    def nets(self) -> List[Optional[NeuralNet]]:
        return [result.net if result is not None else None for result in self.results]

    @property
    def losses(self) -> List[Optional[float]]:
        return [result.loss if result is not None else None for result in self.results]


def init_network(arch: Architecture, rng: np.random.Generator) -> NeuralNet:
    """Xavier-uniform weights, zero biases."""
    layers = []
    for n_in, n_out, act in zip(arch.sizes[:-1], arch.sizes[1:], arch.activations):
        limit = np.sqrt(6.0 / (n_in + n_out))
        weights = rng.uniform(-limit, limit, size=(n_out, n_in))
        layers.append(Layer(weights=weights, bias=np.zeros(n_out), activation=act))
    return NeuralNet(layers=tuple(layers))


def forward(net: NeuralNet, x) -> np.ndarray:
    """Evaluate ``net`` on one input vector or on the rows of a 2-D batch."""
    eta = np.asarray(x, dtype=np.float64)
    if eta.ndim == 1:
        if eta.shape[0] != net.input_dim:
            raise InvalidArgumentError(f"network expects {net.input_dim} inputs, got {eta.shape[0]}")
        for layer in net.layers:
            eta = ACTIVATIONS[layer.activation][0](layer.weights @ eta + layer.bias)
        return eta
    if eta.ndim != 2 or eta.shape[1] != net.input_dim:
        raise InvalidArgumentError(f"network expects inputs of dimension {net.input_dim}, got shape {eta.shape}")
    for layer in net.layers:
        eta = ACTIVATIONS[layer.activation][0](eta @ layer.weights.T + layer.bias)
    return eta


# Parameters are handled as a flat list [W_1, b_1, W_2, b_2, ...] during training.
Params = List[np.ndarray]


def _params_of(net: NeuralNet) -> Params:
    params = []
    for layer in net.layers:
        params.extend([layer.weights.copy(), layer.bias.copy()])
    return params


def _net_from(params: Params, activations: Sequence[Activation]) -> NeuralNet:
    return NeuralNet(
        layers=tuple(
            Layer(weights=params[2 * i], bias=params[2 * i + 1], activation=act) for i, act in enumerate(activations)
        )
    )


def _loss_and_gradients(
    params: Params, activations: Sequence[Activation], inputs: np.ndarray, targets: np.ndarray
) -> Tuple[float, Params]:
    """Mean over rows of ||net(x) - t||^2 and its gradient with respect to ``params``."""
    cache = [(None, inputs)]
    eta = inputs
    for i, act in enumerate(activations):
        z = eta @ params[2 * i].T + params[2 * i + 1]
        eta = ACTIVATIONS[act][0](z)
        cache.append((z, eta))

    residual = eta - targets
    count = inputs.shape[0]
    loss = float(np.sum(residual * residual) / count)

    grads: Params = [None] * len(params)
    delta = 2.0 * residual / count
    for i in range(len(activations) - 1, -1, -1):
        z, a = cache[i + 1]
        delta = delta * ACTIVATIONS[activations[i]][1](z, a)
        previous = cache[i][1]
        grads[2 * i] = delta.T @ previous
        grads[2 * i + 1] = delta.sum(axis=0)
        delta = delta @ params[2 * i]
    return loss, grads


class _Adam:
    def __init__(self, params: Params, cfg: TrainConfig):
        self.cfg = cfg
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def update(self, params: Params, grads: Params) -> None:
        cfg = self.cfg
        self.t += 1
        correction1 = 1.0 - cfg.beta1**self.t
        correction2 = 1.0 - cfg.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            p -= cfg.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + cfg.epsilon)


class _GradientDescent:
    def __init__(self, params: Params, cfg: TrainConfig):
        self.cfg = cfg

    def update(self, params: Params, grads: Params) -> None:
        for p, g in zip(params, grads):
            p -= self.cfg.learning_rate * g


OPTIMIZERS = {Optimizer.ADAM: _Adam, Optimizer.SGD: _GradientDescent}


def _check_finite(loss: float, cell: int, epoch: int) -> None:
    if not np.isfinite(loss):
        raise TrainingDivergedError(f"cell {cell}: loss became {loss} at epoch {epoch}")


def train(dataset: CellDataset, arch: Architecture, cfg: TrainConfig) -> TrainResult:
    if dataset.is_empty:
        raise EmptyDatasetError(f"cell {dataset.cell} has no training pairs")
    if dataset.inputs.shape[1] != arch.input_dim or dataset.targets.shape[1] != arch.output_dim:
        raise InvalidArgumentError(
            f"architecture {arch.input_dim}->{arch.output_dim} does not fit pairs "
            f"{dataset.inputs.shape[1]}->{dataset.targets.shape[1]}"
        )

    started = time.perf_counter()
    rng = make_rng(cfg.seed)
    params = _params_of(init_network(arch, rng))
    optimizer = OPTIMIZERS[cfg.optimizer](params, cfg)
    inputs, targets = dataset.inputs, dataset.targets
    count = inputs.shape[0]
    batch_size = cfg.batch_size or count

    history = []
    for epoch in range(cfg.epochs):
        if batch_size >= count:
            loss, grads = _loss_and_gradients(params, arch.activations, inputs, targets)
            _check_finite(loss, dataset.cell, epoch)
            optimizer.update(params, grads)
        else:
            order = rng.permutation(count)
            batch_losses = []
            for start in range(0, count, batch_size):
                rows = order[start : start + batch_size]
                batch_loss, grads = _loss_and_gradients(params, arch.activations, inputs[rows], targets[rows])
                _check_finite(batch_loss, dataset.cell, epoch)
                optimizer.update(params, grads)
                batch_losses.append(batch_loss)
            loss = float(np.mean(batch_losses))
        history.append(loss)

    final_loss, _ = _loss_and_gradients(params, arch.activations, inputs, targets)
    if not np.isfinite(final_loss) or not all(np.all(np.isfinite(p)) for p in params):
        raise TrainingDivergedError(f"cell {dataset.cell}: training ended with non-finite parameters")

    seconds = time.perf_counter() - started
    logger.debug(
        "[nn] Network trained",
        extra={"cell": dataset.cell, "pairs": count, "loss": final_loss, "seconds": seconds},
    )
    return TrainResult(
        net=_net_from(params, arch.activations), loss=final_loss, seconds=seconds, cell=dataset.cell, history=history
    )


def gradient_check(net: NeuralNet, pair: Tuple[np.ndarray, np.ndarray], h: float = 1e-5) -> float:
    """Max relative error between backpropagated and central-difference gradients of ||net(x) - t||^2."""
    x = np.asarray(pair[0], dtype=np.float64).reshape(1, -1)
    t = np.asarray(pair[1], dtype=np.float64).reshape(1, -1)
    activations = [layer.activation for layer in net.layers]
    params = _params_of(net)
    _, analytic = _loss_and_gradients(params, activations, x, t)

    worst = 0.0
    for p, g in zip(params, analytic):
        for index in np.ndindex(p.shape):
            original = p[index]
            p[index] = original + h
            loss_plus, _ = _loss_and_gradients(params, activations, x, t)
            p[index] = original - h
            loss_minus, _ = _loss_and_gradients(params, activations, x, t)
            p[index] = original
            numeric = (loss_plus - loss_minus) / (2.0 * h)
            error = abs(g[index] - numeric) / max(abs(g[index]) + abs(numeric), 1e-4)
            worst = max(worst, error)
    return worst


def train_job(job: Tuple[CellDataset, Architecture, TrainConfig]) -> TrainResult:
    dataset, arch, cfg = job
    try:
        return train(dataset, arch, cfg)
    except Exception as e:
        raise CellTrainingError(dataset.cell, e) from e


def cell_config(cfg: TrainConfig, cell: int) -> TrainConfig:
    return replace(cfg, seed=cfg.seed ^ cell)


def train_all(
    datasets: Sequence[CellDataset],
    arch: Architecture,
    cfg: TrainConfig,
    workers: int = 1,
    skip_empty: bool = False,
) -> TrainingReport:
    """
    Train one network per dataset with seed ``cfg.seed ^ cell``.

    ``workers > 1`` fans the jobs out to a process pool; the networks are
    identical to a serial run. Empty datasets raise unless ``skip_empty``,
    in which case their slot in the report is ``None``.
    """
    jobs = []
    slots = []
    for i, dataset in enumerate(datasets):
        if skip_empty and dataset.is_empty:
            continue
        jobs.append((dataset, arch, cell_config(cfg, dataset.cell)))
        slots.append(i)

    started = time.perf_counter()
    if workers <= 1 or len(jobs) <= 1:
        trained = [train_job(job) for job in jobs]
        workers = 1
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            trained = list(pool.map(train_job, jobs))
    elapsed = time.perf_counter() - started

    results: List[Optional[TrainResult]] = [None] * len(datasets)
    for slot, result in zip(slots, trained):
        results[slot] = result

    logger.info(
        "[nn] Cell networks trained",
        extra={"cells": len(jobs), "workers": workers, "parallel_seconds": elapsed},
    )
    return TrainingReport(results=results, parallel_seconds=elapsed, workers=workers)
