"""A small feed-forward approximator with analytic gradients.

Hidden layers use tanh, the output is linear, and training is plain
mini-batch gradient descent with optional momentum. Everything is
deterministic given the seed: fixed shuffles, single-threaded reduction
order within a batch, and a fixed backend selected at import.

Input/output standardization is computed from the training set on the
first fit and stored with the model; fine-tuning keeps the stored
constants so the parameter space stays comparable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .errors import Diverged, NoTrainingData, ShapeError

# Floor applied to per-dimension standard deviations so constant
# dimensions standardize to zero instead of dividing by zero.
STD_FLOOR = 1e-9

# A loss this many times above its starting value is a blow-up even if it
# never reaches inf; float64 overflows only past 1e308, so waiting for
# non-finite values can let a diverged run finish "successfully".
DIVERGENCE_FACTOR = 1e4


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one fit call."""

    learning_rate: float = 0.05
    epochs: int = 1000
    batch_size: int = 128
    seed: int = 0
    weight_decay: float = 0.0
    momentum: float = 0.9

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")

    def to_record(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "weight_decay": self.weight_decay,
            "momentum": self.momentum,
        }

    @classmethod
    def from_record(cls, r: dict) -> "TrainConfig":
        return cls(
            learning_rate=float(r["learning_rate"]),
            epochs=int(r["epochs"]),
            batch_size=int(r["batch_size"]),
            seed=int(r["seed"]),
            weight_decay=float(r["weight_decay"]),
            momentum=float(r["momentum"]),
        )


@dataclass(frozen=True)
class Approximator:
    """Weights-and-biases bundle with optional standardization constants."""

    sizes: tuple
    weights: tuple  # tuple of (out, in) float64 arrays
    biases: tuple  # tuple of (out,) float64 arrays
    x_mean: np.ndarray | None = None
    x_std: np.ndarray | None = None
    y_mean: np.ndarray | None = None
    y_std: np.ndarray | None = None

    def __post_init__(self):
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.sizes[i + 1], self.sizes[i]) or b.shape != (self.sizes[i + 1],):
                raise ShapeError(
                    f"layer {i} parameter shapes {w.shape}/{b.shape} do not chain "
                    f"with sizes {self.sizes}"
                )
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError("parameters must be finite")

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    @property
    def standardized(self) -> bool:
        return self.x_mean is not None

    def copy_params(self):
        return [w.copy() for w in self.weights], [b.copy() for b in self.biases]

    def param_hash(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for w, b in zip(self.weights, self.biases):
            h.update(w.tobytes())
            h.update(b.tobytes())
        return h.hexdigest()

    def to_record(self) -> dict:
        rec = {
            "kind": "model",
            "sizes": list(self.sizes),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }
        if self.standardized:
            rec["standardization"] = {
                "x_mean": self.x_mean.tolist(),
                "x_std": self.x_std.tolist(),
                "y_mean": self.y_mean.tolist(),
                "y_std": self.y_std.tolist(),
            }
        return rec

    @classmethod
    def from_record(cls, r: dict) -> "Approximator":
        std = r.get("standardization")
        return cls(
            sizes=tuple(int(s) for s in r["sizes"]),
            weights=tuple(np.array(w, dtype=np.float64) for w in r["weights"]),
            biases=tuple(np.array(b, dtype=np.float64) for b in r["biases"]),
            x_mean=None if std is None else np.array(std["x_mean"]),
            x_std=None if std is None else np.array(std["x_std"]),
            y_mean=None if std is None else np.array(std["y_mean"]),
            y_std=None if std is None else np.array(std["y_std"]),
        )


def initialize(sizes, seed: int = 0) -> Approximator:
    """Glorot-uniform initialization from a seeded generator."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    weights = []
    biases = []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Approximator(sizes=tuple(sizes), weights=tuple(weights), biases=tuple(biases))


def _standardize_x(net: Approximator, X: np.ndarray) -> np.ndarray:
    if not net.standardized:
        return X
    return (X - net.x_mean) / net.x_std


def _destandardize_y(net: Approximator, Y: np.ndarray) -> np.ndarray:
    if not net.standardized:
        return Y
    return Y * net.y_std + net.y_mean


def forward_batch(net: Approximator, X: np.ndarray, backend=None) -> np.ndarray:
    backend = backend or _kernels.active
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
    if X.shape[1] != net.in_dim:
        raise ShapeError(f"input dim {X.shape[1]} != expected {net.in_dim}")
    out = backend.forward(list(net.weights), list(net.biases), _standardize_x(net, X))
    return _destandardize_y(net, out)


def forward(net: Approximator, x) -> np.ndarray:
    """Evaluate the network on a single input vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != net.in_dim:
        raise ShapeError(f"input shape {x.shape} != expected ({net.in_dim},)")
    return forward_batch(net, x[None, :])[0]


@dataclass(frozen=True)
class ParamGrad:
    """Per-layer gradients, shaped like the parameters."""

    weights: tuple
    biases: tuple


def grad(net: Approximator, batch, backend=None) -> ParamGrad:
    """Gradient of the mean squared error over a batch.

    The loss is mean over samples of the sum-squared residual of the full
    forward pass (standardization included), so the result matches central
    finite differences of that loss.
    """
    if not batch:
        raise NoTrainingData("gradient needs a non-empty batch")
    backend = backend or _kernels.active
    X = np.ascontiguousarray([np.asarray(x, dtype=np.float64) for x, _ in batch])
    Y = np.ascontiguousarray([np.asarray(y, dtype=np.float64) for _, y in batch])
    if X.shape[1] != net.in_dim or Y.shape[1] != net.out_dim:
        raise ShapeError(
            f"batch dims {X.shape[1]}->{Y.shape[1]} != expected {net.in_dim}->{net.out_dim}"
        )
    Xs = np.ascontiguousarray(_standardize_x(net, X))
    raw_out = backend.forward(list(net.weights), list(net.biases), Xs)
    resid = _destandardize_y(net, raw_out) - Y
    gy = 2.0 * resid / len(batch)
    if net.standardized:
        gy = gy * net.y_std
    gWs, gbs = backend.backward(
        list(net.weights), list(net.biases), Xs, np.ascontiguousarray(gy)
    )
    return ParamGrad(weights=tuple(gWs), biases=tuple(gbs))


def loss_mse(net: Approximator, batch) -> float:
    X = np.ascontiguousarray([np.asarray(x, dtype=np.float64) for x, _ in batch])
    Y = np.ascontiguousarray([np.asarray(y, dtype=np.float64) for _, y in batch])
    resid = forward_batch(net, X) - Y
    return float((resid * resid).sum() / len(batch))


@dataclass
class FitResult:
    net: Approximator
    loss_curve: list = field(default_factory=list)


def fit(net: Approximator, data, cfg: TrainConfig, backend=None) -> FitResult:
    """Mini-batch gradient descent on squared error.

    ``data`` is a sequence of (x, y) pairs or a pre-split (X, Y) array
    tuple. Returns a new model; the input model is never modified. The
    per-epoch loss is measured in standardized space.
    """
    backend = backend or _kernels.active
    if isinstance(data, tuple):
        X, Y = data
        X = np.ascontiguousarray(X, dtype=np.float64)
        Y = np.ascontiguousarray(Y, dtype=np.float64)
    else:
        if len(data) == 0:
            raise NoTrainingData("fit needs at least one sample")
        X = np.ascontiguousarray([np.asarray(x, dtype=np.float64) for x, _ in data])
        Y = np.ascontiguousarray([np.asarray(y, dtype=np.float64) for _, y in data])
    if len(X) == 0:
        raise NoTrainingData("fit needs at least one sample")
    if X.shape[1] != net.in_dim or Y.shape[1] != net.out_dim:
        raise ShapeError(
            f"data dims {X.shape[1]}->{Y.shape[1]} != expected {net.in_dim}->{net.out_dim}"
        )

    if net.standardized:
        model = net
    else:
        x_mean = X.mean(axis=0)
        x_std = np.maximum(X.std(axis=0), STD_FLOOR)
        y_mean = Y.mean(axis=0)
        y_std = np.maximum(Y.std(axis=0), STD_FLOOR)
        model = replace(net, x_mean=x_mean, x_std=x_std, y_mean=y_mean, y_std=y_std)

    Xs = np.ascontiguousarray((X - model.x_mean) / model.x_std)
    Ys = np.ascontiguousarray((Y - model.y_mean) / model.y_std)

    Ws, bs = model.copy_params()
    vWs = [np.zeros_like(w) for w in Ws]
    vbs = [np.zeros_like(b) for b in bs]
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    curve = []
    for epoch in range(cfg.epochs):
        perm = rng.permutation(len(Xs))
        loss = backend.train_epoch(
            Ws,
            bs,
            vWs,
            vbs,
            Xs,
            Ys,
            perm,
            min(cfg.batch_size, len(Xs)),
            cfg.learning_rate,
            cfg.momentum,
            cfg.weight_decay,
        )
        if not math.isfinite(loss) or loss > DIVERGENCE_FACTOR * max(
            curve[0] if curve else loss, 1.0
        ):
            raise Diverged(f"loss blew up to {loss:.3e} at epoch {epoch}")
        curve.append(loss)
    trained = replace(model, weights=tuple(Ws), biases=tuple(bs))
    return FitResult(net=trained, loss_curve=curve)


def rmse(net: Approximator, X: np.ndarray, Y: np.ndarray) -> float:
    """Root mean squared vector error, in the units of Y."""
    resid = forward_batch(net, X) - Y
    return float(np.sqrt((resid**2).sum(axis=1).mean()))


def mapping_architecture() -> list:
    """Default pixel-to-position network size."""
    return [2, 64, 64, 3]


def policy_architecture(n_objects: int) -> list:
    """Default policy network size for a fixed object count.

    The state embeds 7 robot dims plus, per object, its absolute position
    and its offset from the end-effector.
    """
    return [7 + 6 * n_objects, 128, 128, 7]
