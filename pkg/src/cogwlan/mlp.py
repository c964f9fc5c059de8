"""Multilayer perceptron with sigmoid activations, trained by plain
per-sample backpropagation.

Every neuron computes a weighted sum of its inputs plus a bias and squashes
it through the logistic function, so all layer outputs live in the open
interval (0, 1). The same network type drives both the per-node behavior
generators and the deviation-detection nets, so everything here is kept
deterministic: a fixed (layer spec, seed, data, config) tuple always yields
bit-identical weights and error history.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import StructuralError, TrainingError, ValidationError

NET_FORMAT = "cogwlan-net/1"

# Interior clamp: float64 rounds the logistic tails to exactly 0.0 / 1.0 for
# |y| > ~37, which would break the open-interval contract of the outputs.
_SIG_LO = float(np.nextafter(0.0, 1.0))
_SIG_HI = float(np.nextafter(1.0, 0.0))


@dataclass(frozen=True)
class LayerSpec:
    """Neuron counts per layer; first entry is the input dimension."""

    sizes: tuple[int, ...]

    def __post_init__(self) -> None:
        sizes = tuple(int(s) for s in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if len(sizes) < 2:
            raise StructuralError("layer spec needs at least input and output sizes")
        if any(s < 1 for s in sizes):
            raise StructuralError(f"layer sizes must be >= 1, got {sizes}")

    @property
    def input_size(self) -> int:
        return self.sizes[0]

    @property
    def output_size(self) -> int:
        return self.sizes[-1]


@dataclass
class TrainingConfig:
    """Hyperparameters for backprop training runs."""

    learning_rate: float = 0.2
    iterations: int = 10000
    seed: int = 0
    init_scale: float = 0.5

    def __post_init__(self) -> None:
        if not (0.0 < self.learning_rate <= 1.0):
            raise ValidationError(f"learning_rate must be in (0, 1], got {self.learning_rate}")
        if self.iterations < 1:
            raise ValidationError(f"iterations must be >= 1, got {self.iterations}")
        if self.init_scale < 0.0:
            raise ValidationError(f"init_scale must be >= 0, got {self.init_scale}")
        if self.seed < 0:
            raise ValidationError(f"seed must be non-negative, got {self.seed}")


@dataclass
class Sample:
    """One training pair; target components must lie in [0, 1]."""

    input: np.ndarray
    target: np.ndarray

    def __post_init__(self) -> None:
        self.input = np.asarray(self.input, dtype=np.float64)
        self.target = np.asarray(self.target, dtype=np.float64)


@dataclass
class NetworkWeights:
    """Per-layer weight matrices (rows = neurons) and bias vectors."""

    weights: list[np.ndarray] = field(default_factory=list)
    biases: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self) -> None:
        if len(self.weights) != len(self.biases) or not self.weights:
            raise StructuralError("need one weight matrix and one bias vector per layer")
        prev_out = None
        for li, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise StructuralError(f"layer {li}: weight/bias shapes inconsistent")
            if prev_out is not None and w.shape[1] != prev_out:
                raise StructuralError(f"layer {li}: input size {w.shape[1]} != previous output {prev_out}")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise StructuralError(f"layer {li}: non-finite weights")
            prev_out = w.shape[0]

    def layer_spec(self) -> LayerSpec:
        return LayerSpec((self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights))

    def copy(self) -> "NetworkWeights":
        return NetworkWeights([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def to_obj(self) -> dict:
        """Plain-JSON form: layer sizes plus row-major weight arrays and biases."""
        return {
            "format": NET_FORMAT,
            "sizes": list(self.layer_spec().sizes),
            "layers": [
                {"weights": w.tolist(), "biases": b.tolist()}
                for w, b in zip(self.weights, self.biases)
            ],
        }

    @classmethod
    def from_obj(cls, doc: dict) -> "NetworkWeights":
        if doc.get("format") != NET_FORMAT:
            raise StructuralError(f"unsupported network format {doc.get('format')!r}")
        try:
            weights = [np.asarray(layer["weights"], dtype=np.float64) for layer in doc["layers"]]
            biases = [np.asarray(layer["biases"], dtype=np.float64) for layer in doc["layers"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise StructuralError(f"malformed network document: {exc}") from exc
        net = cls(weights, biases)
        if list(net.layer_spec().sizes) != list(doc["sizes"]):
            raise StructuralError("declared sizes do not match stored matrices")
        return net

    def to_document(self) -> str:
        """Serialize to versioned JSON text; floats keep full round-trip precision."""
        return json.dumps(self.to_obj(), sort_keys=True)

    @classmethod
    def from_document(cls, text: str) -> "NetworkWeights":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise StructuralError(f"unparsable network document: {exc}") from exc
        return cls.from_obj(doc)


def weights_equal(a: NetworkWeights, b: NetworkWeights) -> bool:
    return (
        len(a.weights) == len(b.weights)
        and all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights))
        and all(np.array_equal(x, y) for x, y in zip(a.biases, b.biases))
    )


def init_weights(spec: LayerSpec, config: TrainingConfig) -> NetworkWeights:
    """Draw weights uniformly from [-init_scale, +init_scale]; biases start at zero."""
    rng = np.random.default_rng(config.seed)
    weights = []
    biases = []
    for n_in, n_out in zip(spec.sizes[:-1], spec.sizes[1:]):
        weights.append(rng.uniform(-config.init_scale, config.init_scale, size=(n_out, n_in)))
        biases.append(np.zeros(n_out, dtype=np.float64))
    return NetworkWeights(weights, biases)


def zero_weights(spec: LayerSpec) -> NetworkWeights:
    """All-zero network: every output is exactly 0.5 regardless of input."""
    weights = [np.zeros((n_out, n_in)) for n_in, n_out in zip(spec.sizes[:-1], spec.sizes[1:])]
    biases = [np.zeros(n_out) for n_out in spec.sizes[1:]]
    return NetworkWeights(weights, biases)


def sigmoid(y: float) -> float:
    """Logistic function 1/(1+e^-y), numerically stable for any finite y."""
    if y >= 0.0:
        out = 1.0 / (1.0 + math.exp(-y))
    else:
        ey = math.exp(y)
        out = ey / (1.0 + ey)
    return min(max(out, _SIG_LO), _SIG_HI)


def neuron_output(inputs: Sequence[float], weights: Sequence[float], bias: float) -> float:
    """Single sigmoid neuron: squash the weighted input sum plus bias."""
    x = np.asarray(inputs, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if x.shape != w.shape or x.ndim != 1:
        raise StructuralError(f"inputs ({x.shape}) and weights ({w.shape}) must be equal-length vectors")
    if not (np.isfinite(x).all() and np.isfinite(w).all() and math.isfinite(bias)):
        raise ValidationError("neuron inputs, weights and bias must be finite")
    return sigmoid(float(x @ w) + float(bias))


def _sigmoid_vec_inplace(z: np.ndarray) -> np.ndarray:
    # exp overflow for very negative z saturates to the clamped tail value
    np.negative(z, out=z)
    np.exp(z, out=z)
    z += 1.0
    np.reciprocal(z, out=z)
    np.clip(z, _SIG_LO, _SIG_HI, out=z)
    return z


def forward(net: NetworkWeights, input: Sequence[float]) -> np.ndarray:
    """Evaluate the network layer by layer; output components are in (0, 1)."""
    a = np.asarray(input, dtype=np.float64)
    if a.ndim != 1 or a.shape[0] != net.weights[0].shape[1]:
        raise StructuralError(
            f"input length {a.shape} does not match first layer ({net.weights[0].shape[1]})"
        )
    with np.errstate(over="ignore"):
        for w, b in zip(net.weights, net.biases):
            a = _sigmoid_vec_inplace(w @ a + b)
    return a


def _forward_batch(net: NetworkWeights, inputs: np.ndarray) -> np.ndarray:
    a = inputs
    with np.errstate(over="ignore"):
        for w, b in zip(net.weights, net.biases):
            a = _sigmoid_vec_inplace(a @ w.T + b)
    return a


def _check_samples(net: NetworkWeights, data: Sequence[Sample]) -> tuple[np.ndarray, np.ndarray]:
    spec = net.layer_spec()
    for i, s in enumerate(data):
        if s.input.shape != (spec.input_size,):
            raise StructuralError(f"sample {i}: input shape {s.input.shape} != ({spec.input_size},)")
        if s.target.shape != (spec.output_size,):
            raise StructuralError(f"sample {i}: target shape {s.target.shape} != ({spec.output_size},)")
        if ((s.target < 0.0) | (s.target > 1.0)).any():
            raise ValidationError(f"sample {i}: target components must lie in [0, 1]")
    inputs = np.stack([s.input for s in data])
    targets = np.stack([s.target for s in data])
    return inputs, targets


def _backward(
    weights: list[np.ndarray],
    activations: list[np.ndarray],
    target: np.ndarray,
) -> list[np.ndarray]:
    """Per-layer deltas for the squared-error loss 0.5*||output - target||^2."""
    out = activations[-1]
    deltas = [np.empty(0)] * len(weights)
    deltas[-1] = (out - target) * out * (1.0 - out)
    for li in range(len(weights) - 1, 0, -1):
        a = activations[li]
        deltas[li - 1] = (weights[li].T @ deltas[li]) * a * (1.0 - a)
    return deltas


def gradient(net: NetworkWeights, sample: Sample) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Analytic gradient of 0.5*||forward(input) - target||^2 per weight and bias."""
    _check_samples(net, [sample])
    activations = [sample.input]
    a = sample.input
    with np.errstate(over="ignore"):
        for w, b in zip(net.weights, net.biases):
            a = _sigmoid_vec_inplace(w @ a + b)
            activations.append(a)
    deltas = _backward(net.weights, activations, sample.target)
    grad_w = [np.outer(d, activations[li]) for li, d in enumerate(deltas)]
    grad_b = [d.copy() for d in deltas]
    return grad_w, grad_b


def mean_squared_error(net: NetworkWeights, data: Sequence[Sample]) -> float:
    """MSE over all samples and output components."""
    inputs, targets = _check_samples(net, data)
    preds = _forward_batch(net, inputs)
    return float(np.mean((preds - targets) ** 2))


def train_backprop(
    net: NetworkWeights,
    data: Sequence[Sample],
    config: TrainingConfig,
) -> tuple[NetworkWeights, list[float]]:
    """Run `iterations` passes of per-sample gradient descent in fixed sample order.

    Returns the trained weights and the dataset MSE recorded after each pass.
    """
    if not data:
        raise ValidationError("training data must not be empty")
    inputs, targets = _check_samples(net, data)
    weights = [w.copy() for w in net.weights]
    biases = [b.copy() for b in net.biases]
    n_layers = len(weights)
    lr = config.learning_rate
    history: list[float] = []
    activations: list[np.ndarray] = [np.empty(0)] * (n_layers + 1)

    with np.errstate(over="ignore"):
        for pass_idx in range(config.iterations):
            for x, t in zip(inputs, targets):
                a = x
                activations[0] = x
                for li in range(n_layers):
                    a = _sigmoid_vec_inplace(weights[li] @ a + biases[li])
                    activations[li + 1] = a
                deltas = _backward(weights, activations, t)
                for li in range(n_layers):
                    d = deltas[li]
                    d *= lr
                    weights[li] -= np.outer(d, activations[li])
                    biases[li] -= d
            preds = inputs
            for li in range(n_layers):
                preds = _sigmoid_vec_inplace(preds @ weights[li].T + biases[li])
            err = float(np.mean((preds - targets) ** 2))
            if not math.isfinite(err):
                raise TrainingError(f"training diverged to non-finite values at pass {pass_idx}")
            history.append(err)

    return NetworkWeights(weights, biases), history
