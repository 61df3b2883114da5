"""Layered feedforward networks: construction, forward passes, derivatives, JSON I/O.

Layer ``l`` maps a post-activation ``x[l]`` to the pre-activation
``z[l] = W[l] @ x[l] + b[l]`` and then to ``x[l + 1] = h[l](z[l])``.
``x[0]`` is the network input and ``x[L]`` the output.
"""
from __future__ import annotations

import functools
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import FormatError, ShapeError, UnsupportedActivationError

SCHEMA_VERSION = 1

ELU_ALPHA = 1.0
# Multiplicative margin applied to grid-estimated derivative suprema.
SMOOTHNESS_SAFETY = 1.01


@dataclass(frozen=True)
class ActivationKind:
    name: str
    group_size: int = 1

    def __post_init__(self):
        if self.name not in _KINDS:
            raise UnsupportedActivationError(f"unknown activation {self.name!r}")
        if self.name == "maxpool":
            if int(self.group_size) != self.group_size or self.group_size < 2:
                raise ShapeError(f"maxpool group size must be an integer >= 2, got {self.group_size}")
        elif self.group_size != 1:
            raise ShapeError(f"{self.name} takes no group size")

    @property
    def is_maxpool(self) -> bool:
        return self.name == "maxpool"

    def output_width(self, n: int) -> int:
        if self.is_maxpool:
            if n % self.group_size:
                raise ShapeError(f"maxpool group {self.group_size} does not divide width {n}")
            return n // self.group_size
        return n

    def __str__(self):
        return f"maxpool({self.group_size})" if self.is_maxpool else self.name


_KINDS = ("relu", "sigmoid", "tanh", "elu", "identity", "maxpool")

RELU = ActivationKind("relu")
SIGMOID = ActivationKind("sigmoid")
TANH = ActivationKind("tanh")
ELU = ActivationKind("elu")
IDENTITY = ActivationKind("identity")


def maxpool(group_size: int) -> ActivationKind:
    return ActivationKind("maxpool", group_size)


SMOOTH_KINDS = (SIGMOID, TANH, ELU, IDENTITY)


def _frozen(a, ndim: int, what: str) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.ndim != ndim:
        raise ShapeError(f"{what} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ShapeError(f"{what} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Layer:
    weights: np.ndarray
    bias: np.ndarray
    activation: ActivationKind = IDENTITY

    def __post_init__(self):
        w = _frozen(self.weights, 2, "weights")
        b = _frozen(self.bias, 1, "bias")
        if w.shape[0] != b.shape[0]:
            raise ShapeError(f"weights have {w.shape[0]} rows but bias has length {b.shape[0]}")
        if isinstance(self.activation, str):
            object.__setattr__(self, "activation", ActivationKind(self.activation))
        self.activation.output_width(w.shape[0])
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    @property
    def n_pre(self) -> int:
        return self.weights.shape[0]

    @property
    def n_out(self) -> int:
        return self.activation.output_width(self.n_pre)

    def __eq__(self, other):
        if not isinstance(other, Layer):
            return NotImplemented
        return (self.activation == other.activation
                and np.array_equal(self.weights, other.weights)
                and np.array_equal(self.bias, other.bias))

    __hash__ = None


@dataclass(frozen=True)
class Network:
    layers: tuple[Layer, ...]

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ShapeError("a network needs at least one layer")
        for l in range(1, len(layers)):
            if layers[l].n_in != layers[l - 1].n_out:
                raise ShapeError(
                    f"layer {l} expects {layers[l].n_in} inputs but layer {l - 1} "
                    f"produces {layers[l - 1].n_out}")
        object.__setattr__(self, "layers", layers)

    def __len__(self):
        return len(self.layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].n_in

    @property
    def output_dim(self) -> int:
        return self.layers[-1].n_out

    def truncated(self, n_layers: int) -> "Network":
        """The subnetwork made of the first ``n_layers`` layers."""
        return Network(self.layers[:n_layers])

    def __call__(self, x) -> np.ndarray:
        return forward_batch(self, x)


@dataclass(frozen=True, eq=False)
class Trace:
    pre: tuple[np.ndarray, ...]
    post: tuple[np.ndarray, ...]

    @property
    def output(self) -> np.ndarray:
        return self.post[-1]


def _sigmoid(y):
    e = np.exp(-np.abs(y))
    return np.where(y >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _elu(y):
    return np.where(y > 0, y, ELU_ALPHA * np.expm1(np.minimum(y, 0.0)))


def activation_eval(kind: ActivationKind, y) -> np.ndarray:
    """Apply ``kind`` along the last axis of ``y``."""
    y = np.asarray(y, dtype=float)
    name = kind.name
    if name == "relu":
        return np.maximum(y, 0.0)
    if name == "sigmoid":
        return _sigmoid(y)
    if name == "tanh":
        return np.tanh(y)
    if name == "elu":
        return _elu(y)
    if name == "identity":
        return y.copy()
    kind.output_width(y.shape[-1])
    return y.reshape(*y.shape[:-1], -1, kind.group_size).max(axis=-1)


def _derivative(kind: ActivationKind, y: np.ndarray, order: int) -> np.ndarray:
    name = kind.name
    if name == "identity":
        return np.ones_like(y) if order == 1 else np.zeros_like(y)
    if name == "sigmoid":
        s = _sigmoid(y)
        ds = s * (1.0 - s)
        if order == 1:
            return ds
        if order == 2:
            return ds * (1.0 - 2.0 * s)
        return ds * (1.0 - 6.0 * s + 6.0 * s * s)
    if name == "tanh":
        t = np.tanh(y)
        dt = 1.0 - t * t
        if order == 1:
            return dt
        if order == 2:
            return -2.0 * t * dt
        return -2.0 * dt * (1.0 - 3.0 * t * t)
    if name == "elu":
        neg = ELU_ALPHA * np.exp(np.minimum(y, 0.0))
        if order == 1:
            return np.where(y > 0, 1.0, neg)
        return np.where(y > 0, 0.0, neg)
    raise UnsupportedActivationError(f"{kind} is not differentiable")


def activation_derivs(kind: ActivationKind, y, order: int = 1) -> np.ndarray:
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if kind.name in ("relu", "maxpool"):
        raise UnsupportedActivationError(f"{kind} has no classical derivative")
    return _derivative(kind, np.asarray(y, dtype=float), order)


@functools.lru_cache(maxsize=None)
def smoothness_constants(kind: ActivationKind) -> tuple[float, float]:
    """Return ``(gamma, eta)`` with gamma >= sup|h''| and eta >= sup|h'''|.

    The suprema are taken over a 10**6 point grid of [-10, 10] and inflated by
    ``SMOOTHNESS_SAFETY``. Both activations handled here have their extrema
    well inside that window and decay exponentially outside it.
    """
    if kind == IDENTITY:
        return 0.0, 0.0
    if kind not in (SIGMOID, TANH):
        raise UnsupportedActivationError(f"no smoothness constants for {kind}")
    grid = np.linspace(-10.0, 10.0, 1_000_001)
    gamma = float(np.abs(_derivative(kind, grid, 2)).max()) * SMOOTHNESS_SAFETY
    eta = float(np.abs(_derivative(kind, grid, 3)).max()) * SMOOTHNESS_SAFETY
    return gamma, eta


def lipschitz_constant(kind: ActivationKind) -> float:
    """Global Lipschitz constant of ``kind`` (2-norm to 2-norm)."""
    return 0.25 if kind == SIGMOID else 1.0


def forward(net: Network, x) -> Trace:
    x = np.asarray(x, dtype=float)
    if x.shape != (net.input_dim,):
        raise ShapeError(f"input has shape {x.shape}, network expects ({net.input_dim},)")
    if not np.all(np.isfinite(x)):
        raise ShapeError("input contains non-finite entries")
    pre, post = [], [x.copy()]
    for layer in net.layers:
        z = layer.weights @ post[-1] + layer.bias
        pre.append(z)
        post.append(activation_eval(layer.activation, z))
    return Trace(tuple(pre), tuple(post))


def forward_batch(net: Network, xs) -> np.ndarray:
    """Network outputs for a batch of inputs stacked along the first axis."""
    x = np.asarray(xs, dtype=float)
    if x.shape[-1] != net.input_dim:
        raise ShapeError(f"inputs have width {x.shape[-1]}, network expects {net.input_dim}")
    for layer in net.layers:
        x = activation_eval(layer.activation, x @ layer.weights.T + layer.bias)
    return x


def input_gradient(net: Network, x, c) -> tuple[float, np.ndarray]:
    """Value and input-gradient of ``c @ net(x)`` by reverse accumulation.

    ReLU uses derivative 0 at the kink; maxpool routes to the first maximal entry.
    """
    trace = forward(net, x)
    grad = np.asarray(c, dtype=float).copy()
    for layer, z in zip(reversed(net.layers), reversed(trace.pre)):
        kind = layer.activation
        if kind == RELU:
            gz = grad * (z > 0)
        elif kind.is_maxpool:
            groups = z.reshape(-1, kind.group_size)
            gz = np.zeros_like(groups)
            gz[np.arange(groups.shape[0]), groups.argmax(axis=1)] = grad
            gz = gz.ravel()
        else:
            gz = grad * _derivative(kind, z, 1)
        grad = layer.weights.T @ gz
    return float(np.dot(c, trace.output)), grad


# -- serialization ---------------------------------------------------------

def _activation_to_json(kind: ActivationKind):
    return {"maxpool": kind.group_size} if kind.is_maxpool else kind.name


def _activation_from_json(doc) -> ActivationKind:
    if isinstance(doc, str):
        if doc == "maxpool":
            raise FormatError('maxpool must be given as {"maxpool": group_size}')
        try:
            return ActivationKind(doc.lower())
        except UnsupportedActivationError as exc:
            raise FormatError(str(exc)) from None
    if isinstance(doc, dict) and set(doc) == {"maxpool"}:
        g = doc["maxpool"]
        if not isinstance(g, int) or isinstance(g, bool):
            raise FormatError(f"maxpool group size must be an integer, got {g!r}")
        return maxpool(g)
    raise FormatError(f"cannot parse activation {doc!r}")


def network_to_dict(net: Network) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "layers": [
            {"weights": layer.weights.tolist(),
             "bias": layer.bias.tolist(),
             "activation": _activation_to_json(layer.activation)}
            for layer in net.layers
        ],
    }


def network_from_dict(doc) -> Network:
    if not isinstance(doc, dict) or not isinstance(doc.get("layers"), list):
        raise FormatError('network document needs a "layers" list')
    layers = []
    for i, entry in enumerate(doc["layers"]):
        if not isinstance(entry, dict) or not {"weights", "bias"} <= set(entry):
            raise FormatError(f"layer {i} needs weights and bias")
        try:
            weights = np.array(entry["weights"], dtype=float)
            bias = np.array(entry["bias"], dtype=float)
        except (TypeError, ValueError) as exc:
            raise FormatError(f"layer {i}: {exc}") from None
        activation = _activation_from_json(entry.get("activation", "identity"))
        layers.append(Layer(weights, bias, activation))
    return Network(tuple(layers))


def save_network(net: Network) -> bytes:
    return json.dumps(network_to_dict(net), indent=2).encode("utf-8")


def load_network(data: bytes | str) -> Network:
    try:
        doc = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"invalid JSON: {exc}") from None
    return network_from_dict(doc)


def random_network(rng: np.random.Generator, widths: Sequence[int],
                   activations: Sequence[ActivationKind], scale: float = 1.0) -> Network:
    """Gaussian random network; ``widths`` lists the pre-activation widths after the input.

    ``widths[0]`` is the input dimension, ``widths[l + 1]`` the pre-activation
    width of layer ``l``.
    """
    layers = []
    n_in = widths[0]
    for n_pre, kind in zip(widths[1:], activations):
        w = rng.normal(size=(n_pre, n_in)) * scale / np.sqrt(n_in)
        b = rng.normal(size=n_pre) * 0.5 * scale
        layer = Layer(w, b, kind)
        layers.append(layer)
        n_in = layer.n_out
    return Network(tuple(layers))
