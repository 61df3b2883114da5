"""Random instance builders shared by the test modules."""
import numpy as np

from dualverify.input_sets import Box, CardinalityBall, NormBall
from dualverify.network import ELU, RELU, SIGMOID, TANH, Layer, Network, maxpool
from dualverify.single_layer import SingleLayerProblem, smoothness

SMOOTH = (SIGMOID, TANH, ELU)
ALL_KINDS = ("relu", "sigmoid", "tanh", "elu", "maxpool")


def _kind(name, rng):
    if name == "maxpool":
        return maxpool(int(rng.integers(2, 5)))
    return {"relu": RELU, "sigmoid": SIGMOID, "tanh": TANH, "elu": ELU}[name]


def random_net(rng, n_layers=None, max_width=8, kinds=ALL_KINDS, input_dim=None, scale=1.0):
    """Random network whose layer activations are drawn from ``kinds``."""
    if n_layers is None:
        n_layers = int(rng.integers(2, 5))
    n_in = int(input_dim or rng.integers(1, max_width + 1))
    first_in = n_in
    layers = []
    for _ in range(n_layers):
        kind = _kind(kinds[rng.integers(len(kinds))], rng)
        g = kind.group_size
        n_pre = g * int(rng.integers(1, max_width // g + 1))
        w = rng.normal(size=(n_pre, n_in)) * scale / np.sqrt(n_in)
        b = rng.normal(size=n_pre) * 0.5 * scale
        layers.append(Layer(w, b, kind))
        n_in = layers[-1].n_out
    net = Network(tuple(layers))
    assert net.input_dim == first_in
    return net


def random_set(rng, dim, center=None, kinds=("box", "1", "2", "inf", "card")):
    center = rng.normal(size=dim) if center is None else np.asarray(center, dtype=float)
    kind = kinds[rng.integers(len(kinds))]
    radius = float(rng.uniform(0.05, 1.0))
    if kind == "box":
        lo = center - rng.uniform(0, 1, size=dim)
        return Box(lo, lo + rng.uniform(0, 1, size=dim))
    if kind == "card":
        return CardinalityBall(center, radius, int(rng.integers(0, dim + 1)))
    return NormBall(kind, center, radius)


def single_layer_problem(rng, activation, eps=0.1, max_dim=2, max_hidden=4):
    d = int(rng.integers(1, max_dim + 1))
    n = int(rng.integers(1, max_hidden + 1))
    return SingleLayerProblem(rng.normal(size=(n, d)), rng.normal(size=n), rng.normal(size=n),
                              rng.normal(size=d), eps, activation)


def contractive_problem(rng, activation, max_dim=2):
    """A single-layer problem whose radius is strictly inside the guaranteed range."""
    while True:
        p = single_layer_problem(rng, activation, max_dim=max_dim)
        sd = smoothness(p)
        if sd.nu > 1e-3:
            return p.with_eps(float(rng.uniform(0.1, 0.9)) * sd.radius_threshold)
