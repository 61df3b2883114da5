"""Lagrangian dual bound on ``max c @ x[L] + d`` and its subgradient minimisation.

Relaxing the layer equalities with multipliers ``lam[l]`` (on
``x[l + 1] = h(z[l])``, l < L-1) and ``mu[l]`` (on ``z[l] = W x[l] + b``)
splits the inner maximisation into independent pieces:

* one conjugate subproblem per neuron of every ``z[l]``, with the output layer
  using ``lam = -c``;
* a box-corner linear problem for each hidden ``x[l]``, l >= 1;
* a linear problem over the input set for ``x[0]``.

For any multipliers the sum is an upper bound on the verification objective,
and it is convex in the multipliers.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bounds import ActivationBounds
from .conjugates import conjugate
from .errors import ShapeError
from .input_sets import InputSet, f0
from .network import Network, activation_eval


@dataclass(frozen=True, eq=False)
class DualVariables:
    lam: tuple[np.ndarray, ...]
    mu: tuple[np.ndarray, ...]

    @classmethod
    def zeros(cls, net: Network) -> "DualVariables":
        lam = tuple(np.zeros(layer.n_out) for layer in net.layers[:-1])
        mu = tuple(np.zeros(layer.n_pre) for layer in net.layers)
        return cls(lam, mu)

    @classmethod
    def random(cls, net: Network, rng: np.random.Generator, scale: float = 1.0) -> "DualVariables":
        lam = tuple(rng.normal(scale=scale, size=layer.n_out) for layer in net.layers[:-1])
        mu = tuple(rng.normal(scale=scale, size=layer.n_pre) for layer in net.layers)
        return cls(lam, mu)

    def check_against(self, net: Network) -> None:
        if len(self.lam) != len(net) - 1 or len(self.mu) != len(net):
            raise ShapeError("dual variables do not match the network depth")
        for l, layer in enumerate(net.layers):
            if self.mu[l].shape != (layer.n_pre,):
                raise ShapeError(f"mu[{l}] should have length {layer.n_pre}")
            if l < len(net) - 1 and self.lam[l].shape != (layer.n_out,):
                raise ShapeError(f"lam[{l}] should have length {layer.n_out}")

    def flat(self) -> np.ndarray:
        return np.concatenate(self.lam + self.mu) if self.lam or self.mu else np.zeros(0)

    def unflatten(self, vec: np.ndarray) -> "DualVariables":
        parts, i = [], 0
        for a in self.lam + self.mu:
            parts.append(vec[i:i + a.size].copy())
            i += a.size
        n = len(self.lam)
        return DualVariables(tuple(parts[:n]), tuple(parts[n:]))

    def combine(self, other: "DualVariables", theta: float) -> "DualVariables":
        """``theta * self + (1 - theta) * other``."""
        return self.unflatten(theta * self.flat() + (1.0 - theta) * other.flat())


@dataclass(frozen=True, eq=False)
class DualEvaluation:
    bound: float
    subgrad: DualVariables
    pre_witness: tuple[np.ndarray, ...]
    post_witness: tuple[np.ndarray, ...]

    @property
    def subgrad_lambda(self):
        return self.subgrad.lam

    @property
    def subgrad_mu(self):
        return self.subgrad.mu


def dual_objective(net: Network, c, d: float, input_set: InputSet,
                   bounds: ActivationBounds, duals: DualVariables) -> DualEvaluation:
    c = np.asarray(c, dtype=float)
    if c.shape != (net.output_dim,):
        raise ShapeError(f"c has shape {c.shape}, network output width is {net.output_dim}")
    if input_set.dim != net.input_dim:
        raise ShapeError("input set dimension does not match the network")
    bounds.check_against(net)
    duals.check_against(net)

    n = len(net)
    total = float(d)
    z_star, x_star = [], []
    for l, layer in enumerate(net.layers):
        lam_l = duals.lam[l] if l < n - 1 else -c
        res = conjugate(layer.activation, lam_l, duals.mu[l], bounds.prel[l], bounds.preu[l])
        total += float(np.sum(res.value))
        z_star.append(np.asarray(res.argmax, dtype=float))

        if l == 0:
            value, x = f0(duals.mu[0], layer.weights, layer.bias, input_set)
        else:
            coef = duals.lam[l - 1] - layer.weights.T @ duals.mu[l]
            # zero coefficients take the lower corner
            x = np.where(coef > 0, bounds.postu[l], bounds.postl[l])
            value = float(coef @ x - layer.bias @ duals.mu[l])
        total += value
        x_star.append(x)

    g_mu = tuple(z_star[l] - (layer.weights @ x_star[l] + layer.bias)
                 for l, layer in enumerate(net.layers))
    g_lam = tuple(x_star[l + 1] - activation_eval(net.layers[l].activation, z_star[l])
                  for l in range(n - 1))
    return DualEvaluation(total, DualVariables(g_lam, g_mu), tuple(z_star), tuple(x_star))


@dataclass(frozen=True)
class DualConfig:
    iterations: int = 500
    step_size: float = 0.1
    # "sqrt": step_size / sqrt(t + 1); "constant": step_size
    schedule: str = "sqrt"

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.schedule not in ("sqrt", "constant"):
            raise ValueError(f"unknown step schedule {self.schedule!r}")

    def step(self, t: int) -> float:
        return self.step_size / np.sqrt(t + 1.0) if self.schedule == "sqrt" else self.step_size


@dataclass(frozen=True, eq=False)
class DualResult:
    bound: float
    duals: DualVariables
    history: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.history) - 1


def minimize_dual(net: Network, c, d: float, input_set: InputSet, bounds: ActivationBounds,
                  config: DualConfig = DualConfig(), start: DualVariables | None = None) -> DualResult:
    """Subgradient descent on the dual bound from zero multipliers, keeping the best iterate.

    ``history[t]`` is the best bound seen after ``t`` steps, so every prefix is
    itself a valid certificate.
    """
    duals = DualVariables.zeros(net) if start is None else start
    ev = dual_objective(net, c, d, input_set, bounds, duals)
    best, best_duals = ev.bound, duals
    history = [best]
    theta = duals.flat()
    for t in range(config.iterations):
        g = ev.subgrad.flat()
        gmax = float(np.abs(g).max()) if g.size else 0.0
        if gmax == 0.0:
            # zero subgradient: the current point is optimal
            history.extend([best] * (config.iterations - t))
            break
        theta = theta - config.step(t) * g / (1.0 + gmax)
        duals = duals.unflatten(theta)
        ev = dual_objective(net, c, d, input_set, bounds, duals)
        if ev.bound < best:
            best, best_duals = ev.bound, duals
        history.append(best)
    return DualResult(best, best_duals, history)


def convexity_probe(net: Network, c, d: float, input_set: InputSet, bounds: ActivationBounds,
                    duals_a: DualVariables, duals_b: DualVariables,
                    thetas=(0.25, 0.5, 0.75), tol: float = 1e-7) -> bool:
    """Check the dual bound lies below its chords between two multiplier settings."""
    ga = dual_objective(net, c, d, input_set, bounds, duals_a).bound
    gb = dual_objective(net, c, d, input_set, bounds, duals_b).bound
    for theta in thetas:
        mid = dual_objective(net, c, d, input_set, bounds, duals_a.combine(duals_b, theta)).bound
        if mid > theta * ga + (1.0 - theta) * gb + tol:
            return False
    return True
