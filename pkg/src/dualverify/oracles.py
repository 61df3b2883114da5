"""Independent comparators: brute-force grids and a projected-gradient attack."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import PreconditionError
from .input_sets import Box, CardinalityBall, InputSet, NormBall
from .network import Network, forward_batch, input_gradient, lipschitz_constant

MAX_GRID_DIM = 3


@dataclass(frozen=True, eq=False)
class GridResult:
    value: float
    argmax: np.ndarray
    # the true maximum lies in [value, value + error]
    error: float
    n_points: int


def objective_lipschitz(net: Network, c) -> float:
    """Crude global Lipschitz constant of ``x -> c @ net(x)`` in the 2-norm."""
    lip = float(np.linalg.norm(c))
    for layer in net.layers:
        lip *= np.linalg.norm(layer.weights, 2) * lipschitz_constant(layer.activation)
    return lip


def _axis_grid(lo, hi, n):
    return [np.linspace(a, b, n) for a, b in zip(lo, hi)]


def _grid_points(input_set: InputSet, resolution: int) -> tuple[np.ndarray, float]:
    """Grid points inside the set and the covering radius of those points."""
    lo, hi = input_set.bounding_box()
    d = input_set.dim
    spacing = float(np.max(hi - lo)) / (resolution - 1)
    if isinstance(input_set, CardinalityBall):
        # union of the grids on every k-coordinate face through the centre
        n = resolution if resolution % 2 else resolution + 1
        pts = []
        axes = _axis_grid(lo, hi, n)
        for support in itertools.combinations(range(d), input_set.k):
            mesh = np.meshgrid(*[axes[i] for i in support], indexing="ij")
            block = np.tile(input_set.center, (mesh[0].size if support else 1, 1))
            for i, m in zip(support, mesh):
                block[:, i] = m.ravel()
            pts.append(block)
        spacing = float(np.max(hi - lo)) / (n - 1)
        return np.unique(np.vstack(pts), axis=0), spacing * np.sqrt(max(input_set.k, 1)) / 2
    mesh = np.meshgrid(*_axis_grid(lo, hi, resolution), indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    if isinstance(input_set, Box) or (isinstance(input_set, NormBall) and input_set.p == np.inf):
        return pts, spacing * np.sqrt(d) / 2
    diff = pts - input_set.center
    norms = np.linalg.norm(diff, ord=input_set.p, axis=1)
    pts = pts[norms <= input_set.radius * (1 + 1e-12)]
    # shrink any feasible point towards the centre, then snap to the grid
    return pts, spacing * d


def grid_oracle(net: Network, c, d: float, input_set: InputSet, resolution: int = 200) -> GridResult:
    """Exhaustive maximum of ``c @ net(x) + d`` over a grid of the input set."""
    if input_set.dim > MAX_GRID_DIM:
        raise PreconditionError(
            f"grid oracle supports at most {MAX_GRID_DIM} input dimensions, got {input_set.dim}")
    if resolution < 10:
        raise PreconditionError("grid oracle needs at least 10 points per axis")
    pts, cover = _grid_points(input_set, resolution)
    c = np.asarray(c, dtype=float)
    best_val, best_x = -np.inf, None
    for chunk in np.array_split(pts, max(1, len(pts) // 200_000)):
        vals = forward_batch(net, chunk) @ c + d
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best_val, best_x = float(vals[i]), chunk[i].copy()
    return GridResult(best_val, best_x, objective_lipschitz(net, c) * cover, len(pts))


@dataclass(frozen=True)
class AttackConfig:
    steps: int = 100
    restarts: int = 5
    # fraction of the set's half-width moved per step
    step_size: float = 0.1
    seed: int = 0


@dataclass(frozen=True, eq=False)
class AttackResult:
    x_adv: np.ndarray
    value: float
    steps: int


def _ascent_direction(input_set: InputSet, grad: np.ndarray) -> np.ndarray:
    lo, hi = input_set.bounding_box()
    half = 0.5 * (hi - lo)
    if isinstance(input_set, NormBall) and input_set.p != np.inf:
        n = np.linalg.norm(grad)
        return grad / n * input_set.radius if n > 0 else np.zeros_like(grad)
    return np.sign(grad) * half


def pgd_attack(net: Network, c, d: float, input_set: InputSet,
               config: AttackConfig = AttackConfig()) -> AttackResult:
    """Projected gradient ascent on ``c @ net(x) + d`` with random restarts.

    The first restart starts from the set's anchor (the nominal point for
    balls); the others start uniformly at random inside the set. Every iterate
    is feasible, so the best value found is a valid lower bound.
    """
    c = np.asarray(c, dtype=float)
    rng = np.random.default_rng(config.seed)
    starts = [input_set.anchor]
    if config.restarts > 1 and config.steps > 0:
        starts += list(input_set.sample(rng, config.restarts - 1))
    best_x, best_val, best_steps = None, -np.inf, 0
    for x in starts:
        x = input_set.project(x)
        val, grad = input_gradient(net, x, c)
        for step in range(config.steps):
            if val + d > best_val:
                best_x, best_val, best_steps = x.copy(), val + d, step
            direction = _ascent_direction(input_set, grad)
            if not np.any(direction):
                break
            x = input_set.project(x + config.step_size * direction)
            val, grad = input_gradient(net, x, c)
        if val + d > best_val:
            best_x, best_val, best_steps = x.copy(), val + d, config.steps
    return AttackResult(best_x, float(best_val), best_steps)


def conjugate_grid(h: Callable, lam: float, mu: float, lower: float, upper: float, n: int) -> float:
    """Max of ``mu*y - lam*h(y)`` over ``n`` uniform samples including both endpoints."""
    ys = np.linspace(lower, upper, max(int(n), 2)) if upper > lower else np.array([float(lower)])
    return float(np.max(mu * ys - lam * np.asarray(h(ys), dtype=float)))
