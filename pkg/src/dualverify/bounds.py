"""Activation bounds: interval propagation and dual-based tightening."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError
from .input_sets import InputSet
from .network import Network, Trace, activation_eval


@dataclass(frozen=True, eq=False)
class ActivationBounds:
    """Boxes on pre-activations (layers 0..L-1) and post-activations (0..L)."""

    prel: tuple[np.ndarray, ...]
    preu: tuple[np.ndarray, ...]
    postl: tuple[np.ndarray, ...]
    postu: tuple[np.ndarray, ...]

    def __post_init__(self):
        for lo, hi in zip(self.prel + self.postl, self.preu + self.postu):
            if lo.shape != hi.shape or np.any(lo > hi):
                raise PreconditionError("activation bounds are inverted or misshapen")

    def contains(self, trace: Trace, tol: float = 1e-9) -> bool:
        pairs = [(trace.pre, self.prel, self.preu), (trace.post, self.postl, self.postu)]
        return all(
            bool(np.all(v >= lo - tol) and np.all(v <= hi + tol))
            for vals, los, his in pairs for v, lo, hi in zip(vals, los, his))

    def truncated(self, n_layers: int) -> "ActivationBounds":
        return ActivationBounds(self.prel[:n_layers], self.preu[:n_layers],
                                self.postl[:n_layers + 1], self.postu[:n_layers + 1])

    def check_against(self, net: Network) -> None:
        """Raise unless the boxes have the network's layer widths."""
        if len(self.prel) != len(net) or len(self.postl) != len(net) + 1:
            raise PreconditionError("bounds do not match the network depth")
        if self.postl[0].shape != (net.input_dim,):
            raise PreconditionError("input bounds do not match the network input")
        for l, layer in enumerate(net.layers):
            if self.prel[l].shape != (layer.n_pre,) or self.postl[l + 1].shape != (layer.n_out,):
                raise PreconditionError(f"bounds at layer {l} have the wrong width")


def _linear_step(w, b, lo, hi):
    wp, wn = np.maximum(w, 0.0), np.minimum(w, 0.0)
    return wp @ lo + wn @ hi + b, wp @ hi + wn @ lo + b


def _activation_step(kind, lo, hi):
    # every supported activation is monotone non-decreasing (maxpool per group)
    return activation_eval(kind, lo), activation_eval(kind, hi)


def interval_propagate(net: Network, input_lower, input_upper) -> ActivationBounds:
    lo = np.asarray(input_lower, dtype=float)
    hi = np.asarray(input_upper, dtype=float)
    prel, preu, postl, postu = [], [], [lo], [hi]
    for layer in net.layers:
        zl, zu = _linear_step(layer.weights, layer.bias, postl[-1], postu[-1])
        prel.append(zl)
        preu.append(zu)
        xl, xu = _activation_step(layer.activation, zl, zu)
        postl.append(xl)
        postu.append(xu)
    return ActivationBounds(tuple(prel), tuple(preu), tuple(postl), tuple(postu))


def _intersect(lo, hi, new_lo, new_hi):
    nl, nh = np.maximum(lo, new_lo), np.minimum(hi, new_hi)
    # rounding can cross a tight pair; fall back to the old (sound) box there
    crossed = nl > nh
    return np.where(crossed, lo, nl), np.where(crossed, hi, nh)


def tighten_bounds(net: Network, input_set: InputSet, bounds: ActivationBounds,
                   iters_per_neuron: int, step_size: float = 0.1) -> ActivationBounds:
    """Shrink hidden post-activation boxes by solving the dual for each coordinate.

    Layers are processed front to back; after tightening ``x[l]`` the boxes on
    ``z[l]`` and ``x[l + 1]`` are recomputed by one interval step and
    intersected with the previous ones. The result is never looser than the input.
    """
    from .dual import DualConfig, minimize_dual

    if iters_per_neuron <= 0:
        return bounds
    bounds.check_against(net)
    cfg = DualConfig(iterations=iters_per_neuron, step_size=step_size)
    prel, preu = list(bounds.prel), list(bounds.preu)
    postl, postu = list(bounds.postl), list(bounds.postu)

    for l in range(1, len(net)):
        sub = net.truncated(l)
        sub_bounds = ActivationBounds(tuple(prel[:l]), tuple(preu[:l]),
                                      tuple(postl[:l + 1]), tuple(postu[:l + 1]))
        width = postl[l].shape[0]
        new_lo, new_hi = postl[l].copy(), postu[l].copy()
        for k in range(width):
            e = np.zeros(width)
            e[k] = 1.0
            new_hi[k] = minimize_dual(sub, e, 0.0, input_set, sub_bounds, cfg).bound
            new_lo[k] = -minimize_dual(sub, -e, 0.0, input_set, sub_bounds, cfg).bound
        postl[l], postu[l] = _intersect(postl[l], postu[l], new_lo, new_hi)

        layer = net.layers[l]
        zl, zu = _linear_step(layer.weights, layer.bias, postl[l], postu[l])
        prel[l], preu[l] = _intersect(prel[l], preu[l], zl, zu)
        xl, xu = _activation_step(layer.activation, prel[l], preu[l])
        postl[l + 1], postu[l + 1] = _intersect(postl[l + 1], postu[l + 1], xl, xu)

    return ActivationBounds(tuple(prel), tuple(preu), tuple(postl), tuple(postu))
