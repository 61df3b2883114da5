"""Certifiers for one smooth hidden layer under a 2-norm input ball.

The objective is ``f(x) = sum_i c_i h(W_i x + b_i) + offset`` over
``||x - x_nom||_2 <= eps``, where ``c`` already absorbs the linear output layer.
Two routes are provided:

* a normalised-gradient fixed-point iteration that provably reaches the global
  maximiser when ``eps < nu / (2 L)``;
* a second-order model solved exactly as a trust-region subproblem, whose
  optimum is within ``kappa * eps**3`` of the true one for any radius.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError, ShapeError, UnsupportedActivationError
from .network import (IDENTITY, SIGMOID, TANH, ActivationKind, Layer, Network, _derivative,
                      activation_eval, smoothness_constants)


@dataclass(frozen=True, eq=False)
class SingleLayerProblem:
    W: np.ndarray
    b: np.ndarray
    c: np.ndarray
    x_nom: np.ndarray
    eps: float
    activation: ActivationKind = TANH
    offset: float = 0.0

    def __post_init__(self):
        W = np.array(self.W, dtype=float, ndmin=2)
        b, c, x = (np.array(a, dtype=float, ndmin=1) for a in (self.b, self.c, self.x_nom))
        n, d = W.shape
        if b.shape != (n,) or c.shape != (n,) or x.shape != (d,):
            raise ShapeError("single-layer problem shapes are inconsistent")
        if self.activation not in (SIGMOID, TANH):
            raise UnsupportedActivationError(
                f"single-layer certifiers need sigmoid or tanh, got {self.activation}")
        if not self.eps >= 0:
            raise ShapeError("eps must be non-negative")
        for name, val in (("W", W), ("b", b), ("c", c), ("x_nom", x)):
            object.__setattr__(self, name, val)
        object.__setattr__(self, "eps", float(self.eps))
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def z_nom(self) -> np.ndarray:
        return self.W @ self.x_nom + self.b

    def h(self, z, order: int = 0):
        if order == 0:
            return activation_eval(self.activation, z)
        return _derivative(self.activation, np.asarray(z, dtype=float), order)

    def value(self, x) -> float:
        return float(self.c @ self.h(self.W @ np.asarray(x, dtype=float) + self.b)) + self.offset

    def gradient(self, x) -> np.ndarray:
        return self.W.T @ (self.c * self.h(self.W @ np.asarray(x, dtype=float) + self.b, 1))

    def with_eps(self, eps: float) -> "SingleLayerProblem":
        return SingleLayerProblem(self.W, self.b, self.c, self.x_nom, eps, self.activation, self.offset)

    def to_network(self) -> Network:
        """Equivalent two-layer network whose scalar output is the objective."""
        return Network((Layer(self.W, self.b, self.activation),
                        Layer(self.c[None, :], [self.offset], IDENTITY)))


def fold_output_layer(net: Network, c_out, d_out: float, x_nom, eps: float
                      ) -> tuple[SingleLayerProblem, float]:
    """Fold a linear output layer into the objective weights."""
    if len(net) != 2:
        raise PreconditionError(f"expected a network with one hidden layer, got {len(net)} layers")
    hidden, out = net.layers
    if out.activation != IDENTITY:
        raise PreconditionError("the output layer must be linear")
    if hidden.activation not in (SIGMOID, TANH):
        raise UnsupportedActivationError(f"hidden activation must be sigmoid or tanh, got {hidden.activation}")
    c_out = np.asarray(c_out, dtype=float)
    if c_out.shape != (out.n_out,):
        raise ShapeError("c_out does not match the output width")
    offset = float(c_out @ out.bias) + float(d_out)
    problem = SingleLayerProblem(hidden.weights, hidden.bias, out.weights.T @ c_out,
                                 x_nom, eps, hidden.activation, offset)
    return problem, offset


def sigma_max(A: np.ndarray, rtol: float = 1e-9, max_iter: int = 100_000) -> float:
    """Largest singular value by power iteration on ``A^T A``."""
    A = np.asarray(A, dtype=float)
    if not np.any(A):
        return 0.0
    v = np.random.default_rng(0).normal(size=A.shape[1])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = A.T @ (A @ v)
        new = float(np.linalg.norm(w))
        if new == 0.0:
            # started orthogonal to the row space; any nonzero column direction works
            v = A[np.argmax(np.abs(A).sum(axis=1))].copy()
            v /= np.linalg.norm(v)
            continue
        v = w / new
        if abs(new - est) <= rtol * new:
            est = new
            break
        est = new
    return float(np.sqrt(est))


@dataclass(frozen=True)
class SmoothnessData:
    nu: float
    lipschitz: float
    gamma: np.ndarray = field(repr=False)

    @property
    def radius_threshold(self) -> float:
        return self.nu / (2.0 * self.lipschitz) if self.lipschitz > 0 else (np.inf if self.nu > 0 else 0.0)

    def radius_ok(self, eps: float) -> bool:
        return self.nu > 0 and eps < self.radius_threshold

    def rate(self, eps: float) -> float:
        """Contraction factor ``eps L / (nu - eps L)`` of the fixed-point map."""
        return eps * self.lipschitz / (self.nu - eps * self.lipschitz)


def smoothness(problem: SingleLayerProblem) -> SmoothnessData:
    gamma_h, _ = smoothness_constants(problem.activation)
    gamma = np.full(problem.W.shape[0], gamma_h)
    nu = float(np.linalg.norm(problem.gradient(problem.x_nom)))
    lip = sigma_max(problem.W.T * problem.c) * sigma_max(gamma[:, None] * problem.W)
    return SmoothnessData(nu, lip, gamma)


@dataclass(frozen=True, eq=False)
class FixedPointResult:
    x_star: np.ndarray
    value: float
    converged: bool
    iterates: list
    guaranteed: bool
    stationary: bool = False
    # sound upper bound on the maximum (inf unless guaranteed and converged)
    upper_bound: float = np.inf

    @property
    def step_ratios(self) -> list[float]:
        """Successive-difference ratios ``|x[k+1]-x[k]| / |x[k]-x[k-1]|`` for k >= 1."""
        steps = [np.linalg.norm(b - a) for a, b in zip(self.iterates, self.iterates[1:])]
        return [s1 / s0 for s0, s1 in zip(steps, steps[1:]) if s0 > 1e-12]


def fixed_point_verify(problem: SingleLayerProblem, max_iters: int = 1000, tol: float = 1e-12
                       ) -> FixedPointResult:
    """Iterate ``x <- x_nom + eps * g(x) / |g(x)|`` from ``x_nom``.

    When ``eps`` is inside the guaranteed radius the map contracts with factor
    ``q`` and the final iterate is within ``q / (1 - q)`` times the last step of
    the maximiser, which yields ``upper_bound``. Outside that radius the output
    is only an attained value.
    """
    sd = smoothness(problem)
    guaranteed = sd.radius_ok(problem.eps)
    x = problem.x_nom.copy()
    iterates = [x.copy()]
    if problem.eps == 0:
        v = problem.value(x)
        return FixedPointResult(x, v, True, iterates, True, upper_bound=v)
    converged, stationary, last = False, False, np.inf
    for _ in range(max_iters):
        g = problem.gradient(x)
        gn = float(np.linalg.norm(g))
        if gn == 0.0:
            stationary = True
            x = problem.x_nom.copy()
            break
        nxt = problem.x_nom + problem.eps * g / gn
        iterates.append(nxt.copy())
        last = float(np.linalg.norm(nxt - x))
        x = nxt
        if last < tol:
            converged = True
            break
    value = problem.value(x)
    upper = np.inf
    if guaranteed and converged:
        q = sd.rate(problem.eps)
        grad_bound = sd.nu + problem.eps * sd.lipschitz
        upper = value + grad_bound * q / (1.0 - q) * last
    return FixedPointResult(x, value, converged, iterates, guaranteed, stationary, upper)


def kappa(problem: SingleLayerProblem) -> float:
    """Cubic remainder constant ``(1/6) sum_i eta |c_i| |W_i|^3``."""
    _, eta = smoothness_constants(problem.activation)
    return float(eta * np.sum(np.abs(problem.c) * np.linalg.norm(problem.W, axis=1) ** 3) / 6.0)


def trs_solve(g, H, eps: float) -> tuple[np.ndarray, float]:
    """Globally maximise ``g @ z + z @ H @ z / 2`` subject to ``|z|_2 <= eps``.

    Works in the eigenbasis of ``H``: the maximiser is
    ``z = (sigma I - H)^{-1} g`` with ``sigma >= max(0, lambda_max(H))`` chosen by
    bisection on the secular equation ``|z(sigma)| = eps``. When ``g`` has no
    component along the top eigenspace and the pseudo-inverse step is short,
    the step is padded along a top eigenvector (the hard case).
    """
    g = np.asarray(g, dtype=float)
    H = np.asarray(H, dtype=float)
    H = 0.5 * (H + H.T)
    n = g.shape[0]
    if eps == 0 or n == 0:
        return np.zeros(n), 0.0
    evals, Q = np.linalg.eigh(H)
    evals, Q = evals[::-1], Q[:, ::-1]  # descending
    gt = Q.T @ g
    top = evals[0]
    scale = max(1.0, float(np.abs(evals).max()), float(np.linalg.norm(g)))

    def model(z):
        return float(g @ z + 0.5 * z @ H @ z)

    def step(sigma):
        return Q @ (gt / (sigma - evals))

    if top < 0:
        z = step(0.0)
        if np.linalg.norm(z) <= eps:
            return z, model(z)

    # hard case test: no gradient mass on the top eigenspace
    tie = np.abs(evals - top) <= 1e-12 * scale
    if np.linalg.norm(gt[tie]) <= 1e-14 * scale:
        sigma0 = max(top, 0.0)
        denom = sigma0 - evals
        coef = np.where(tie | (denom == 0), 0.0, gt / np.where(denom == 0, 1.0, denom))
        z = Q @ coef
        zn = float(np.linalg.norm(z))
        if zn <= eps:
            if top >= 0:
                pad = np.sqrt(max(eps * eps - zn * zn, 0.0))
                v = Q[:, 0]
                cands = [z + pad * v, z - pad * v]
                z = max(cands, key=model)
            return z, model(z)

    lo = max(top, 0.0)
    hi = lo + float(np.linalg.norm(g)) / eps + 1e-300
    # |z(sigma)| is decreasing on (lo, inf) and |z(hi)| <= eps
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if np.linalg.norm(step(mid)) > eps:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
    z = step(hi)
    zn = float(np.linalg.norm(z))
    if zn > eps:
        z *= eps / zn
    return z, model(z)


@dataclass(frozen=True, eq=False)
class TrustRegionResult:
    tr_value: float
    upper_bound: float
    lower_bound: float
    z_star: np.ndarray
    kappa: float


def trust_region_bound(problem: SingleLayerProblem) -> TrustRegionResult:
    """Bound the maximum through the exact maximum of the quadratic model.

    ``tr_value`` is the model optimum; the true maximum lies within
    ``kappa * eps**3`` of it. ``lower_bound`` also uses the attained value at
    the model maximiser.
    """
    z_nom = problem.z_nom
    c = problem.c
    g = problem.W.T @ (c * problem.h(z_nom, 1))
    H = problem.W.T @ ((c * problem.h(z_nom, 2))[:, None] * problem.W)
    z_star, model = trs_solve(g, H, problem.eps)
    const = float(c @ problem.h(z_nom)) + problem.offset
    tr_value = const + model
    k = kappa(problem)
    gap = k * problem.eps ** 3
    attained = problem.value(problem.x_nom + z_star)
    return TrustRegionResult(tr_value, tr_value + gap, max(tr_value - gap, attained), z_star, k)
