"""Per-neuron subproblems ``max_{l <= y <= u} mu*y - lam*h(y)``.

Every solver is vectorised: ``lam``, ``mu``, ``lower`` and ``upper`` broadcast
against each other and the result carries one value per element. The smooth
activations are solved exactly by enumerating the interval endpoints together
with the interior stationary points of ``mu*y - lam*h(y)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidIntervalError, UnsupportedActivationError
from .network import ELU_ALPHA, ActivationKind, activation_eval

# |lam| below this is treated as zero (the objective is then linear in y).
LAMBDA_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class ConjugateResult:
    value: np.ndarray
    argmax: np.ndarray
    exact: bool = True


def _check_interval(lower, upper):
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
        raise InvalidIntervalError("interval bounds must be finite")
    if np.any(lower > upper):
        raise InvalidIntervalError("lower bound exceeds upper bound")
    return lower, upper


def _best_of(candidates, lam, mu, h) -> ConjugateResult:
    ys = np.stack(np.broadcast_arrays(*candidates))
    vals = mu * ys - lam * h(ys)
    pick = np.argmax(vals, axis=0)[None]
    value = np.take_along_axis(vals, pick, 0)[0]
    argmax = np.take_along_axis(ys, pick, 0)[0]
    return ConjugateResult(value, argmax)


def _prepare(lam, mu, lower, upper):
    lower, upper = _check_interval(lower, upper)
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)
    lam = np.where(np.abs(lam) < LAMBDA_EPS, 0.0, lam)
    return lam, mu, lower, upper


def _ratio(mu, lam):
    """``mu / lam`` with NaN wherever lam is zero."""
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(lam != 0.0, mu / np.where(lam != 0.0, lam, 1.0), np.nan)


def conjugate_linear(lam, mu, lower, upper) -> ConjugateResult:
    lam, mu, lower, upper = _prepare(lam, mu, lower, upper)
    return _best_of([lower, upper], lam, mu, lambda y: y)


def conjugate_relu(lam, mu, lower, upper) -> ConjugateResult:
    lam, mu, lower, upper = _prepare(lam, mu, lower, upper)
    kink = np.clip(0.0, lower, upper)
    return _best_of([lower, upper, kink], lam, mu, lambda y: np.maximum(y, 0.0))


def _sigmoid(y):
    e = np.exp(-np.abs(y))
    return np.where(y >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def conjugate_sigmoid(lam, mu, lower, upper) -> ConjugateResult:
    lam, mu, lower, upper = _prepare(lam, mu, lower, upper)
    r = _ratio(mu, lam)
    # sigma'(y) = r has roots +-y_s with y_s = logit((1 + s) / 2), s = sqrt(1 - 4r);
    # written as 2*log((1 + s) / (2*sqrt(r))) to avoid cancellation for small r.
    ok = (r > 0) & (r <= 0.25)
    r_ok = np.where(ok, r, 0.25)
    s = np.sqrt(np.maximum(1.0 - 4.0 * r_ok, 0.0))
    y_s = np.where(ok, 2.0 * np.log((1.0 + s) / (2.0 * np.sqrt(r_ok))), 0.0)
    cands = [lower, upper]
    if np.any(ok):
        cands += [np.where(ok, np.clip(y_s, lower, upper), lower),
                  np.where(ok, np.clip(-y_s, lower, upper), lower)]
    return _best_of(cands, lam, mu, _sigmoid)


def conjugate_tanh(lam, mu, lower, upper) -> ConjugateResult:
    lam, mu, lower, upper = _prepare(lam, mu, lower, upper)
    r = _ratio(mu, lam)
    # tanh'(y) = r has roots +-arctanh(sqrt(1 - r)) = +-log((1 + sqrt(1 - r)) / sqrt(r)).
    ok = (r > 0) & (r <= 1.0)
    r_ok = np.where(ok, r, 1.0)
    y_s = np.where(ok, np.log((1.0 + np.sqrt(1.0 - r_ok)) / np.sqrt(r_ok)), 0.0)
    cands = [lower, upper]
    if np.any(ok):
        cands += [np.where(ok, np.clip(y_s, lower, upper), lower),
                  np.where(ok, np.clip(-y_s, lower, upper), lower)]
    return _best_of(cands, lam, mu, np.tanh)


def _elu(y):
    return np.where(y > 0, y, ELU_ALPHA * np.expm1(np.minimum(y, 0.0)))


def conjugate_elu(lam, mu, lower, upper) -> ConjugateResult:
    lam, mu, lower, upper = _prepare(lam, mu, lower, upper)
    r = _ratio(mu, lam) / ELU_ALPHA
    # Linear for y > 0; on y < 0 the only stationary point solves alpha*e^y = mu/lam.
    ok = r > 0
    y_s = np.log(np.where(ok, r, 1.0))
    cands = [lower, upper, np.clip(0.0, lower, upper),
             np.where(ok, np.clip(y_s, lower, np.minimum(upper, 0.0).clip(lower)), lower)]
    return _best_of(cands, lam, mu, _elu)


def conjugate_maxpool(lam, mu, lower, upper) -> ConjugateResult:
    """Solve ``max mu @ y - lam * max(y)`` over a box, one problem per leading index.

    ``mu``, ``lower`` and ``upper`` have shape ``(..., t)`` and ``lam`` shape
    ``(...)``. For each coordinate ``i`` assumed to attain the maximum at value
    ``s``, the best remaining coordinates are ``y_j = lower_j`` when ``mu_j < 0``
    and ``min(upper_j, s)`` otherwise, so the objective is piecewise linear in
    ``s`` with breakpoints at the ``upper_j``; enumerating those is exact.
    """
    lower, upper = _check_interval(lower, upper)
    mu = np.asarray(mu, dtype=float)
    lam = np.asarray(lam, dtype=float)
    mu, lower, upper = np.broadcast_arrays(mu, lower, upper)
    t = mu.shape[-1]
    lam = np.broadcast_to(lam, mu.shape[:-1])

    floor = lower.max(axis=-1, keepdims=True)                      # (..., 1)
    # candidate values of s for each i: (..., i, cand)
    raw = np.concatenate([
        np.broadcast_to(floor[..., None], mu.shape + (1,)),
        upper[..., :, None],
        np.broadcast_to(upper[..., None, :], mu.shape + (t,)),
    ], axis=-1)
    lo_i = np.maximum(lower, floor)[..., None]
    hi_i = upper[..., None]
    feasible = (lower.max(axis=-1)[..., None] <= upper)              # (..., i)
    s = np.clip(raw, lo_i, np.maximum(hi_i, lo_i))                     # (..., i, cand)

    # others: (..., i, cand, j)
    s_j = s[..., None]
    mu_j = mu[..., None, None, :]
    l_j = lower[..., None, None, :]
    u_j = upper[..., None, None, :]
    y_j = np.where(mu_j < 0, l_j, np.minimum(u_j, s_j))
    y_j = np.maximum(y_j, l_j)
    eye = np.eye(t, dtype=bool)[:, None, :]                          # (i, 1, j)
    y_full = np.where(eye, s_j, y_j)                                 # (..., i, cand, j)
    vals = (mu_j * y_full).sum(axis=-1) - lam[..., None, None] * s
    vals = np.where(feasible[..., None], vals, -np.inf)

    flat = vals.reshape(*vals.shape[:-2], -1)
    pick = flat.argmax(axis=-1)
    value = np.take_along_axis(flat, pick[..., None], -1)[..., 0]
    ys = y_full.reshape(*vals.shape[:-2], -1, t)
    argmax = np.take_along_axis(ys, pick[..., None, None], -2)[..., 0, :]
    return ConjugateResult(value, argmax)


def conjugate_general(h: Callable, lam: float, mu: float, lower: float, upper: float,
                      pieces: int) -> ConjugateResult:
    """Upper bound on the conjugate from a uniform partition of ``[lower, upper]``.

    On each piece ``[a, b]`` the linear and nonlinear terms are maximised
    separately, using only endpoint values of ``h``. This is sound for monotone
    ``h`` on each piece; refining the partition tightens it.
    """
    if pieces < 1:
        raise ValueError("pieces must be >= 1")
    lower, upper = _check_interval(lower, upper)
    lam = 0.0 if abs(lam) < LAMBDA_EPS else float(lam)
    knots = np.linspace(float(lower), float(upper), pieces + 1)
    hk = np.asarray(h(knots), dtype=float)
    a, b = knots[:-1], knots[1:]
    bound = np.maximum(mu * a, mu * b) + np.maximum(-lam * hk[:-1], -lam * hk[1:])
    i = int(np.argmax(bound))
    ga, gb = mu * a[i] - lam * hk[i], mu * b[i] - lam * hk[i + 1]
    return ConjugateResult(float(bound[i]), float(a[i] if ga >= gb else b[i]), exact=False)


_SOLVERS = {
    "relu": conjugate_relu,
    "sigmoid": conjugate_sigmoid,
    "tanh": conjugate_tanh,
    "elu": conjugate_elu,
    "identity": conjugate_linear,
}


def conjugate(kind: ActivationKind, lam, mu, lower, upper) -> ConjugateResult:
    """Dispatch on activation kind.

    For maxpool, ``mu``, ``lower`` and ``upper`` are flat pre-activation vectors
    (contiguous groups) and ``lam`` has one entry per group; the returned value
    is per group and the argmax is flat again.
    """
    if kind.is_maxpool:
        g = kind.group_size
        mu, lower, upper = (np.asarray(a, dtype=float) for a in (mu, lower, upper))
        res = conjugate_maxpool(lam, mu.reshape(-1, g), lower.reshape(-1, g), upper.reshape(-1, g))
        return ConjugateResult(res.value, res.argmax.reshape(-1))
    try:
        solver = _SOLVERS[kind.name]
    except KeyError:
        raise UnsupportedActivationError(f"no conjugate for {kind}") from None
    return solver(lam, mu, lower, upper)


def evaluate(kind: ActivationKind, lam, mu, y) -> np.ndarray:
    """``mu*y - lam*h(y)`` (for maxpool, per group); handy for checks."""
    y = np.asarray(y, dtype=float)
    if kind.is_maxpool:
        mu = np.asarray(mu, dtype=float)
        g = kind.group_size
        return (mu * y).reshape(-1, g).sum(axis=1) - np.asarray(lam) * activation_eval(kind, y)
    return np.asarray(mu) * y - np.asarray(lam) * activation_eval(kind, y)
