"""Bounded input sets and linear maximisation over them."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ShapeError


def _vec(a, what: str) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.ndim != 1:
        raise ShapeError(f"{what} must be a vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ShapeError(f"{what} must be finite")
    arr.setflags(write=False)
    return arr


class InputSet:
    """Common surface of the input-set variants."""

    dim: int

    def _check(self, v, what="vector") -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.dim,):
            raise ShapeError(f"{what} has shape {v.shape}, set dimension is {self.dim}")
        return v

    def linear_max(self, v) -> tuple[float, np.ndarray]:
        raise NotImplementedError

    def project(self, x) -> np.ndarray:
        raise NotImplementedError

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def contains(self, x, tol: float = 1e-9) -> bool:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    @property
    def anchor(self) -> np.ndarray:
        """Nominal point of the set (the centre for balls)."""
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Box(InputSet):
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo, hi = _vec(self.lower, "lower"), _vec(self.upper, "upper")
        if lo.shape != hi.shape:
            raise ShapeError("box bounds differ in length")
        if np.any(lo > hi):
            raise ShapeError("box lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self):
        return self.lower.shape[0]

    @property
    def anchor(self):
        return 0.5 * (self.lower + self.upper)

    def linear_max(self, v):
        v = self._check(v)
        x = np.where(v > 0, self.upper, self.lower)
        return float(v @ x), x

    def project(self, x):
        return np.clip(self._check(x, "point"), self.lower, self.upper)

    def bounding_box(self):
        return self.lower.copy(), self.upper.copy()

    def contains(self, x, tol=1e-9):
        x = self._check(x, "point")
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def sample(self, rng, n):
        return rng.uniform(self.lower, self.upper, size=(n, self.dim))


def _project_l1(d: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection onto the l1 ball by soft thresholding (sort-based)."""
    a = np.abs(d)
    if a.sum() <= radius:
        return d.copy()
    if radius == 0:
        return np.zeros_like(d)
    srt = np.sort(a)[::-1]
    css = np.cumsum(srt)
    k = np.arange(1, d.size + 1)
    rho = np.nonzero(srt * k > css - radius)[0][-1]
    theta = (css[rho] - radius) / (rho + 1.0)
    return np.sign(d) * np.maximum(a - theta, 0.0)


@dataclass(frozen=True, eq=False)
class NormBall(InputSet):
    """``{x : ||x - center||_p <= radius}`` for p in {1, 2, inf}."""

    p: float
    center: np.ndarray
    radius: float

    def __post_init__(self):
        p = _parse_p(self.p)
        if not np.isfinite(self.radius) or self.radius < 0:
            raise ShapeError("radius must be finite and non-negative")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "center", _vec(self.center, "center"))
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self):
        return self.center.shape[0]

    @property
    def anchor(self):
        return self.center.copy()

    def linear_max(self, v):
        v = self._check(v)
        base = float(v @ self.center)
        eps = self.radius
        if eps == 0 or not np.any(v):
            return base, self.center.copy()
        if self.p == np.inf:
            step = eps * np.sign(v)
            dual = np.abs(v).sum()
        elif self.p == 2:
            dual = float(np.linalg.norm(v))
            step = eps * v / dual
        else:
            i = int(np.argmax(np.abs(v)))
            dual = abs(v[i])
            step = np.zeros_like(v)
            step[i] = eps * np.sign(v[i])
        return base + eps * float(dual), self.center + step

    def project(self, x):
        d = self._check(x, "point") - self.center
        if self.p == np.inf:
            d = np.clip(d, -self.radius, self.radius)
        elif self.p == 2:
            n = np.linalg.norm(d)
            if n > self.radius:
                d = d * (self.radius / n)
        else:
            d = _project_l1(d, self.radius)
        return self.center + d

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius

    def contains(self, x, tol=1e-9):
        d = self._check(x, "point") - self.center
        return bool(np.linalg.norm(d, ord=self.p) <= self.radius + tol)

    def sample(self, rng, n):
        d, eps = self.dim, self.radius
        if self.p == np.inf:
            return self.center + rng.uniform(-eps, eps, size=(n, d))
        radial = rng.uniform(size=(n, 1)) ** (1.0 / d)
        if self.p == 2:
            g = rng.normal(size=(n, d))
            g /= np.linalg.norm(g, axis=1, keepdims=True)
        else:
            e = rng.exponential(size=(n, d))
            g = e / e.sum(axis=1, keepdims=True) * rng.choice([-1.0, 1.0], size=(n, d))
        return self.center + eps * radial * g


@dataclass(frozen=True, eq=False)
class CardinalityBall(InputSet):
    """``{x : ||x - center||_0 <= k, ||x - center||_inf <= radius}``."""

    center: np.ndarray
    radius: float
    k: int

    def __post_init__(self):
        center = _vec(self.center, "center")
        if not np.isfinite(self.radius) or self.radius < 0:
            raise ShapeError("radius must be finite and non-negative")
        if int(self.k) != self.k or not 0 <= self.k <= center.shape[0]:
            raise ShapeError(f"k must be an integer in [0, {center.shape[0]}], got {self.k}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "k", int(self.k))

    @property
    def dim(self):
        return self.center.shape[0]

    @property
    def anchor(self):
        return self.center.copy()

    def linear_max(self, v):
        v = self._check(v)
        gain = self.radius * np.abs(v)
        x = self.center.copy()
        if self.k == 0 or self.radius == 0:
            return float(v @ x), x
        # stable sort keeps the lowest index first among equal gains
        top = np.argsort(-gain, kind="stable")[: self.k]
        top = top[gain[top] > 0]
        x[top] += self.radius * np.sign(v[top])
        return float(v @ self.center + gain[top].sum()), x

    def project(self, x):
        """Clip to the box, then keep only the ``k`` largest deviations.

        Not the Euclidean projection, but the result is always feasible.
        """
        d = np.clip(self._check(x, "point") - self.center, -self.radius, self.radius)
        if self.k < self.dim:
            drop = np.argsort(-np.abs(d), kind="stable")[self.k:]
            d[drop] = 0.0
        return self.center + d

    def bounding_box(self):
        r = self.radius if self.k > 0 else 0.0
        return self.center - r, self.center + r

    def contains(self, x, tol=1e-9):
        d = self._check(x, "point") - self.center
        return bool(np.all(np.abs(d) <= self.radius + tol) and np.count_nonzero(np.abs(d) > tol) <= self.k)

    def sample(self, rng, n):
        out = np.tile(self.center, (n, 1))
        for row in out:
            idx = rng.choice(self.dim, size=self.k, replace=False)
            row[idx] += rng.uniform(-self.radius, self.radius, size=self.k)
        return out


def _parse_p(p) -> float:
    if isinstance(p, str):
        p = p.strip().lower()
        if p in ("inf", "infinity", "linf"):
            return np.inf
        try:
            p = float(p)
        except ValueError:
            raise ShapeError(f"unsupported norm {p!r}") from None
    if p in (1, 2, np.inf):
        return float(p)
    raise ShapeError(f"unsupported norm {p!r}; use 1, 2 or inf")


def linear_max(input_set: InputSet, v) -> tuple[float, np.ndarray]:
    return input_set.linear_max(v)


def project(input_set: InputSet, x) -> np.ndarray:
    return input_set.project(x)


def bounding_box(input_set: InputSet) -> tuple[np.ndarray, np.ndarray]:
    return input_set.bounding_box()


def f0(mu0, w0, b0, input_set: InputSet) -> tuple[float, np.ndarray]:
    """``max_{x in set} -(W0^T mu0) @ x - b0 @ mu0`` and its maximiser."""
    mu0 = np.asarray(mu0, dtype=float)
    w0 = np.asarray(w0, dtype=float)
    b0 = np.asarray(b0, dtype=float)
    if w0.ndim != 2 or mu0.shape != (w0.shape[0],) or b0.shape != mu0.shape:
        raise ShapeError("f0 shapes are inconsistent")
    value, x = input_set.linear_max(-(w0.T @ mu0))
    return value - float(b0 @ mu0), x


def input_set_to_dict(s: InputSet) -> dict:
    if isinstance(s, Box):
        return {"type": "box", "lower": s.lower.tolist(), "upper": s.upper.tolist()}
    if isinstance(s, NormBall):
        p = "inf" if s.p == np.inf else int(s.p)
        return {"type": "norm_ball", "p": p, "center": s.center.tolist(), "radius": s.radius}
    if isinstance(s, CardinalityBall):
        return {"type": "cardinality", "center": s.center.tolist(), "radius": s.radius, "k": s.k}
    raise TypeError(f"unknown input set {type(s).__name__}")


def input_set_from_dict(doc) -> InputSet:
    if not isinstance(doc, dict):
        raise FormatError("input set must be a JSON object")
    kind = doc.get("type")
    try:
        if kind == "box":
            return Box(doc["lower"], doc["upper"])
        if kind == "norm_ball":
            return NormBall(doc["p"], doc["center"], doc["radius"])
        if kind == "cardinality":
            return CardinalityBall(doc["center"], doc["radius"], doc["k"])
    except KeyError as exc:
        raise FormatError(f"input set of type {kind!r} is missing field {exc}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ShapeError):
            raise
        raise FormatError(f"bad input set: {exc}") from None
    raise FormatError(f"unknown input set type {kind!r}")
