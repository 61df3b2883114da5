"""Specifications, the bound/attack pipeline, and dataset-level accounting."""
from __future__ import annotations

import enum
import itertools
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bounds import ActivationBounds, interval_propagate, tighten_bounds
from .dual import DualConfig, DualVariables, dual_objective, minimize_dual
from .errors import FormatError, ShapeError
from .input_sets import Box, CardinalityBall, InputSet, NormBall, input_set_from_dict, input_set_to_dict
from .network import Network, forward
from .oracles import AttackConfig, pgd_attack

log = logging.getLogger(__name__)

SANDWICH_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class OutputConstraint:
    """The requirement ``c @ x[L] + d <= 0``."""

    c: np.ndarray
    d: float = 0.0

    def __post_init__(self):
        c = np.array(self.c, dtype=float, ndmin=1)
        if c.ndim != 1 or not np.all(np.isfinite(c)) or not np.isfinite(self.d):
            raise ShapeError("constraint must have a finite vector c and finite d")
        c.setflags(write=False)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", float(self.d))


@dataclass(frozen=True, eq=False)
class VerificationSpec:
    input_set: InputSet
    constraints: tuple[OutputConstraint, ...]

    def __post_init__(self):
        cons = tuple(self.constraints)
        if not cons:
            raise ShapeError("a specification needs at least one output constraint")
        object.__setattr__(self, "constraints", cons)

    def check_against(self, net: Network) -> None:
        if self.input_set.dim != net.input_dim:
            raise ShapeError(f"input set has dimension {self.input_set.dim}, network expects {net.input_dim}")
        for con in self.constraints:
            if con.c.shape != (net.output_dim,):
                raise ShapeError(f"constraint has length {con.c.size}, network output width is {net.output_dim}")

    def to_dict(self) -> dict:
        return {"input_set": input_set_to_dict(self.input_set),
                "constraints": [{"c": con.c.tolist(), "d": con.d} for con in self.constraints]}

    @classmethod
    def from_dict(cls, doc) -> "VerificationSpec":
        if not isinstance(doc, dict) or "input_set" not in doc or "constraints" not in doc:
            raise FormatError('spec needs "input_set" and "constraints"')
        try:
            cons = tuple(OutputConstraint(item["c"], item.get("d", 0.0)) for item in doc["constraints"])
        except (KeyError, TypeError) as exc:
            raise FormatError(f"bad constraint: {exc}") from None
        return cls(input_set_from_dict(doc["input_set"]), cons)


class Status(str, enum.Enum):
    VERIFIED = "verified"
    FALSIFIED = "falsified"
    UNKNOWN = "unknown"


def status_of(upper: float, lower: float) -> Status:
    if upper < 0:
        return Status.VERIFIED
    if lower > 0:
        return Status.FALSIFIED
    return Status.UNKNOWN


@dataclass(frozen=True)
class ConstraintVerdict:
    upper_bound: float
    lower_bound: float
    status: Status
    iterations_used: int

    def to_dict(self) -> dict:
        def num(v):
            return None if not np.isfinite(v) else float(v)
        return {"upper_bound": num(self.upper_bound), "lower_bound": num(self.lower_bound),
                "status": self.status.value, "iterations_used": int(self.iterations_used)}


@dataclass(frozen=True)
class VerdictReport:
    verdicts: tuple[ConstraintVerdict, ...]

    @property
    def all_verified(self) -> bool:
        return all(v.status is Status.VERIFIED for v in self.verdicts)

    @property
    def any_falsified(self) -> bool:
        return any(v.status is Status.FALSIFIED for v in self.verdicts)

    def to_dict(self) -> dict:
        return {"constraints": [v.to_dict() for v in self.verdicts]}


def make_verdict(upper: float, lower: float, iterations: int) -> ConstraintVerdict:
    if lower > upper + SANDWICH_TOL:
        log.warning("attack value %.6g exceeds certified bound %.6g", lower, upper)
    return ConstraintVerdict(float(upper), float(lower), status_of(upper, lower), iterations)


# -- specification builders -------------------------------------------------

def targeted_constraint(n_classes: int, true_label: int, target_label: int) -> OutputConstraint:
    c = np.zeros(n_classes)
    c[target_label] += 1.0
    c[true_label] -= 1.0
    return OutputConstraint(c, 0.0)


def spec_targeted_attack(x_nom, eps: float, p, true_label: int, target_label: int,
                         n_classes: int) -> VerificationSpec:
    return VerificationSpec(NormBall(p, x_nom, eps),
                            (targeted_constraint(n_classes, true_label, target_label),))


def spec_monotone(x_nom, delta, net: Network, tolerance: float = 0.0) -> VerificationSpec:
    """Require ``out(x) >= out(x_nom) - tolerance`` for ``x_nom <= x <= x_nom + delta``.

    ``tolerance = 0`` is the plain monotonicity check; since the worst case is
    attained at ``x_nom`` itself it can at best be reported unknown, so a small
    positive tolerance is needed for a strict certificate.
    """
    if net.output_dim != 1:
        raise ShapeError("monotonicity specs need a scalar-output network")
    x_nom = np.asarray(x_nom, dtype=float)
    delta = np.broadcast_to(np.asarray(delta, dtype=float), x_nom.shape)
    if np.any(delta < 0):
        raise ShapeError("delta must be non-negative")
    out = float(forward(net, x_nom).output[0])
    return VerificationSpec(Box(x_nom, x_nom + delta), (OutputConstraint([-1.0], out - tolerance),))


def spec_cardinality(x_nom, eps: float, k: int, true_label: int, target_label: int,
                     n_classes: int) -> VerificationSpec:
    return VerificationSpec(CardinalityBall(x_nom, eps, k),
                            (targeted_constraint(n_classes, true_label, target_label),))


# -- pipeline ----------------------------------------------------------------

@dataclass(frozen=True)
class VerifyConfig:
    dual: DualConfig = field(default_factory=DualConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    # dual iterations per neuron for bound tightening; 0 disables it
    tighten: int = 0

    def __post_init__(self):
        if self.tighten < 0:
            raise ValueError("tighten must be >= 0")


def compute_bounds(net: Network, input_set: InputSet, tighten: int = 0,
                   step_size: float = 0.1) -> ActivationBounds:
    bounds = interval_propagate(net, *input_set.bounding_box())
    return tighten_bounds(net, input_set, bounds, tighten, step_size) if tighten else bounds


def verify(net: Network, spec: VerificationSpec, config: VerifyConfig = VerifyConfig(),
           bounds: ActivationBounds | None = None) -> VerdictReport:
    spec.check_against(net)
    if bounds is None:
        bounds = compute_bounds(net, spec.input_set, config.tighten, config.dual.step_size)
    verdicts = []
    for con in spec.constraints:
        dual = minimize_dual(net, con.c, con.d, spec.input_set, bounds, config.dual)
        attack = pgd_attack(net, con.c, con.d, spec.input_set, config.attack)
        verdicts.append(make_verdict(dual.bound, attack.value, dual.iterations))
    return VerdictReport(tuple(verdicts))


def interval_bound(net: Network, c, d: float, input_set: InputSet,
                   bounds: ActivationBounds | None = None) -> float:
    """The dual bound at zero multipliers, i.e. plain interval arithmetic."""
    if bounds is None:
        bounds = interval_propagate(net, *input_set.bounding_box())
    return dual_objective(net, c, d, input_set, bounds, DualVariables.zeros(net)).bound


# -- dataset accounting ---------------------------------------------------------

@dataclass(frozen=True)
class ErrorRates:
    upper: float
    lower: float
    clean: float
    n_examples: int
    warning: str | None = None

    def to_dict(self) -> dict:
        doc = {"clean_error": self.clean, "certified_upper": self.upper,
               "attack_lower": self.lower, "n_examples": self.n_examples}
        if self.warning:
            doc["warning"] = self.warning
        return doc


def _untargeted_spec(net: Network, x, label: int, eps: float, p) -> VerificationSpec:
    m = net.output_dim
    return VerificationSpec(NormBall(p, x, eps),
                            tuple(targeted_constraint(m, label, j) for j in range(m) if j != label))


def example_status(net: Network, x, label: int, eps: float, p, config: VerifyConfig
                   ) -> tuple[bool, bool, bool]:
    """``(misclassified, any_not_verified, any_falsified)`` for one example."""
    x = np.asarray(x, dtype=float)
    misclassified = int(np.argmax(forward(net, x).output)) != label
    report = verify(net, _untargeted_spec(net, x, label, eps, p), config)
    # a misclassified centre is itself an adversarial example
    return misclassified, misclassified or not report.all_verified, misclassified or report.any_falsified


def certified_error_rate(net: Network, dataset: Sequence[tuple], eps: float, p,
                         config: VerifyConfig = VerifyConfig(), statuses=None) -> ErrorRates:
    """Certified (upper) and attack (lower) adversarial error rates.

    An example counts towards ``upper`` unless every target label is verified
    and towards ``lower`` if some target label is falsified. ``statuses`` may
    carry precomputed ``example_status`` tuples (used by parallel callers).
    """
    if not dataset:
        return ErrorRates(0.0, 0.0, 0.0, 0, warning="empty dataset; rates reported as 0")
    if net.output_dim < 2:
        raise ShapeError("error rates need at least two classes")
    if statuses is None:
        statuses = [example_status(net, x, int(y), eps, p, config) for x, y in dataset]
    n = len(statuses)
    clean = sum(s[0] for s in statuses) / n
    upper = sum(s[1] for s in statuses) / n
    lower = sum(s[2] for s in statuses) / n
    return ErrorRates(upper, lower, clean, n)


# -- label switching ---------------------------------------------------------

def max_label_switches(reachable: Sequence[Sequence[int]]) -> int:
    """Most label changes along any sequence drawing label ``t`` from ``reachable[t]``."""
    sets = [sorted(set(s)) for s in reachable]
    if any(not s for s in sets):
        raise ShapeError("every timestep needs at least one reachable label")
    if not sets:
        return 0
    best = {y: 0 for y in sets[0]}
    for labels in sets[1:]:
        best = {y: max(v + (yp != y) for yp, v in best.items()) for y in labels}
    return max(best.values())


def max_label_switches_bruteforce(reachable: Sequence[Sequence[int]]) -> int:
    sets = [sorted(set(s)) for s in reachable]
    return max(sum(a != b for a, b in zip(seq, seq[1:])) for seq in itertools.product(*sets))


def reachable_labels(net: Network, x, eps: float, p, config: VerifyConfig = VerifyConfig()
                     ) -> tuple[set, set]:
    """Over- and under-approximations of the labels predicted inside the ball.

    The upper set holds the nominal prediction plus every label whose
    "beats the prediction" constraint is not verified. The lower set holds the
    predictions at the nominal point and at each attack's adversarial input.
    """
    x = np.asarray(x, dtype=float)
    pred = int(np.argmax(forward(net, x).output))
    upper, lower = {pred}, {pred}
    ball = NormBall(p, x, eps)
    bounds = compute_bounds(net, ball, config.tighten, config.dual.step_size)
    for j in range(net.output_dim):
        if j == pred:
            continue
        con = targeted_constraint(net.output_dim, pred, j)
        dual = minimize_dual(net, con.c, con.d, ball, bounds, config.dual)
        if not dual.bound < 0:
            upper.add(j)
        attack = pgd_attack(net, con.c, con.d, ball, config.attack)
        lower.add(int(np.argmax(forward(net, attack.x_adv).output)))
    return upper, lower
