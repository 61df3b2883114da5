"""Command-line front end: ``dualverify {verify,certify-dataset,switches}``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from pathlib import Path

import numpy as np

from .dual import DualConfig, minimize_dual
from .errors import FormatError, PreconditionError, VerificationError
from .input_sets import NormBall, _parse_p
from .network import Network, load_network
from .oracles import MAX_GRID_DIM, AttackConfig, grid_oracle, pgd_attack
from .single_layer import fixed_point_verify, fold_output_layer, trust_region_bound
from .verifier import (ConstraintVerdict, OutputConstraint, VerdictReport, VerificationSpec, VerifyConfig,
                       certified_error_rate, compute_bounds, example_status, interval_bound, make_verdict,
                       max_label_switches, reachable_labels)

SCHEMA_VERSION = 1
METHODS = ("dual", "interval", "fixed-point", "trust-region", "attack", "oracle")

EXIT_VERIFIED, EXIT_UNKNOWN, EXIT_FALSIFIED, EXIT_ERROR = 0, 1, 2, 3

log = logging.getLogger("dualverify")


@dataclass(frozen=True)
class RunConfig:
    net: Path
    spec: Path | None
    method: str = "dual"
    iterations: int = 500
    tighten: int = 0
    seed: int = 0
    out: Path | None = None
    workers: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise PreconditionError(f"unknown method {self.method!r}")
        if self.iterations < 0 or self.tighten < 0:
            raise PreconditionError("--iters and --tighten must be non-negative")
        if self.workers < 1:
            raise PreconditionError("--workers must be at least 1")

    def verify_config(self) -> VerifyConfig:
        return VerifyConfig(DualConfig(iterations=self.iterations), AttackConfig(seed=self.seed),
                            tighten=self.tighten)


# -- IO helpers -----------------------------------------------------------------

def _read_json(path: Path, what: str):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise FormatError(f"cannot read {what} {path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{what} {path} is not valid JSON: {exc}") from None


def _read_network(path: Path) -> Network:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read network {path}: {exc.strerror or exc}") from None
    return load_network(data)


def _read_dataset(path: Path) -> list[tuple[np.ndarray, int]]:
    doc = _read_json(path, "dataset")
    if not isinstance(doc, dict) or not isinstance(doc.get("examples"), list):
        raise FormatError('dataset must be an object with an "examples" list')
    try:
        return [(np.asarray(ex["x"], dtype=float), int(ex["label"])) for ex in doc["examples"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad dataset example: {exc}") from None


def _read_sequence(path: Path) -> list[np.ndarray]:
    doc = _read_json(path, "feature sequence")
    if not isinstance(doc, dict) or not isinstance(doc.get("features"), list) or not doc["features"]:
        raise FormatError('feature sequence must be an object with a non-empty "features" list')
    try:
        return [np.asarray(x, dtype=float) for x in doc["features"]]
    except (TypeError, ValueError) as exc:
        raise FormatError(f"bad feature vector: {exc}") from None


def _emit(doc: dict, out: Path | None) -> None:
    text = json.dumps({"schema_version": SCHEMA_VERSION, **doc}, indent=2, sort_keys=True) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _map(fn, items, workers: int) -> list:
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


# -- verify ---------------------------------------------------------------------

def _check_method(cfg: RunConfig, net: Network, spec: VerificationSpec) -> None:
    """Method preconditions, checked before any real work."""
    spec.check_against(net)
    if cfg.method == "oracle" and spec.input_set.dim > MAX_GRID_DIM:
        raise PreconditionError(
            f"oracle method supports at most {MAX_GRID_DIM} input dimensions, got {spec.input_set.dim}")
    if cfg.method in ("fixed-point", "trust-region"):
        s = spec.input_set
        if not (isinstance(s, NormBall) and s.p == 2):
            raise PreconditionError(f"{cfg.method} needs a 2-norm ball input set")
        fold_output_layer(net, spec.constraints[0].c, 0.0, s.center, s.radius)


def _verify_constraint(con: OutputConstraint, *, net, spec, cfg: RunConfig, bounds) -> ConstraintVerdict:
    vc = cfg.verify_config()
    s = spec.input_set
    if cfg.method == "oracle":
        grid = grid_oracle(net, con.c, con.d, s)
        return make_verdict(grid.value + grid.error, grid.value, 0)
    attack = pgd_attack(net, con.c, con.d, s, vc.attack)
    if cfg.method == "dual":
        dual = minimize_dual(net, con.c, con.d, s, bounds, vc.dual)
        return make_verdict(dual.bound, attack.value, dual.iterations)
    if cfg.method == "interval":
        return make_verdict(interval_bound(net, con.c, con.d, s, bounds), attack.value, 0)
    if cfg.method == "attack":
        return make_verdict(np.inf, attack.value, 0)
    problem, _ = fold_output_layer(net, con.c, con.d, s.center, s.radius)
    if cfg.method == "fixed-point":
        fp = fixed_point_verify(problem, max_iters=max(cfg.iterations, 1))
        return make_verdict(fp.upper_bound, max(fp.value, attack.value), len(fp.iterates) - 1)
    tr = trust_region_bound(problem)
    return make_verdict(tr.upper_bound, max(tr.lower_bound, attack.value), 0)


def exit_code(report: VerdictReport) -> int:
    if report.any_falsified:
        return EXIT_FALSIFIED
    if not report.all_verified:
        return EXIT_UNKNOWN
    return EXIT_VERIFIED


def cmd_verify(cfg: RunConfig) -> int:
    net = _read_network(cfg.net)
    spec = VerificationSpec.from_dict(_read_json(cfg.spec, "spec"))
    _check_method(cfg, net, spec)
    bounds = None
    if cfg.method in ("dual", "interval"):
        bounds = compute_bounds(net, spec.input_set, cfg.tighten)
    fn = partial(_verify_constraint, net=net, spec=spec, cfg=cfg, bounds=bounds)
    report = VerdictReport(tuple(_map(fn, list(spec.constraints), cfg.workers)))
    _emit({"method": cfg.method, **report.to_dict()}, cfg.out)
    return exit_code(report)


# -- certify-dataset ------------------------------------------------------------------

def _example_job(item, *, net, eps, p, vc):
    x, label = item
    return example_status(net, x, label, eps, p, vc)


def cmd_certify_dataset(cfg: RunConfig, dataset: Path, eps: float, p) -> int:
    if not eps >= 0:
        raise PreconditionError("--epsilon must be non-negative")
    net = _read_network(cfg.net)
    data = _read_dataset(dataset)
    for x, label in data:
        if x.shape != (net.input_dim,) or not 0 <= label < net.output_dim:
            raise FormatError("dataset example does not match the network shape")
    vc = cfg.verify_config()
    fn = partial(_example_job, net=net, eps=eps, p=p, vc=vc)
    statuses = _map(fn, data, cfg.workers)
    rates = certified_error_rate(net, data, eps, p, vc, statuses=statuses)
    if rates.upper < rates.lower:
        raise VerificationError("certified error fell below the attack error; bounds are unsound")
    _emit({"epsilon": eps, "norm": _norm_name(p), **rates.to_dict()}, cfg.out)
    return EXIT_VERIFIED


# -- switches ----------------------------------------------------------------------

def switch_bounds(upper_sets, lower_sets) -> dict:
    return {"max_switches_upper": max_label_switches(upper_sets),
            "max_switches_lower": max_label_switches(lower_sets),
            "reachable_upper": [sorted(s) for s in upper_sets],
            "reachable_lower": [sorted(s) for s in lower_sets]}


def cmd_switches(cfg: RunConfig, sequence: Path, eps: float, p, reachable=reachable_labels) -> int:
    """``reachable(net, x, eps, p, config) -> (upper_set, lower_set)`` is injectable for tests."""
    if not eps >= 0:
        raise PreconditionError("--epsilon must be non-negative")
    net = _read_network(cfg.net)
    feats = _read_sequence(sequence)
    if any(x.shape != (net.input_dim,) for x in feats):
        raise FormatError("feature vector does not match the network input width")
    vc = cfg.verify_config()
    pairs = [reachable(net, x, eps, p, vc) for x in feats]
    _emit({"epsilon": eps, "norm": _norm_name(p), **switch_bounds(*zip(*pairs))}, cfg.out)
    return EXIT_VERIFIED


# -- argument parsing --------------------------------------------------------------

def _norm_name(p) -> str:
    return "inf" if p == np.inf else str(int(p))


def _norm(text: str):
    try:
        return _parse_p(text)
    except VerificationError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dualverify",
                                     description="Certify properties of feedforward networks with dual bounds.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--net", type=Path, required=True, help="network JSON file")
    common.add_argument("--iters", type=int, default=500, help="dual subgradient iterations (default 500)")
    common.add_argument("--tighten", type=int, default=0, metavar="N",
                        help="tighten activation bounds with N dual iterations per neuron (default off)")
    common.add_argument("--seed", type=int, default=0, help="attack seed")
    common.add_argument("--out", type=Path, help="write the JSON report here instead of standard output")
    common.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                        help="worker processes (default: logical CPU count)")

    v = sub.add_parser("verify", parents=[common], help="bound every constraint of a specification")
    v.add_argument("--spec", type=Path, required=True, help="specification JSON file")
    v.add_argument("--method", choices=METHODS, default="dual")

    ball = argparse.ArgumentParser(add_help=False)
    ball.add_argument("--epsilon", type=float, required=True, help="perturbation radius")
    ball.add_argument("--norm", type=_norm, default=np.inf, help="ball norm: 1, 2 or inf (default inf)")

    c = sub.add_parser("certify-dataset", parents=[common, ball],
                       help="certified and attack error rates over a labelled dataset")
    c.add_argument("--dataset", type=Path, required=True, help='JSON {"examples": [{"x": [...], "label": k}]}')

    s = sub.add_parser("switches", parents=[common, ball],
                       help="bounds on the number of label changes along a feature sequence")
    s.add_argument("sequence", type=Path, help='JSON {"features": [[...], ...]}')
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VERIFIED if exc.code == 0 else EXIT_ERROR
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig(args.net, getattr(args, "spec", None), getattr(args, "method", "dual"),
                        args.iters, args.tighten, args.seed, args.out, args.workers)
        if args.command == "verify":
            return cmd_verify(cfg)
        if args.command == "certify-dataset":
            return cmd_certify_dataset(cfg, args.dataset, args.epsilon, args.norm)
        return cmd_switches(cfg, args.sequence, args.epsilon, args.norm)
    except (VerificationError, OSError) as exc:
        print(f"dualverify: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
