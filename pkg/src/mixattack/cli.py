"""Command-line front end: attacks, the lattice oracle, and experiments.

Exit codes: 0 success, 1 usage error (bad flags, bad files, incompatible
attack/model combinations), 2 resource limit (exponential enumeration
refused).  All randomness flows from --seed; there is no ambient entropy.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields, replace

import numpy as np

from . import experiments, lattice, linear, multiclass
from .geometry import ThreatModel
from .linear import LabeledPoint

USAGE_ERROR = 1
RESOURCE_ERROR = 2


class CliError(Exception):
    def __init__(self, message: str, code: int = USAGE_ERROR):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    """argparse exits with code 2 on bad usage; the contract here is 1."""

    def error(self, message):
        raise CliError(message)


def _threat_model(args) -> ThreatModel:
    if args.norm == "l2":
        return ThreatModel.l2(args.eps)
    return ThreatModel.linf(args.eps)


def _load_model_file(path: str):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise CliError(f"cannot read model file: {exc}")
    except json.JSONDecodeError as exc:
        raise CliError(f"model file is not valid JSON: {exc}")
    if "classifiers" in data:
        return linear.mixture_from_dict(data)
    if "models" in data:
        return multiclass.mixture_from_dict(data)
    raise CliError("model file needs a 'classifiers' (linear) or 'models' "
                   "(multiclass) key")


def _load_point(args, dim: int, binary: bool) -> LabeledPoint:
    if args.point_file:
        with open(args.point_file) as fh:
            data = json.load(fh)
        x = np.asarray(data["x"], dtype=float)
        y = int(data["y"])
    elif args.point is not None:
        if args.label is None:
            raise CliError("--point needs --label")
        x = np.asarray([float(v) for v in args.point.split(",")], dtype=float)
        y = int(args.label)
    else:
        raise CliError("provide --point-file or --point/--label")
    if x.shape[0] != dim:
        raise CliError(f"point dimension {x.shape[0]} does not match model "
                       f"dimension {dim}")
    if binary and y not in (-1, 1):
        raise CliError("binary linear mixtures need a label in {-1, +1}")
    return LabeledPoint(x, y)


def _resolve_order(order_flag: str, m: int, rng: np.random.Generator):
    if order_flag == "weight":
        return "weight"
    if order_flag == "random":
        return list(rng.permutation(m))
    try:
        return [int(v) for v in order_flag.split(",")]
    except ValueError:
        raise CliError(f"--order must be 'weight', 'random' or a comma "
                       f"permutation, got {order_flag!r}")


def _cmd_attack(args) -> int:
    mix = _load_model_file(args.model)
    is_linear = isinstance(mix, linear.Mixture)
    if args.attack in ("arc",) and not is_linear:
        raise CliError("arc requires binary linear mixture")
    if args.attack in ("arc-greedy", "loe-pgd") and is_linear:
        raise CliError(f"{args.attack} requires multiclass mixture")
    pt = _load_point(args, mix.dim, binary=is_linear)
    tm = _threat_model(args)
    rng = linear.trial_rng(args.seed)
    order = _resolve_order(args.order, mix.m, rng)
    if is_linear:
        res = experiments.run_linear_attack(
            args.attack, mix, pt, tm, steps=args.steps, eta=args.eta, order=order)
    else:
        res = experiments.run_multiclass_attack(
            args.attack, mix, pt, tm, steps=args.steps, eta=args.eta,
            order=order, restarts=args.restarts, rng=rng)
    payload = res.to_dict()
    print(f"error={res.error} fooled={list(res.fooled_indices)}")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(payload, fh, indent=2)
    else:
        print(json.dumps(payload))
    return 0


def _cmd_lattice(args) -> int:
    mix = _load_model_file(args.model)
    if not isinstance(mix, linear.Mixture):
        raise CliError("lattice enumeration requires a binary linear mixture")
    pt = _load_point(args, mix.dim, binary=True)
    tm = _threat_model(args)
    lat = lattice.build_lattice(mix, pt, tm)
    payload = lattice.lattice_to_dict(lat, mix)
    print(f"nodes={len(payload['nodes'])} maximal={payload['maximal']}")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(payload, fh, indent=2)
    else:
        print(json.dumps(payload))
    return 0


def _cmd_experiment(args) -> int:
    overrides = {}
    if args.config:
        try:
            with open(args.config) as fh:
                overrides.update(json.load(fh))
        except OSError as exc:
            raise CliError(f"cannot read config file: {exc}")
        except json.JSONDecodeError as exc:
            raise CliError(f"config file is not valid JSON: {exc}")
    for name in ("trials", "seed", "jobs", "d", "steps", "eta", "epsilon"):
        value = getattr(args, name)
        if value is not None:
            overrides[name] = value
    if args.norm is not None:
        overrides["norm"] = args.norm
    if args.m_values is not None:
        overrides["m_values"] = [int(v) for v in args.m_values.split(",")]
    cfg = experiments.SweepConfig(experiment=args.name)
    known = {f.name for f in fields(experiments.SweepConfig)}
    for key, value in overrides.items():
        if key not in known:
            raise CliError(f"{key}: unknown config field")
        if isinstance(value, list):
            value = tuple(value)
        cfg = replace(cfg, **{key: value})
    try:
        experiments.validate_config(cfg)
    except ValueError as exc:
        raise CliError(str(exc))
    written = experiments.run_experiment_to_dir(cfg, args.out)
    for path in written:
        print(path)
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="mixattack",
                     description="Attacks and oracles for mixtures of classifiers")
    sub = parser.add_subparsers(dest="command", required=True)

    atk = sub.add_parser("attack", help="run one attack on a serialized mixture")
    atk.add_argument("model", help="mixture JSON file")
    atk.add_argument("--attack", required=True,
                     choices=["eol-pgd", "loe-pgd", "arc", "arc-greedy", "lca"])
    atk.add_argument("--point", help="inline point, comma separated")
    atk.add_argument("--label", type=int, help="label for the inline point")
    atk.add_argument("--point-file", help="JSON file with fields x and y")
    atk.add_argument("--norm", choices=["l2", "linf"], default="l2")
    atk.add_argument("--eps", type=float, required=True)
    atk.add_argument("--steps", type=int)
    atk.add_argument("--eta", type=float)
    atk.add_argument("--order", default="weight",
                     help="'weight', 'random', or a comma permutation")
    atk.add_argument("--seed", type=int, default=42)
    atk.add_argument("--restarts", type=int, default=0)
    atk.add_argument("--out", help="write the result JSON here")
    atk.set_defaults(func=_cmd_attack)

    lat = sub.add_parser("lattice", help="enumerate the adversarial lattice")
    lat.add_argument("model", help="binary linear mixture JSON file")
    lat.add_argument("--point", help="inline point, comma separated")
    lat.add_argument("--label", type=int)
    lat.add_argument("--point-file")
    lat.add_argument("--norm", choices=["l2", "linf"], default="l2")
    lat.add_argument("--eps", type=float, required=True)
    lat.add_argument("--out")
    lat.set_defaults(func=_cmd_lattice)

    exp = sub.add_parser("experiment", help="run a synthetic experiment")
    exp.add_argument("name", choices=list(experiments.EXPERIMENTS))
    exp.add_argument("--config", help="JSON file of config fields")
    exp.add_argument("--out", required=True, help="output directory")
    exp.add_argument("--trials", type=int)
    exp.add_argument("--seed", type=int)
    exp.add_argument("--jobs", type=int)
    exp.add_argument("--d", type=int)
    exp.add_argument("--steps", type=int)
    exp.add_argument("--eta", type=float)
    exp.add_argument("--epsilon", type=float)
    exp.add_argument("--norm", choices=["l2", "linf"])
    exp.add_argument("--m-values", help="comma list of mixture sizes")
    exp.set_defaults(func=_cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except lattice.ResourceLimitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RESOURCE_ERROR
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
