"""Command-line front end: JSON problem files in, JSON or CSV results out.

Exit codes: 0 success, 2 invalid input (schema or precondition), 3 an
infeasible or unbounded problem (the output then carries a certificate).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Any, Callable

import jsonschema
import numpy as np

from .config import DEFAULT_CONFIG, NumericConfig
from .errors import PreconditionError, Signal
from .loss_div import loss_from_json
from .market import (
    Cone,
    MarketModel,
    Regulator,
    TradeConstraint,
    finiteness_check,
    market_extension_support_detail,
    wcone_membership,
)
from .polyhedron import Polyhedron, ThresholdData
from .prob_core import FiniteProbSpace, RandomVector, ScenarioTree, VectorMeasure
from .scalar_risk import divergence_risk_scalar, shortfall_scalar
from .set_risk import (
    _fmt,
    penalty_divergence_set,
    penalty_shortfall_set,
    sample_directions,
    shortfall_region,
    shortfall_support_detail,
)
from .special import AvarSpec, EntropicSpec, avar_region, avar_scalar, entropic_optimal_r, entropic_vector

EXIT_OK, EXIT_INPUT, EXIT_CERTIFICATE = 0, 2, 3

# --------------------------------------------------------------------------
# Schemas

_NUM_LIST = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_MATRIX = {"type": "array", "items": _NUM_LIST, "minItems": 1}

SPACE_SCHEMA = {
    "type": "object",
    "required": ["probabilities", "outcomes"],
    "properties": {
        "probabilities": _NUM_LIST,
        "outcomes": {"type": "array", "minItems": 1,
                     "items": {"oneOf": [{"type": "number"}, _NUM_LIST]}},
    },
    "additionalProperties": False,
}

LOSS_SCHEMA = {
    "type": "object",
    "required": ["kind"],
    "properties": {"kind": {"enum": ["exponential", "avar", "pwl", "mixed"]}},
    "allOf": [
        {"if": {"properties": {"kind": {"const": "exponential"}}},
         "then": {"required": ["beta"], "properties": {"beta": {"oneOf": [{"type": "number"}, _NUM_LIST]}}}},
        {"if": {"properties": {"kind": {"const": "avar"}}},
         "then": {"required": ["alpha"], "properties": {"alpha": {"oneOf": [{"type": "number"}, _NUM_LIST]}}}},
        {"if": {"properties": {"kind": {"const": "pwl"}}},
         "then": {"required": ["breakpoints", "slopes"]}},
        {"if": {"properties": {"kind": {"const": "mixed"}}},
         "then": {"required": ["components"],
                  "properties": {"components": {"type": "array", "minItems": 1, "items": {"type": "object"}}}}},
    ],
}

POLYHEDRON_SCHEMA = {
    "type": "object",
    "required": ["normals", "offsets"],
    "properties": {"normals": _MATRIX, "offsets": _NUM_LIST},
    "additionalProperties": False,
}

THRESHOLD_SCHEMA = {
    "type": "object",
    "required": ["x0"],
    "properties": {"x0": _NUM_LIST, "C": POLYHEDRON_SCHEMA},
    "additionalProperties": False,
}

MEASURE_SCHEMA = {
    "type": "object",
    "oneOf": [{"required": ["densities"]}, {"required": ["probabilities"]}],
    "properties": {"densities": _MATRIX, "probabilities": _MATRIX},
    "additionalProperties": False,
}

_CONSTRAINT_SCHEMA = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["all", "box", "halfspace"]},
        "upper": {"type": "array", "items": {"type": ["number", "null"]}},
        "normal": _NUM_LIST,
        "bound": {"type": "number"},
    },
    "additionalProperties": False,
}

TREE_SCHEMA = {
    "type": "object",
    "required": ["assets", "nodes"],
    "properties": {
        "assets": {"type": "integer", "minimum": 1},
        "nodes": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["id", "parent", "cone_generators"],
                "properties": {
                    "id": {"type": ["string", "integer"]},
                    "parent": {"type": ["string", "integer", "null"]},
                    "prob": {"type": "number"},
                    "cone_generators": _MATRIX,
                    "constraint": _CONSTRAINT_SCHEMA,
                    "position": _NUM_LIST,
                },
                "additionalProperties": False,
            },
        },
    },
    "additionalProperties": False,
}

_COMMANDS = ["scalar-shortfall", "scalar-divergence", "region", "support-sweep", "entropic", "avar",
             "market-support", "wcone-check", "finiteness-check", "penalty"]

JOB_SCHEMA = {
    "type": "object",
    "required": ["command"],
    "properties": {
        "command": {"enum": _COMMANDS},
        "args": {"type": "object"},
        "config": {"type": "object"},
        "format": {"enum": ["json", "csv"]},
        "out": {"type": "string"},
    },
    "additionalProperties": False,
}

SCHEMAS = {
    "space": SPACE_SCHEMA,
    "loss": LOSS_SCHEMA,
    "threshold": THRESHOLD_SCHEMA,
    "measure": MEASURE_SCHEMA,
    "tree": TREE_SCHEMA,
    "job": JOB_SCHEMA,
}


class InputError(Exception):
    """Invalid input file; reported with exit code 2."""


class CertificateExit(Exception):
    """Infeasible or unbounded problem; the payload is still written (exit code 3)."""

    def __init__(self, payload):
        super().__init__("infeasible or unbounded")
        self.payload = payload


def _pointer(path) -> str:
    return "/" + "/".join(str(p).replace("~", "~0").replace("/", "~1") for p in path)


def _load(path: str | Path, schema_name: str) -> Any:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise InputError(f"{path}: file not found") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None
    _validate(data, schema_name, str(path))
    return data


def _validate(data, schema_name: str, origin: str) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMAS[schema_name])
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise InputError(f"{origin}: {_pointer(err.absolute_path)}: {err.message}")


# --------------------------------------------------------------------------
# Parsing helpers


def _space(data) -> RandomVector:
    space = FiniteProbSpace(data["probabilities"])
    return RandomVector(space, data["outcomes"])


def _threshold(data, m: int) -> ThresholdData:
    if data is None:
        raise PreconditionError("a threshold file is required for this loss")
    C = Polyhedron(data["C"]["normals"], data["C"]["offsets"]) if "C" in data else None
    thresh = ThresholdData(data["x0"], C)
    if thresh.m != m:
        raise PreconditionError(f"threshold has {thresh.m} components but the position has {m}")
    return thresh


def _measure(data, space: FiniteProbSpace) -> VectorMeasure:
    if "densities" in data:
        return VectorMeasure(space, np.array(data["densities"], dtype=float))
    return VectorMeasure.from_probabilities(space, np.array(data["probabilities"], dtype=float))


def _vector(text: str | None, name: str) -> np.ndarray | None:
    if text is None:
        return None
    try:
        return np.array([float(v) for v in str(text).split(",")], dtype=float)
    except ValueError:
        raise InputError(f"--{name}: expected comma-separated numbers, got {text!r}") from None


def _constraint(data, d: int) -> TradeConstraint:
    kind = data["kind"]
    if kind == "all":
        return TradeConstraint.all_space(d)
    if kind == "box":
        return TradeConstraint.box([math.inf if v is None else v for v in data["upper"]])
    return TradeConstraint.halfspace(data["normal"], data["bound"])


def market_from_json(data) -> tuple[MarketModel, RandomVector | None]:
    """Model and, when every leaf carries a position, the terminal position ``Y``."""
    d = data["assets"]
    parents = [(node["id"], node["parent"]) for node in data["nodes"]]
    has_children = {node["parent"] for node in data["nodes"]}
    leaves = [node for node in data["nodes"] if node["id"] not in has_children]
    missing = [node["id"] for node in leaves if "prob" not in node]
    if missing:
        raise PreconditionError(f"leaves {missing} need a probability")
    leaf_probs = {node["id"]: node["prob"] for node in leaves}
    node_probs = {node["id"]: node["prob"] for node in data["nodes"] if "prob" in node}
    tree = ScenarioTree.from_parents(parents, leaf_probs, node_probs)
    by_id = {node["id"]: node for node in data["nodes"]}
    cones = {nid: Cone(by_id[nid]["cone_generators"]) for nid in tree.nodes}
    constraints = {nid: _constraint(by_id[nid]["constraint"], d) for nid in tree.nodes if "constraint" in by_id[nid]}
    model = MarketModel(tree, d, cones, constraints)
    Y = None
    if all("position" in by_id[leaf] for leaf in tree.leaves):
        Y = RandomVector(tree.space, [by_id[leaf]["position"] for leaf in tree.leaves])
    return model, Y


# --------------------------------------------------------------------------
# Output


def _num(x):
    if isinstance(x, Signal):
        return x.value
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    x = float(x)
    if math.isnan(x):
        return None
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    out = float(f"{x:.9g}")
    return 0.0 if out == 0 else out


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if obj is None or isinstance(obj, str):
        return obj
    return _num(obj)


def _csv(header: list[str], rows: list[list]) -> str:
    lines = [",".join(header)] + [",".join(_fmt(float(v)) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def _render(result: dict, fmt: str) -> str:
    if fmt == "csv":
        if "csv" not in result:
            raise InputError("this command has no CSV output; use --format json")
        return result["csv"]
    payload = {k: v for k, v in result.items() if k != "csv"}
    return json.dumps(_clean(payload), indent=2) + "\n"


# --------------------------------------------------------------------------
# Commands


def _pick_loss(losses, component):
    if len(losses) == 1:
        return losses[0]
    return losses[component or 0]


def _cmd_scalar_shortfall(args, config):
    X = _space(_load(args.space, "space"))
    loss = _pick_loss(loss_from_json(_load(args.loss, "loss")), args.component)
    res = shortfall_scalar(X, loss, args.x0, component=args.component, config=config)
    return {"value": res.value, "iterations": res.iterations}


def _cmd_scalar_divergence(args, config):
    X = _space(_load(args.space, "space"))
    loss = _pick_loss(loss_from_json(_load(args.loss, "loss")), args.component)
    res = divergence_risk_scalar(X, loss, args.lam, args.x0, component=args.component, config=config)
    if isinstance(res, Signal):
        return {"value": "-inf", "signal": res.name}
    return {"value": res.value, "minimizer": res.minimizer_s}


def _region_inputs(args):
    X = _space(_load(args.space, "space"))
    losses = loss_from_json(_load(args.loss, "loss"))
    if args.threshold:
        thresh = _threshold(_load(args.threshold, "threshold"), X.m)
    else:
        thresh = ThresholdData(np.zeros(X.m))
    return X, losses, thresh


def _cmd_region(args, config):
    X, losses, thresh = _region_inputs(args)
    dirs = sample_directions(X.m, args.directions)
    oracle, cloud = shortfall_region(X, losses, thresh, dirs, config)
    return {
        "anchor": oracle.anchor,
        "directions": cloud.directions,
        "support": cloud.support,
        "points": cloud.points,
        "csv": cloud.to_csv(),
    }


def _cmd_support_sweep(args, config):
    X, losses, thresh = _region_inputs(args)
    dirs = sample_directions(X.m, args.directions)
    rows = []
    for w in dirs:
        sol = shortfall_support_detail(X, losses, thresh, w, config)
        r = np.full(X.m, math.nan) if sol.r is None else sol.r
        rows.append([*w, sol.value, *r])
    header = [f"w{i + 1}" for i in range(X.m)] + ["support"] + [f"r{i + 1}" for i in range(X.m)]
    return {
        "rows": [{"w": row[:X.m], "support": row[X.m], "r": row[X.m + 1:]} for row in rows],
        "csv": _csv(header, rows),
    }


def _cmd_entropic(args, config):
    X = _space(_load(args.space, "space"))
    beta = _vector(args.beta, "beta")
    thresh = _threshold(_load(args.threshold, "threshold"), X.m) if args.threshold else ThresholdData(np.zeros(X.m))
    spec = EntropicSpec(beta, thresh)
    rho = entropic_vector(X, spec.beta)
    out: dict = {"rho": rho}
    w = _vector(args.direction, "direction")
    if w is not None:
        opt = entropic_optimal_r(spec, w, config)
        if isinstance(opt, Signal):
            out.update({"signal": opt.name, "support": "-inf"})
        else:
            out.update({"optimal_r": opt.r, "objective": opt.value, "support": float(w @ rho) - opt.value})
    return out


def _cmd_avar(args, config):
    X = _space(_load(args.space, "space"))
    alpha = _vector(args.alpha, "alpha")
    r = _vector(args.r, "r") if args.r else np.ones(X.m)
    thresh = _threshold(_load(args.threshold, "threshold"), X.m) if args.threshold else ThresholdData(np.zeros(X.m))
    spec = AvarSpec(alpha, r, thresh)
    values = [avar_scalar(X.column(i), spec.alpha[i], spec.r[i], 0.0, X.space.p) for i in range(X.m)]
    region = avar_region(X, spec)
    return {"values": values, "region": region.to_json()}


def _regulator(args, m_hint: int) -> Regulator:
    losses = loss_from_json(_load(args.loss, "loss"))
    if args.threshold:
        data = _load(args.threshold, "threshold")
        thresh = _threshold(data, len(data["x0"]))
    else:
        thresh = ThresholdData(np.zeros(len(losses) if len(losses) > 1 else m_hint))
    return Regulator(losses, thresh)


def _cmd_market_support(args, config):
    model, Y = market_from_json(_load(args.tree, "tree"))
    if Y is None:
        raise PreconditionError("every leaf of the tree needs a position")
    regulator = _regulator(args, model.d)
    w = _vector(args.direction, "direction")
    directions = [w] if w is not None else list(sample_directions(regulator.m, args.directions))
    rows, status = [], "optimal"
    for w in directions:
        res = market_extension_support_detail(Y, regulator, model, w, config)
        row: dict = {"w": w, "status": res.status, "value": res.value}
        if res.plan is not None:
            row["plan"] = {str(node): u for node, u in res.plan.trades.items()}
        if res.certificate is not None:
            row["certificate"] = res.certificate
        if res.message:
            row["message"] = res.message
        rows.append(row)
        if res.status != "optimal":
            status = res.status
    payload = {"status": status, "results": rows}
    if status != "optimal":
        raise CertificateExit(payload)
    return payload


def _cmd_wcone_check(args, config):
    model, _ = market_from_json(_load(args.tree, "tree"))
    Q = _measure(_load(args.measure, "measure"), model.tree.space)
    w = _vector(args.weights, "weights")
    return {"member": wcone_membership(model, Q, w, config)}


def _cmd_finiteness_check(args, config):
    model, _ = market_from_json(_load(args.tree, "tree"))
    thresh = _threshold(_load(args.threshold, "threshold"), model.d) if args.threshold else ThresholdData(np.zeros(model.d))
    r = _vector(args.r, "r") if args.r else np.ones(model.d)
    # a failed sufficient condition is an answer, not an infeasible problem
    return finiteness_check(model, r, thresh).to_json()


def _cmd_penalty(args, config):
    X, losses, thresh = _region_inputs(args)
    Q = _measure(_load(args.measure, "measure"), X.space)
    w = _vector(args.direction, "direction")
    if args.r:
        r = _vector(args.r, "r")
        pen = penalty_divergence_set([loss.conjugate() for loss in losses], r, thresh, Q, w)
    else:
        pen = penalty_shortfall_set(losses, thresh, Q, w, config)
    return pen.to_json()


_HANDLERS: dict[str, Callable] = {
    "scalar-shortfall": _cmd_scalar_shortfall,
    "scalar-divergence": _cmd_scalar_divergence,
    "region": _cmd_region,
    "support-sweep": _cmd_support_sweep,
    "entropic": _cmd_entropic,
    "avar": _cmd_avar,
    "market-support": _cmd_market_support,
    "wcone-check": _cmd_wcone_check,
    "finiteness-check": _cmd_finiteness_check,
    "penalty": _cmd_penalty,
}


# --------------------------------------------------------------------------
# Argument parsing


def _common(p: argparse.ArgumentParser, csv_default: bool = False) -> None:
    p.add_argument("--config", help="JSON file with numeric config overrides")
    p.add_argument("--format", choices=["json", "csv"], default="csv" if csv_default else "json")
    p.add_argument("--out", help="output path (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="setrisk", description="Set-valued shortfall and divergence risk measures.")
    sub = parser.add_subparsers(dest="command", required=True)

    def space_loss(p, threshold=True):
        p.add_argument("--space", required=True, help="probability space and outcomes (JSON)")
        p.add_argument("--loss", required=True, help="loss specification (JSON)")
        if threshold:
            p.add_argument("--threshold", help="threshold x0 and set C (JSON); default x0 = 0, C = orthant")

    p = sub.add_parser("scalar-shortfall", help="scalar shortfall risk of one column")
    space_loss(p, threshold=False)
    p.add_argument("--x0", type=float, required=True)
    p.add_argument("--component", type=int, default=None)
    _common(p)

    p = sub.add_parser("scalar-divergence", help="scalar divergence risk at a fixed index")
    space_loss(p, threshold=False)
    p.add_argument("--x0", type=float, required=True)
    p.add_argument("--lam", type=float, required=True)
    p.add_argument("--component", type=int, default=None)
    _common(p)

    p = sub.add_parser("region", help="boundary cloud of the set-valued shortfall risk")
    space_loss(p)
    p.add_argument("--directions", type=int, default=None)
    _common(p, csv_default=True)

    p = sub.add_parser("support-sweep", help="support values and optimal scalings over sampled directions")
    space_loss(p)
    p.add_argument("--directions", type=int, default=None)
    _common(p, csv_default=True)

    p = sub.add_parser("entropic", help="entropic risk vector and optimal scaling")
    p.add_argument("--space", required=True)
    p.add_argument("--beta", required=True, help="comma-separated risk aversions")
    p.add_argument("--threshold")
    p.add_argument("--direction", help="comma-separated weights")
    _common(p)

    p = sub.add_parser("avar", help="average value at risk values and region")
    p.add_argument("--space", required=True)
    p.add_argument("--alpha", required=True)
    p.add_argument("--r")
    p.add_argument("--threshold")
    _common(p)

    p = sub.add_parser("market-support", help="support of the market extension")
    p.add_argument("--tree", required=True, help="scenario tree with cones and leaf positions (JSON)")
    p.add_argument("--loss", required=True)
    p.add_argument("--threshold")
    p.add_argument("--direction")
    p.add_argument("--directions", type=int, default=None)
    _common(p)

    p = sub.add_parser("wcone-check", help="consistency of a vector measure with the solvency cones")
    p.add_argument("--tree", required=True)
    p.add_argument("--measure", required=True)
    p.add_argument("--weights", required=True)
    _common(p)

    p = sub.add_parser("finiteness-check", help="common supporting halfspace of all solvency cones")
    p.add_argument("--tree", required=True)
    p.add_argument("--threshold")
    p.add_argument("--r")
    _common(p)

    p = sub.add_parser("penalty", help="penalty halfspace at a measure and direction")
    space_loss(p)
    p.add_argument("--measure", required=True)
    p.add_argument("--direction", required=True)
    p.add_argument("--r", help="fixed scalings: divergence penalty instead of shortfall penalty")
    _common(p)

    p = sub.add_parser("run", help="run a job file")
    p.add_argument("--job", required=True)
    return parser


def _config(path: str | None) -> NumericConfig:
    if not path:
        return DEFAULT_CONFIG
    try:
        with open(path, encoding="utf-8") as fh:
            overrides = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: {exc}") from None
    return _apply_config(overrides, path)


def _apply_config(overrides: dict, origin: str) -> NumericConfig:
    if not isinstance(overrides, dict):
        raise InputError(f"{origin}: config must be an object")
    fixed = {k: tuple(v) if isinstance(v, list) else v for k, v in overrides.items()}
    try:
        return DEFAULT_CONFIG.with_overrides(**fixed)
    except KeyError as exc:
        raise InputError(f"{origin}: {exc.args[0]}") from None


def _job_namespace(path: str) -> tuple[argparse.Namespace, NumericConfig]:
    job = _load(path, "job")
    base = Path(path).resolve().parent
    argv = [job["command"]]
    for key, value in job.get("args", {}).items():
        flag = "--" + key.replace("_", "-")
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        if key in {"space", "loss", "threshold", "measure", "tree"}:
            value = str(base / value)
        argv += [flag, str(value)]
    if "format" in job:
        argv += ["--format", job["format"]]
    if "out" in job:
        argv += ["--out", str(base / job["out"])]
    args = build_parser().parse_args(argv)
    config = _apply_config(job["config"], path) if "config" in job else DEFAULT_CONFIG
    return args, config


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            args, config = _job_namespace(args.job)
        else:
            config = _config(args.config)
        handler = _HANDLERS[args.command]
        try:
            result = handler(args, config)
            code = EXIT_OK
        except CertificateExit as exc:
            result, code = exc.payload, EXIT_CERTIFICATE
        _emit(_render(result, args.format), args.out)
        return code
    except (InputError, PreconditionError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT
    except (KeyError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
