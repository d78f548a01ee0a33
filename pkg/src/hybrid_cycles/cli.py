"""Command-line front end: ``hybrid-cycles {simulate,stability,sweep,limits,verify}``.

Every subcommand except ``verify`` reads one JSON config (``--config``)
validated against a schema; results go to ``--out`` (default ``.``).

Exit codes: 0 success, 2 config error, 3 numerical failure (or failed
acceptance criteria), 4 model-hypothesis violation.
"""

from __future__ import annotations

import argparse
import ast
import json
import logging
import math
import os
import sys
from pathlib import Path
from typing import Callable, Optional

import jsonschema
import numpy as np

from .errors import ConfigError, HybridCyclesError, NotAFixedPoint
from .hybrid import HybridOptions, check_hypotheses, hybrid_flow
from .ode import IntegratorOptions
from .section import SectionChart

log = logging.getLogger("hybrid_cycles")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_HYPOTHESIS = 0, 2, 3, 4

_NUM = {"type": "number"}
_VEC = {"type": "array", "items": _NUM, "minItems": 1}

_INTEGRATOR = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "rel_tol": {"type": "number", "exclusiveMinimum": 0},
        "abs_tol": {"type": "number", "exclusiveMinimum": 0},
        "h_init": _NUM,
        "h_min": _NUM,
        "h_max": _NUM,
        "max_steps": {"type": "integer", "minimum": 1},
    },
}

_MODEL = {
    "type": "object",
    "additionalProperties": False,
    "required": ["name"],
    "properties": {"name": {"type": "string"}, "params": {"type": "object"}},
}

_CHART = {
    "type": "object",
    "additionalProperties": False,
    "required": ["point", "direction"],
    "properties": {"point": _VEC, "direction": _VEC, "interval": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}},
}

SCHEMAS = {
    "simulate": {
        "type": "object",
        "additionalProperties": False,
        "required": ["model", "horizon"],
        "properties": {
            "model": _MODEL,
            "x0": _VEC,
            "horizon": {"type": "number", "minimum": 0},
            "impacts": {"type": "integer", "minimum": 0},
            "integrator": _INTEGRATOR,
            "record": {"type": "boolean"},
            "outputs": {
                "type": "object",
                "additionalProperties": False,
                "properties": {"trajectory": {"type": "string"}, "summary": {"type": "string"}},
            },
        },
    },
    "stability": {
        "type": "object",
        "additionalProperties": False,
        "required": ["model"],
        "properties": {
            "model": _MODEL,
            "chart": _CHART,
            "s_guess": _NUM,
            "s_star": {"oneOf": [_NUM, {"type": "array", "items": _NUM, "minItems": 1}]},
            "period": {"type": "integer", "minimum": 1},
            "integrator": _INTEGRATOR,
            "fd_check": {"type": "boolean"},
            "check_hypotheses": {"type": "boolean"},
            "fp_tol": {"type": "number", "exclusiveMinimum": 0},
            "output": {"type": "string"},
        },
    },
    "sweep": {
        "type": "object",
        "additionalProperties": False,
        "required": ["axes"],
        "properties": {
            "model": {"const": "rimless_wheel"},
            "axes": {
                "type": "object",
                "additionalProperties": False,
                "required": ["alpha", "delta"],
                "properties": {
                    k: {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["lo", "hi", "count"],
                        "properties": {
                            "lo": {"oneOf": [_NUM, {"const": "alpha"}]},
                            "hi": _NUM,
                            "count": {"type": "integer", "minimum": 2},
                            "open_lo": {"type": "boolean"},
                            "open_hi": {"type": "boolean"},
                        },
                    }
                    for k in ("alpha", "delta")
                },
            },
            "task": {"enum": ["inequality", "simulate"]},
            "zeta": {"type": "number", "exclusiveMinimum": 0},
            "workers": {"type": "integer", "minimum": 1},
            "rel_tol": {"type": "number", "exclusiveMinimum": 0},
            "n_impacts": {"type": "integer", "minimum": 1},
            "output": {"type": "string"},
        },
    },
    "limits": {
        "type": "object",
        "required": ["kind"],
        "oneOf": [
            {
                "additionalProperties": False,
                "required": ["kind", "map", "domain", "x0"],
                "properties": {
                    "kind": {"const": "interval_map"},
                    "map": {"type": "string"},
                    "domain": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
                    "x0": _NUM,
                    "n_max": {"type": "integer", "minimum": 1},
                    "tol": {"type": "number", "exclusiveMinimum": 0},
                    "output": {"type": "string"},
                },
            },
            {
                "additionalProperties": False,
                "required": ["kind", "map", "start"],
                "properties": {
                    "kind": {"const": "finite"},
                    "map": {"type": "object", "additionalProperties": {"type": ["string", "number", "integer"]}},
                    "start": {"type": ["string", "number", "integer"]},
                    "output": {"type": "string"},
                },
            },
            {
                "additionalProperties": False,
                "required": ["kind", "field", "impact_points", "reset", "R", "x0"],
                "properties": {
                    "kind": {"const": "hybrid_1d"},
                    "field": {"type": "string"},
                    "impact_points": _VEC,
                    "reset": {"type": "object", "additionalProperties": _NUM},
                    "R": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
                    "x0": _NUM,
                    "fixed_points": {"type": "array", "items": _NUM},
                    "integrator": _INTEGRATOR,
                    "output": {"type": "string"},
                },
            },
            {
                "additionalProperties": False,
                "required": ["kind", "model", "x0", "t_transient", "t_window"],
                "properties": {
                    "kind": {"const": "omega"},
                    "model": _MODEL,
                    "x0": _VEC,
                    "t_transient": {"type": "number", "minimum": 0},
                    "t_window": {"type": "number", "exclusiveMinimum": 0},
                    "integrator": _INTEGRATOR,
                    "output": {"type": "string"},
                    "crossings": {"type": "string"},
                },
            },
        ],
    },
}


# --------------------------------------------------------------------------
# helpers


def load_config(path, command: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    validate_config(cfg, command)
    return cfg


def validate_config(cfg: dict, command: str) -> None:
    try:
        jsonschema.validate(cfg, SCHEMAS[command])
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from exc


def _integrator(cfg: dict) -> IntegratorOptions:
    d = cfg.get("integrator", {})
    try:
        return IntegratorOptions(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad integrator options: {exc}") from exc


def _hybrid_opts(cfg: dict) -> HybridOptions:
    return HybridOptions(integrator=_integrator(cfg))


def _model(cfg: dict):
    from .models import make_model

    m = cfg["model"]
    try:
        return make_model(m["name"], m.get("params"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad model: {exc}") from exc


def _chart(cfg: dict, sys) -> SectionChart:
    if "chart" in cfg:
        c = cfg["chart"]
        return SectionChart.line(c["point"], c["direction"], tuple(c.get("interval", (-math.inf, math.inf))))
    chart = sys.extras.get("chart")
    if chart is None:
        raise ConfigError("model has no default section chart; supply 'chart'")
    return chart


_ALLOWED_NAMES = {k: getattr(math, k) for k in dir(math) if not k.startswith("_")}
_ALLOWED_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant,
    ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd, ast.Mod, ast.FloorDiv,
    ast.IfExp, ast.Compare, ast.Lt, ast.LtE, ast.Gt, ast.GtE, ast.Eq, ast.NotEq,
)


def parse_expression(text: str, var: str = "x") -> Callable[[float], float]:
    """Compile an arithmetic expression in ``var`` (math functions allowed)."""
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {text!r}: {exc.msg}") from exc
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ConfigError(f"disallowed syntax {type(node).__name__} in {text!r}")
        if isinstance(node, ast.Name) and node.id != var and node.id not in _ALLOWED_NAMES:
            raise ConfigError(f"unknown name {node.id!r} in {text!r}")
        if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name) and node.func.id in _ALLOWED_NAMES):
            raise ConfigError(f"only math functions may be called in {text!r}")
    code = compile(tree, "<expression>", "eval")
    return lambda x: float(eval(code, {"__builtins__": {}}, {**_ALLOWED_NAMES, var: x}))


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"not serializable: {type(o).__name__}")


# --------------------------------------------------------------------------
# subcommands


def cmd_simulate(cfg: dict, out: Path) -> int:
    sys_ = _model(cfg)
    x0 = cfg.get("x0")
    if x0 is None:
        x0 = sys_.extras.get("x0")
        if x0 is None:
            raise ConfigError("model has no default initial state; supply 'x0'")
    x0 = np.asarray(x0, dtype=float)
    if len(x0) != sys_.dimension:
        raise ConfigError(f"x0 has {len(x0)} components, model is {sys_.dimension}-dimensional")
    opts = _hybrid_opts(cfg)
    traj = hybrid_flow(sys_, x0, cfg["horizon"], opts, stop_after=cfg.get("impacts"), record=cfg.get("record", True))
    outputs = cfg.get("outputs", {})
    out.mkdir(parents=True, exist_ok=True)
    if traj.segments:
        traj.to_csv(out / outputs.get("trajectory", "trajectory.csv"))
    summary = {
        "model": sys_.name,
        "termination": traj.termination,
        "t_final": traj.t_total,
        "x_final": traj.x_final,
        "n_impacts": len(traj.impacts),
        "impacts": [
            {"t": ev.t, "x_minus": ev.x_minus, "x_plus": ev.x_plus, "transversality": ev.transversality_value,
             "chained": ev.chained}
            for ev in traj.impacts
        ],
    }
    _write_json(out / outputs.get("summary", "summary.json"), summary)
    log.info("simulate: %d impacts, termination %s", len(traj.impacts), traj.termination)
    print(f"{len(traj.impacts)} impacts, termination {traj.termination}, t = {traj.t_total:.6g}")
    return EXIT_OK


def cmd_stability(cfg: dict, out: Path) -> int:
    from .poincare import derivative_multi, find_fixed_point

    sys_ = _model(cfg)
    chart = _chart(cfg, sys_)
    opts = _hybrid_opts(cfg)
    n = cfg.get("period", 1)
    if cfg.get("check_hypotheses"):
        if not all(map(math.isfinite, chart.interval)):
            raise ConfigError("check_hypotheses needs a chart with a finite 'interval'")
        hyp = check_hypotheses(sys_, chart)
        if not hyp.all_passed(["H.4", "C.5(S)", "C.5(Delta(S))"]):
            failed = [c.name for c in hyp.checks if c.status == "fail"]
            print(f"hypothesis violated: {', '.join(failed)}", file=sys.stderr)
            _write_json(out / "hypotheses.json", hyp.to_dict())
            return EXIT_HYPOTHESIS
    if "s_star" in cfg:
        pts = cfg["s_star"] if isinstance(cfg["s_star"], list) else [cfg["s_star"]]
    else:
        from .poincare import chart_map

        guess = cfg.get("s_guess")
        if guess is None:
            raise ConfigError("supply 's_guess' or 's_star'")
        s0 = find_fixed_point(sys_, chart, guess, opts, n=n)
        pts = [s0]
        P = chart_map(sys_, chart, opts)
        for _ in range(n - 1):
            pts.append(P(pts[-1]))
    rep = derivative_multi(sys_, chart, pts, opts, fp_tol=cfg.get("fp_tol", 1e-6), with_fd=cfg.get("fd_check", True))
    _write_json(out / cfg.get("output", "stability.json"), rep.to_dict())
    print(
        f"|P'| = {rep.product:.6g} (signed {rep.signed_product:.6g}): reset {rep.reset_derivative:.6g}, "
        f"speed {rep.speed_ratio:.6g}, sines {rep.sine_ratio:.6g}, divergence {rep.divergence_factor:.6g}; {rep.verdict}"
    )
    return EXIT_OK


def cmd_sweep(cfg: dict, out: Path, workers: Optional[int]) -> int:
    from .sweep import run_sweep, spec_from_dict, write_sweep_csv

    cfg = dict(cfg)
    cfg.pop("model", None)
    output = cfg.pop("output", "sweep.csv")
    if workers is not None:
        cfg["workers"] = workers
    spec = spec_from_dict(cfg)
    results = run_sweep(spec)
    out.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(results, out / output)
    print(f"{len(results)} cells, {sum(r.holds for r in results)} satisfy the existence inequality")
    return EXIT_OK


def cmd_limits(cfg: dict, out: Path) -> int:
    from . import limits

    kind = cfg["kind"]
    output = out / cfg.get("output", f"limits_{kind}.json")
    if kind == "interval_map":
        m = limits.DiscreteMap(parse_expression(cfg["map"]), tuple(cfg["domain"]))
        res = limits.classify_interval_map(m, cfg["x0"], n_max=cfg.get("n_max", 10_000), tol=cfg.get("tol", 1e-8))
    elif kind == "finite":
        table = {str(k): str(v) for k, v in cfg["map"].items()}
        missing = set(table.values()) - set(table)
        if missing or str(cfg["start"]) not in table:
            raise ConfigError(f"finite map is not closed on its keys: {sorted(missing)}")
        res = limits.detect_cycle_finite(table.__getitem__, str(cfg["start"]), n_max=len(table) + 1)
    elif kind == "hybrid_1d":
        res = limits.hybrid_1d_run(
            parse_expression(cfg["field"]),
            cfg["x0"],
            {float(k): v for k, v in cfg["reset"].items()},
            tuple(cfg["R"]),
            impact_points=cfg["impact_points"],
            fixed_points=cfg.get("fixed_points"),
            opts=_hybrid_opts(cfg),
        )
    else:
        est = limits.omega_estimate(_model(cfg), cfg["x0"], cfg["t_transient"], cfg["t_window"], _hybrid_opts(cfg))
        out.mkdir(parents=True, exist_ok=True)
        est.crossings_to_csv(out / cfg.get("crossings", "crossings.csv"))
        _write_json(output, est.to_dict())
        print(f"omega estimate: {est.cycle.label}{' (dense crossings)' if est.dense else ''}")
        return EXIT_OK
    _write_json(output, res.to_dict())
    print(f"{res.label}: orbit {res.orbit}, transient {res.transient_length}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .acceptance import CRITERIA, run_acceptance

    if args.list:
        for n, (title, _) in sorted(CRITERIA.items()):
            print(f"{n:2d}. {title}")
        return EXIT_OK
    numbers = args.criteria or None
    if numbers:
        bad = [n for n in numbers if n not in CRITERIA]
        if bad:
            raise ConfigError(f"unknown criteria: {bad}")

    def report(res):
        print(res.line(), f"({res.seconds:.1f}s)", flush=True)
        if args.verbose:
            for line in res.checks:
                print("      " + line)

    results = run_acceptance(numbers, rel_tol=args.rel_tol, seed=args.seed if args.seed is not None else 0, report=report)
    n_pass = sum(r.passed for r in results)
    print(f"{n_pass}/{len(results)} criteria passed")
    if args.out:
        _write_json(Path(args.out) / "verify.json", [r.__dict__ for r in results])
    return EXIT_OK if n_pass == len(results) else EXIT_NUMERIC


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hybrid-cycles", description="Limit cycles of hybrid dynamical systems.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="JSON config file")
        sp.add_argument("--out", default=".", help="output directory (default: current)")
        sp.add_argument("--seed", type=int, default=None, help="random seed (reserved; used by verify)")

    for name, helptext in (
        ("simulate", "run the hybrid flow and write a trajectory CSV and summary JSON"),
        ("stability", "factorized return-map derivative at a periodic orbit"),
        ("limits", "interval-map, finite-set, 1-D hybrid and omega-limit classifiers"),
    ):
        common(sub.add_parser(name, help=helptext))
    sp = sub.add_parser("sweep", help="rimless-wheel (alpha, delta) grid")
    common(sp)
    sp.add_argument("--workers", type=int, default=None, help="worker processes (overrides the config)")
    sp = sub.add_parser("verify", help="run the acceptance suite")
    common(sp, config_required=False)
    sp.add_argument("--list", action="store_true", help="list the criteria without running them")
    sp.add_argument("--rel-tol", type=float, default=None, help="override every integrator rel_tol")
    sp.add_argument("--criteria", type=int, nargs="*", help="subset of criterion numbers")
    sp.add_argument("-v", "--verbose", action="store_true", help="print every sub-check")
    sp.add_argument("--workers", type=int, default=None, help=argparse.SUPPRESS)
    return p


def _setup_logging() -> None:
    level = os.environ.get("HYBRID_CYCLES_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    out = Path(args.out) if getattr(args, "out", None) else Path(".")
    try:
        if args.command == "verify":
            return cmd_verify(args)
        workers = getattr(args, "workers", None)
        if workers is not None and workers < 1:
            raise ConfigError("--workers must be positive")
        cfg = load_config(args.config, args.command)
        if args.command == "simulate":
            return cmd_simulate(cfg, out)
        if args.command == "stability":
            return cmd_stability(cfg, out)
        if args.command == "sweep":
            return cmd_sweep(cfg, out, args.workers)
        return cmd_limits(cfg, out)
    except NotAFixedPoint as exc:
        print(f"error: {exc} (residual {exc.residual:.3e})", file=sys.stderr)
        return exc.exit_code
    except HybridCyclesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
