"""Command-line surface: dynlab <command> --config cfg.json [--set k=v ...].

Commands: simulate, verify, reduce, lyapunov, scan, equilibrium.  A run is
described by one JSON document; --set overrides single keys via dotted paths
(--set params.C=-2.5).  Outputs are CSV/JSON files written atomically
(write to <name>.partial, then rename), so a plain file name never holds a
half-written result.  Identical config + seed reproduces outputs byte for
byte.

Exit codes: 0 success; 1 verify found a failed identity; 2 invalid config;
3 unwritable output; 4 integration blow-up (partial trajectory kept with a
.partial suffix); 5 initial state not on a limit set (reduce).
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys

import numpy as np

from .analysis import (
    ScanSettings,
    equilibrium_stability,
    lyapunov_spectrum,
    parameter_scan,
)
from .errors import (
    BlowUpError,
    ConfigError,
    DegenerateParametersError,
    DynlabError,
    IntegrationError,
    NotOnLimitSetError,
    RatioInconsistencyError,
)
from .integrator import IntegratorConfig, integrate
from .invariants import verification_suite
from .model import Params, equilibrium, full_system, lift, reduced_system
from .reduction import compare_full_vs_reduced, k_drift

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2
EXIT_OUTPUT = 3
EXIT_BLOWUP = 4
EXIT_NOT_ON_LIMIT_SET = 5

_DEFAULTS = {
    "params": None,  # required
    "initial_state": {"random": {"box": [-5.0, 5.0]}},
    "integrator": {
        "method": "adaptive-DP54",
        "abs_tol": 1e-10,
        "rel_tol": 1e-10,
        "h_init": 1e-3,
        "h_min": 1e-12,
        "h_max": 0.1,
        "max_steps": 100000000,
    },
    "times": {"t_transient": 200.0, "t_total": 2200.0, "out_stride": 0.1},
    "lyapunov": {"renorm_interval": 1.0},
    "verify": {"samples": 20000, "tolerance": None, "horizon": 20.0},
    "reduce": {"zero_tol": None},
    "scan": {"extrema_cap": 64, "eps_zero": 1e-3},
    "seed": 0,
    "output": {"directory": ".", "format": "csv"},
}

_STATE_VARIANTS = ("full", "reduced", "equilibrium_offset", "random")


# --- config handling -------------------------------------------------------


def _require_keys(section: dict, allowed, where: str):
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {where}")


def _as_number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where} must be a number, got {value!r}")
    return float(value)


def _as_vector(value, n: int, where: str) -> list[float]:
    if not isinstance(value, list) or len(value) != n:
        raise ConfigError(f"{where} must be a list of {n} numbers")
    return [_as_number(v, where) for v in value]


def normalize_config(raw: dict) -> dict:
    """Validate a raw config dict and fill defaults; rejects unknown keys.

    The returned dict is complete and JSON-stable: writing it back out and
    re-parsing reproduces the same run.  A top-level "stats" key (written by
    sidecar echoes) is accepted and ignored.
    """
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    _require_keys(raw, list(_DEFAULTS) + ["stats"], "config")
    cfg = {}

    if "params" not in raw or not isinstance(raw["params"], dict):
        raise ConfigError("config requires a 'params' object")
    _require_keys(raw["params"], ("C", "D", "E", "F"), "params")
    cfg["params"] = {
        k: _as_number(raw["params"].get(k, 0.0), f"params.{k}") for k in ("C", "D", "E", "F")
    }
    for k in ("C", "D", "E", "F"):
        if k not in raw["params"]:
            raise ConfigError(f"params.{k} is required")

    state = copy.deepcopy(raw.get("initial_state", _DEFAULTS["initial_state"]))
    if not isinstance(state, dict):
        raise ConfigError("initial_state must be an object")
    variants = [k for k in state if k in _STATE_VARIANTS]
    if len(variants) != 1:
        raise ConfigError(
            f"initial_state needs exactly one of {_STATE_VARIANTS}, got {sorted(state)}"
        )
    variant = variants[0]
    if variant == "full":
        _require_keys(state, ("full",), "initial_state")
        state["full"] = _as_vector(state["full"], 5, "initial_state.full")
    elif variant == "equilibrium_offset":
        _require_keys(state, ("equilibrium_offset",), "initial_state")
        state["equilibrium_offset"] = _as_vector(
            state["equilibrium_offset"], 5, "initial_state.equilibrium_offset"
        )
    elif variant == "reduced":
        _require_keys(state, ("reduced", "K"), "initial_state")
        state["reduced"] = _as_vector(state["reduced"], 3, "initial_state.reduced")
        state["K"] = _as_number(state.get("K", 0.0), "initial_state.K")
    else:  # random
        _require_keys(state, ("random",), "initial_state")
        box = state["random"]
        if not isinstance(box, dict):
            raise ConfigError("initial_state.random must be an object")
        _require_keys(box, ("box",), "initial_state.random")
        b = box.get("box", [-5.0, 5.0])
        if isinstance(b, list) and len(b) == 2 and all(isinstance(v, (int, float)) for v in b):
            box["box"] = [_as_number(v, "random.box") for v in b]
        else:
            if not isinstance(b, list) or len(b) != 5:
                raise ConfigError("random.box must be [lo, hi] or five [lo, hi] pairs")
            box["box"] = [_as_vector(pair, 2, "random.box[i]") for pair in b]
        state["random"] = box
    cfg["initial_state"] = state

    for section, caster in (
        ("integrator", {"method": str, "abs_tol": float, "rel_tol": float, "h_init": float,
                        "h_min": float, "h_max": float, "max_steps": int}),
        ("times", {"t_transient": float, "t_total": float, "out_stride": float}),
        ("lyapunov", {"renorm_interval": float}),
        ("verify", {"samples": int, "tolerance": (float, type(None)), "horizon": float}),
        ("reduce", {"zero_tol": (float, type(None))}),
        ("scan", {"extrema_cap": int, "eps_zero": float}),
    ):
        given = raw.get(section, {})
        if not isinstance(given, dict):
            raise ConfigError(f"{section} must be an object")
        _require_keys(given, caster, section)
        merged = dict(_DEFAULTS[section])
        for k, v in given.items():
            kind = caster[k]
            if kind is str:
                if not isinstance(v, str):
                    raise ConfigError(f"{section}.{k} must be a string")
                merged[k] = v
            elif kind is int:
                if isinstance(v, bool) or not isinstance(v, int):
                    raise ConfigError(f"{section}.{k} must be an integer")
                merged[k] = v
            elif kind is float:
                merged[k] = _as_number(v, f"{section}.{k}")
            else:  # optional float
                merged[k] = None if v is None else _as_number(v, f"{section}.{k}")
        cfg[section] = merged

    seed = raw.get("seed", _DEFAULTS["seed"])
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0 or seed >= 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    cfg["seed"] = seed

    out = raw.get("output", {})
    if not isinstance(out, dict):
        raise ConfigError("output must be an object")
    _require_keys(out, ("directory", "format"), "output")
    merged_out = dict(_DEFAULTS["output"])
    merged_out.update(out)
    if not isinstance(merged_out["directory"], str):
        raise ConfigError("output.directory must be a string")
    if merged_out["format"] not in ("csv", "json"):
        raise ConfigError("output.format must be 'csv' or 'json'")
    cfg["output"] = merged_out
    return cfg


def apply_overrides(raw: dict, sets: list[str]) -> dict:
    """Apply --set dotted.path=value overrides (values parsed as JSON)."""
    raw = copy.deepcopy(raw)
    for item in sets:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        path, _, text = item.partition("=")
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        node = raw
        keys = path.split(".")
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"--set path {path!r} crosses a non-object")
        node[keys[-1]] = value
    return raw


def _params(cfg: dict) -> Params:
    q = cfg["params"]
    return Params(C=q["C"], D=q["D"], E=q["E"], F=q["F"])


def _integrator_config(cfg: dict) -> IntegratorConfig:
    try:
        return IntegratorConfig(**cfg["integrator"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _rng(cfg: dict) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(cfg["seed"]))


def resolve_initial_state(cfg: dict):
    """Return (y0 array, kind) with kind 'full' or ('reduced', K)."""
    state = cfg["initial_state"]
    if "full" in state:
        return np.array(state["full"], dtype=float), "full"
    if "reduced" in state:
        return np.array(state["reduced"], dtype=float), ("reduced", state["K"])
    if "equilibrium_offset" in state:
        p = _params(cfg)
        if p.E == 0.0:
            raise ConfigError("equilibrium-relative initial state requires E != 0")
        return equilibrium(p) + np.array(state["equilibrium_offset"], dtype=float), "full"
    box = state["random"]["box"]
    rng = _rng(cfg)
    if isinstance(box[0], list):
        lo = np.array([b[0] for b in box])
        hi = np.array([b[1] for b in box])
    else:
        lo, hi = box[0], box[1]
    return rng.uniform(lo, hi, 5), "full"


# --- output helpers --------------------------------------------------------


def _fmt(x: float) -> str:
    """Shortest decimal that round-trips the binary64 value."""
    return repr(float(x))


def _write_text(path: str, text: str):
    tmp = path + ".partial"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_json(path: str, obj):
    _write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _csv_text(header: list[str], rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) if isinstance(v, float) else str(v) for v in row))
    return "\n".join(lines) + "\n"


def _out_dir(cfg: dict, override: str | None) -> str:
    directory = override if override is not None else cfg["output"]["directory"]
    os.makedirs(directory, exist_ok=True)
    probe = os.path.join(directory, ".dynlab_write_probe")
    with open(probe, "w") as fh:
        fh.write("")
    os.remove(probe)
    return directory


def _stats(traj) -> dict:
    return {
        "steps_taken": traj.steps_taken,
        "steps_rejected": traj.steps_rejected,
        "samples": int(traj.times.size),
        "dimension": traj.dimension,
    }


def _trajectory_rows(traj):
    for t, row in zip(traj.times, traj.states):
        yield [float(t)] + [float(v) for v in row]


def _write_trajectory(directory: str, cfg: dict, traj, partial: bool = False) -> str:
    d = traj.dimension
    header = ["t"] + [f"y{i + 1}" for i in range(d)]
    if cfg["output"]["format"] == "csv":
        name = "trajectory.csv"
        text = _csv_text(header, _trajectory_rows(traj))
    else:
        name = "trajectory.json"
        text = json.dumps(
            {
                "columns": header,
                "rows": [[float(t)] + [float(v) for v in row] for t, row in zip(traj.times, traj.states)],
            },
            indent=2,
            sort_keys=True,
        ) + "\n"
    path = os.path.join(directory, name)
    if partial:
        with open(path + ".partial", "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        return path + ".partial"
    _write_text(path, text)
    return path


# --- commands ---------------------------------------------------------------


def cmd_simulate(cfg: dict, out_override: str | None) -> int:
    p = _params(cfg)
    icfg = _integrator_config(cfg)
    y0, kind = resolve_initial_state(cfg)
    system = full_system(p) if kind == "full" else reduced_system(p, kind[1])
    directory = _out_dir(cfg, out_override)
    t_total = cfg["times"]["t_total"]
    stride = cfg["times"]["out_stride"]
    try:
        traj = integrate(system.field, y0, 0.0, t_total, stride, icfg)
    except IntegrationError as exc:
        partial = getattr(exc, "partial_traj", None)
        diag = {"error": type(exc).__name__, "message": str(exc), "t": exc.t}
        if partial is not None:
            path = _write_trajectory(directory, cfg, partial, partial=True)
            diag["partial_file"] = os.path.basename(path)
        _write_json(os.path.join(directory, "run.json"), {**cfg, "stats": diag})
        print(f"dynlab simulate: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    _write_trajectory(directory, cfg, traj)
    _write_json(os.path.join(directory, "run.json"), {**cfg, "stats": _stats(traj)})
    return EXIT_OK


def cmd_verify(cfg: dict, out_override: str | None) -> int:
    p = _params(cfg)
    icfg = _integrator_config(cfg)
    v = cfg["verify"]
    directory = _out_dir(cfg, out_override)
    reports = verification_suite(
        p,
        seed=cfg["seed"],
        samples=v["samples"],
        horizon=v["horizon"],
        cfg=icfg,
        tolerance=v["tolerance"],
    )
    payload = {
        name: {"max_residual": rep.max_rel_residual, "pass": rep.passed}
        for name, rep in reports.items()
    }
    _write_json(os.path.join(directory, "verify_report.json"), payload)
    return EXIT_OK if all(rep.passed for rep in reports.values()) else EXIT_VERIFY_FAILED


def cmd_reduce(cfg: dict, out_override: str | None) -> int:
    p = _params(cfg)
    icfg = _integrator_config(cfg)
    y0, kind = resolve_initial_state(cfg)
    if kind != "full":
        y0 = lift(y0, kind[1])
    directory = _out_dir(cfg, out_override)
    t_total = cfg["times"]["t_total"]
    stride = cfg["times"]["out_stride"]
    zero_tol = cfg["reduce"]["zero_tol"]
    try:
        comparison = compare_full_vs_reduced(y0, p, t_total, stride, icfg, zero_tol=zero_tol)
        full_traj = integrate(full_system(p).field, y0, 0.0, t_total, stride, icfg)
    except (NotOnLimitSetError, RatioInconsistencyError) as exc:
        print(f"dynlab reduce: {exc}", file=sys.stderr)
        return EXIT_NOT_ON_LIMIT_SET
    except IntegrationError as exc:
        print(f"dynlab reduce: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    drift = k_drift(full_traj, zero_tol=zero_tol)
    drift_rows = zip(drift.times.tolist(), drift.estimates.tolist())
    _write_text(
        os.path.join(directory, "k_drift.csv"), _csv_text(["t", "K"], drift_rows)
    )
    _write_json(
        os.path.join(directory, "reduce_report.json"),
        {
            "K": {"kind": comparison.K.kind, "value": comparison.K.value},
            "max_state_deviation": comparison.max_state_deviation,
            "horizon": comparison.horizon,
            "tol_used": comparison.tol_used,
            "drift_file": "k_drift.csv",
        },
    )
    return EXIT_OK


def cmd_lyapunov(cfg: dict, out_override: str | None) -> int:
    p = _params(cfg)
    icfg = _integrator_config(cfg)
    y0, kind = resolve_initial_state(cfg)
    system = full_system(p) if kind == "full" else reduced_system(p, kind[1])
    directory = _out_dir(cfg, out_override)
    report = lyapunov_spectrum(
        system,
        y0,
        cfg["times"]["t_transient"],
        cfg["times"]["t_total"],
        cfg["lyapunov"]["renorm_interval"],
        icfg,
    )
    d = system.dim
    header = ["t"] + [f"lambda{i + 1}" for i in range(d)]
    rows = (
        [float(t)] + [float(v) for v in row]
        for t, row in zip(report.trace_times, report.convergence_trace)
    )
    _write_text(os.path.join(directory, "lyapunov_trace.csv"), _csv_text(header, rows))
    _write_json(
        os.path.join(directory, "lyapunov_report.json"),
        {
            "exponents": [float(v) for v in report.exponents],
            "t_total": report.t_total,
            "renorm_interval": report.renorm_interval,
            "diverged": report.diverged,
            "trace_file": "lyapunov_trace.csv",
        },
    )
    return EXIT_OK


_GNUPLOT_TEMPLATE = """\
# Bifurcation diagram: local maxima of y1 against the swept parameter.
set datafile separator comma
set xlabel "{param}"
set ylabel "y1 local maxima"
set key off
plot "scan_extrema.csv" every ::1 using 1:2 with dots lc rgb "black"
"""


def cmd_scan(cfg: dict, out_override: str | None, args) -> int:
    p = _params(cfg)
    icfg = _integrator_config(cfg)
    directory = _out_dir(cfg, out_override)
    param = args.param
    if param == "K":
        y0, kind = resolve_initial_state(cfg)
        if kind == "full":
            raise ConfigError("a K-scan needs a reduced initial_state")
        seed_state = tuple(y0.tolist())
        dim = 3
    else:
        y0, kind = resolve_initial_state(cfg)
        if kind != "full":
            y0 = lift(y0, kind[1])
        seed_state = tuple(y0.tolist())
        dim = 5
    if args.steps < 0:
        raise ConfigError("--steps must be >= 0")
    values = np.linspace(args.min, args.max, args.steps) if args.steps else []
    settings = ScanSettings(
        y0=seed_state,
        t_transient=cfg["times"]["t_transient"],
        t_total=cfg["times"]["t_total"],
        renorm_interval=cfg["lyapunov"]["renorm_interval"],
        out_stride=cfg["times"]["out_stride"],
        integrator=icfg,
        extrema_cap=cfg["scan"]["extrema_cap"],
        eps_zero=cfg["scan"]["eps_zero"],
        workers=args.workers,
    )
    records = parameter_scan(p, param, values, args.policy, settings)

    header = ["param", "classification"] + [f"lambda{i + 1}" for i in range(dim)]
    rec_rows = []
    ext_rows = []
    for rec in records:
        lams = list(rec.exponents) + [math.nan] * (dim - len(rec.exponents))
        rec_rows.append([rec.param_value, rec.classification] + [float(v) for v in lams])
        for ex in rec.extrema_sample:
            ext_rows.append([rec.param_value, float(ex)])
    _write_text(os.path.join(directory, "scan_records.csv"), _csv_text(header, rec_rows))
    _write_text(
        os.path.join(directory, "scan_extrema.csv"), _csv_text(["param", "extremum"], ext_rows)
    )
    if args.gnuplot:
        _write_text(
            os.path.join(directory, "scan.gp"), _GNUPLOT_TEMPLATE.format(param=param)
        )
    return EXIT_OK


def cmd_equilibrium(cfg: dict, out_override: str | None) -> int:
    p = _params(cfg)
    if p.E == 0.0:
        raise ConfigError("equilibrium requires E != 0")
    directory = _out_dir(cfg, out_override)
    y_eq = equilibrium(p)
    eig = equilibrium_stability(p)
    payload = {
        "equilibrium": [float(v) for v in y_eq],
        "eigenvalues": [{"re": float(w.real), "im": float(w.imag)} for w in eig],
    }
    _write_json(os.path.join(directory, "equilibrium_report.json"), payload)
    print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK


# --- entry point -------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dynlab",
        description="Simulate and verify the averaged pendulum-motor system.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "verify", "reduce", "lyapunov", "scan", "equilibrium"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="path to the JSON run config")
        sp.add_argument(
            "--set",
            action="append",
            default=[],
            dest="sets",
            metavar="KEY=VALUE",
            help="override a config key via dotted path, e.g. params.C=-2.5",
        )
        sp.add_argument("--out", default=None, help="output directory override")
        if name == "scan":
            sp.add_argument("--param", required=True, choices=list("CDEF") + ["K"])
            sp.add_argument("--min", type=float, required=True)
            sp.add_argument("--max", type=float, required=True)
            sp.add_argument("--steps", type=int, required=True)
            sp.add_argument("--policy", choices=("fixed", "follow"), default="fixed")
            sp.add_argument("--workers", type=int, default=None)
            sp.add_argument("--gnuplot", action="store_true")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"dynlab: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        raw = apply_overrides(raw, args.sets)
        cfg = normalize_config(raw)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.out)
        if args.command == "verify":
            return cmd_verify(cfg, args.out)
        if args.command == "reduce":
            return cmd_reduce(cfg, args.out)
        if args.command == "lyapunov":
            return cmd_lyapunov(cfg, args.out)
        if args.command == "scan":
            return cmd_scan(cfg, args.out, args)
        return cmd_equilibrium(cfg, args.out)
    except (ConfigError, DegenerateParametersError, ValueError) as exc:
        print(f"dynlab: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"dynlab: cannot write output: {exc}", file=sys.stderr)
        return EXIT_OUTPUT
    except NotOnLimitSetError as exc:
        print(f"dynlab: {exc}", file=sys.stderr)
        return EXIT_NOT_ON_LIMIT_SET
    except BlowUpError as exc:
        print(f"dynlab: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except DynlabError as exc:
        print(f"dynlab: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
