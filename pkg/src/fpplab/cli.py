"""Command-line driver: ``fpplab <experiment> --config file.json [--jobs N] [--seed S] [--set k=v]``."""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import math
import os
import sys
from pathlib import Path

import jsonschema

from . import __version__
from .errors import ConfigError, DomainError, ModelError, ResourceError
from .experiments import EXPERIMENTS, ExperimentResult, run_experiment

EXIT_OK, EXIT_CHECKS, EXIT_CONFIG, EXIT_RESOURCE = 0, 1, 2, 3

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_POS_INT = {"type": "integer", "minimum": 1}
_NUM_LIST = {"type": "array", "items": _NUM, "minItems": 1}
_BAND = {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}

SN_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["explicit", "log_n", "power", "family"]},
        "value": _POS, "scale": _POS, "coef": _POS, "alpha": _NUM, "log_power": _NUM,
    },
    "required": ["kind"],
    "additionalProperties": False,
}

FAMILY_SCHEMA = {
    "type": "object",
    "properties": {
        "family": {"enum": ["ExpPower", "LogPower", "ExpExp", "InvPower", "Generic"]},
        "rho": _POS, "kappa": _POS, "alpha": _POS,
        "sn": SN_SCHEMA,
        "table": {
            "type": "object",
            "properties": {"z": _NUM_LIST, "g": _NUM_LIST},
            "required": ["z", "g"],
            "additionalProperties": False,
        },
    },
    "required": ["family"],
    "additionalProperties": False,
}


def _params(**props) -> dict:
    return {"type": "object", "properties": props, "additionalProperties": False}


PARAM_SCHEMAS = {
    "calibrate": _params(sn_values=_NUM_LIST),
    "conditions": _params(delta=_POS, R=_POS),
    "ip-law": _params(window=_POS_INT, ks_max=_POS),
    "freeze": _params(ks_max=_POS),
    "coupling": _params(ks_max=_POS),
    "collide": _params(),
    "weight-limit": _params(mode={"enum": ["bidirectional", "dijkstra"]}, ks_max=_POS, ks_at=_POS_INT),
    "hopcount-clt": _params(mode={"enum": ["bidirectional", "dijkstra"]}, mean_max=_POS, var_band=_BAND),
    "cox-points": _params(mode={"enum": ["pnstar", "crosscheck"]}, ks_max=_POS, mean_max=_POS,
                          var_band=_BAND, corr_max=_POS, iqr_max=_POS),
    "char-probe": _params(walks=_POS_INT, bp_replicas=_POS_INT, population_replicas=_POS_INT,
                          compare_lam_t=_NUM_LIST, limit_lam_t=_NUM_LIST, population_lam_t=_NUM_LIST,
                          K=_POS, two_lam_t=_POS, pairs=_POS_INT),
}


def config_schema(experiment: str) -> dict:
    """JSON schema for one experiment's configuration file."""
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "type": "object",
        "properties": {
            "experiment": {"const": experiment},
            "family": FAMILY_SCHEMA,
            "n": {"oneOf": [_POS, {"type": "array", "items": _POS, "minItems": 1}]},
            "replicas": _POS_INT,
            "seed": {"type": "integer", "minimum": 0},
            "budgets": _params(node_cap=_POS_INT, memory_mb=_POS_INT),
            "outdir": {"type": "string"},
            "params": PARAM_SCHEMAS[experiment],
        },
        "required": ["family", "n"],
        "additionalProperties": False,
    }


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_set(cfg: dict, item: str) -> None:
    """Apply one ``dotted.key=value`` override in place; values are parsed as JSON when possible."""
    if "=" not in item:
        raise ConfigError(f"--set expects key=value, got {item!r}")
    key, raw = item.split("=", 1)
    parts = key.strip().split(".")
    node = cfg
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"--set path {key!r} crosses a non-object value")
    node[parts[-1]] = _parse_value(raw)


def resolve_config(experiment: str, raw: dict, seed: int | None = None, sets=()) -> dict:
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}; choose from {', '.join(EXPERIMENTS)}")
    cfg = copy.deepcopy(raw)
    for item in sets:
        apply_set(cfg, item)
    if seed is not None:
        cfg["seed"] = seed
    try:
        jsonschema.validate(cfg, config_schema(experiment))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None
    cfg.setdefault("seed", 0)
    cfg.setdefault("replicas", 1)
    cfg.setdefault("params", {})
    cfg["experiment"] = experiment
    return cfg


def config_hash(cfg: dict) -> str:
    """Hash of everything that affects results (the output directory does not)."""
    body = {k: v for k, v in cfg.items() if k != "outdir"}
    text = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:12]


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if hasattr(v, "item") and not isinstance(v, (str, bytes)):
        v = v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


def _cell(v) -> str:
    if hasattr(v, "item"):
        v = v.item()
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def records_csv(result: ExperimentResult, chash: str) -> str:
    buf = io.StringIO()
    buf.write(f"# fpplab {__version__} config={chash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(result.columns)
    for r in result.records:
        w.writerow([_cell(r.get(c)) for c in result.columns])
    return buf.getvalue()


def plotdata_csv(result: ExperimentResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["series", "x", "y"])
    for r in result.plotdata:
        w.writerow([r["series"], _cell(r["x"]), _cell(r["y"])])
    return buf.getvalue()


def write_artifacts(cfg: dict, result: ExperimentResult, root: Path, figure: bool = True) -> Path:
    chash = config_hash(cfg)
    out = root / cfg["experiment"] / chash
    out.mkdir(parents=True, exist_ok=True)
    (out / "records.csv").write_text(records_csv(result, chash))
    summary = {
        "experiment": cfg["experiment"], "version": __version__, "config_hash": chash, "seed": cfg["seed"],
        "config": cfg, "summary": result.summary, "checks": [c.to_json() for c in result.checks],
        "passed": result.passed,
    }
    (out / "summary.json").write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    (out / "plotdata.csv").write_text(plotdata_csv(result))
    if figure and result.plotdata:
        from .plotting import render_figure
        render_figure(cfg["experiment"], result.plotdata, out / "figure.png", chash)
    return out


def failure_table(result: ExperimentResult) -> str:
    rows = [(c.name, "PASS" if c.passed else "FAIL", f"{c.value:.6g}", c.bound) for c in result.checks]
    widths = [max(len(r[i]) for r in rows + [("check", "status", "value", "bound")]) for i in range(4)]
    line = lambda r: "  ".join(s.ljust(w) for s, w in zip(r, widths))
    return "\n".join([line(("check", "status", "value", "bound"))] + [line(r) for r in rows])


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fpplab", description="Run a named first-passage experiment.")
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--config", required=True, type=Path, help="JSON configuration file")
    ap.add_argument("--jobs", type=int, default=1, help="worker processes for replica fan-out")
    ap.add_argument("--seed", type=int, default=None, help="override the master seed")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a config entry (dotted keys, JSON values)")
    ap.add_argument("--outdir", type=Path, default=None, help="output root (default $FPPLAB_OUTDIR or ./fpplab-out)")
    ap.add_argument("--no-figure", action="store_true", help="skip figure.png")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = json.loads(args.config.read_text())
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
        cfg = resolve_config(args.experiment, raw, args.seed, args.set)
    except (OSError, json.JSONDecodeError, ConfigError) as exc:
        print(f"fpplab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    root = args.outdir or Path(cfg.get("outdir") or os.environ.get("FPPLAB_OUTDIR", "fpplab-out"))
    try:
        result = run_experiment(args.experiment, cfg, max(1, args.jobs))
    except ResourceError as exc:
        print(f"fpplab: resource limit: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except MemoryError:
        print("fpplab: resource limit: out of memory", file=sys.stderr)
        return EXIT_RESOURCE
    except (ConfigError, DomainError, ModelError) as exc:
        print(f"fpplab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = write_artifacts(cfg, result, root, figure=not args.no_figure)
    print(out)
    if not result.passed:
        print(failure_table(result), file=sys.stderr)
        return EXIT_CHECKS
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
