"""Batch command-line front end.

Exit codes: 0 success, 2 configuration/usage error, 3 I/O failure,
4 numerical degeneracy.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import re
import sys
from pathlib import Path

import jsonschema

from . import __version__
from .errors import ConfigurationError, DegenerateDataError, InvalidInputError
from .io import read_dataset, read_params, write_csv, write_dataset, write_json
from .lab import (
    CONVERGENCE_HEADER,
    SUP_RATIO_HEADER,
    ExperimentConfig,
    continuity_diagnostic,
    run_consistency_experiment,
    run_sup_ratio,
    wald_decay_diagnostic,
    weak_lln_diagnostic,
)
from .mle import mle_fit
from .model import GeneratorSpec, random_params, sample, sample_iid
from .quotient import (
    IdentifiedSet,
    QuotientPoint,
    distance_to_C,
    lift_discontinuity_sequence,
    param_distance,
    quotient_distance,
    ray_chain_table,
)
from .rng import child_seed

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_DEGENERATE = 0, 2, 3, 4

KINDS = ("consistency", "sup-ratio", "wald-diagnostics", "counterexamples")

_GENERATOR = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["iid", "m_dependent"]},
        "m": {"type": "integer", "minimum": 0},
    },
    "required": ["kind"],
    "additionalProperties": False,
}
_THETA0 = {
    "oneOf": [
        {
            "type": "object",
            "properties": {
                "w": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
                "sigma2": {"type": "number", "exclusiveMinimum": 0},
            },
            "required": ["w", "sigma2"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "random": {
                    "type": "object",
                    "properties": {
                        "seed": {"type": "integer", "minimum": 0},
                        "scale": {"type": "number", "exclusiveMinimum": 0},
                        "sigma2": {"type": "number", "exclusiveMinimum": 0},
                    },
                    "required": ["seed"],
                    "additionalProperties": False,
                }
            },
            "required": ["random"],
            "additionalProperties": False,
        },
    ]
}
_DIMS = {
    "p": {"type": "integer", "minimum": 2},
    "q": {"type": "integer", "minimum": 1},
    "seed": {"type": "integer", "minimum": 0},
}

SIMULATE_SCHEMA = {
    "type": "object",
    "properties": {**_DIMS, "n": {"type": "integer", "minimum": 1}, "theta0": _THETA0, "generator": _GENERATOR},
    "required": ["p", "q", "n", "seed"],
    "additionalProperties": False,
}

_POS_NUMBERS = {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1}
_POS_INTS = {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1}

EXPERIMENT_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": list(KINDS)},
        **_DIMS,
        "theta0": _THETA0,
        "n_grid": _POS_INTS,
        "reps": {"type": "integer", "minimum": 1},
        "generator": _GENERATOR,
        "eta": {"type": "number", "exclusiveMinimum": 0},
        "threads": {"type": "integer", "minimum": 1},
        "sup_starts": {"type": "integer", "minimum": 0},
        "record_runtime": {"type": "boolean"},
        "scale_grid": _POS_NUMBERS,
        "wald_mode": {"enum": ["variance", "joint"]},
        "i_max": {"type": "integer", "minimum": 2},
        "lln_grid": _POS_INTS,
        "k_grid": _POS_INTS,
        "n_max": {"type": "integer", "minimum": 2},
        "ray_x": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 2, "maxItems": 2},
        "ray_y": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 2, "maxItems": 2},
    },
    "required": ["kind"],
    "additionalProperties": False,
    "if": {"properties": {"kind": {"not": {"const": "counterexamples"}}}},
    "then": {"required": ["p", "q", "seed"]},
}

EXPERIMENT_DEFAULTS = {
    "n_grid": [100, 1000, 10_000, 100_000],
    "reps": 50,
    "generator": {"kind": "iid"},
    "eta": 0.5,
    "threads": 1,
    "sup_starts": 8,
    "record_runtime": False,
    "scale_grid": [10.0**k for k in range(7)],
    "wald_mode": "variance",
    "i_max": 10_000,
    "k_grid": [1, 10, 100, 1000, 1415, 10_000],
    "n_max": 200,
    "ray_x": [1.0, 0.0],
    "ray_y": [0.0, 1.0],
}


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _line_of(text: str, path) -> int:
    """Best-effort 1-based line of the JSON key named last in ``path``."""
    keys = [k for k in path if isinstance(k, str)]
    if keys:
        m = re.search(r'"%s"\s*:' % re.escape(keys[-1]), text)
        if m:
            return text.count("\n", 0, m.start()) + 1
    return 1


def load_config(path, schema) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise CliError(f"{path}: cannot read config: {exc}", EXIT_IO) from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}", EXIT_CONFIG) from exc
    if schema is EXPERIMENT_SCHEMA and isinstance(cfg, dict) and cfg.get("kind") not in KINDS:
        line = _line_of(text, ["kind"])
        raise CliError(f"{path}:{line}: unknown experiment kind {cfg.get('kind')!r}; expected one of {KINDS}", EXIT_CONFIG)
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        line = _line_of(text, list(err.absolute_path) or _missing_key(err))
        raise CliError(f"{path}:{line}: {where}: {err.message}", EXIT_CONFIG)
    return cfg


def _missing_key(err):
    m = re.match(r"'([^']+)' is a required property", err.message)
    return [m.group(1)] if m else []


def _theta0(cfg: dict) -> dict:
    return cfg.get("theta0") or {"random": {"seed": cfg["seed"], "scale": 1.0, "sigma2": 1.0}}


def _manifest(command, config, artifacts, started, seed) -> dict:
    return {
        "command": command,
        "config": config,
        "artifacts": [str(a) for a in artifacts],
        "wall_clock": {
            "started": started.isoformat(timespec="seconds"),
            "elapsed_s": (_dt.datetime.now(_dt.timezone.utc) - started).total_seconds(),
        },
        "version": __version__,
        "seed": seed,
    }


def _now():
    return _dt.datetime.now(_dt.timezone.utc)


def _prepare_out(out_dir) -> Path:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"{out}: cannot create output directory: {exc}", EXIT_IO) from exc
    return out


# --- commands --------------------------------------------------------------


def cmd_simulate(config_path, out_dir, seed=None, dry_run=False) -> dict:
    started = _now()
    cfg = load_config(config_path, SIMULATE_SCHEMA)
    if seed is not None:
        cfg["seed"] = seed
    cfg.setdefault("generator", {"kind": "iid"})
    cfg["theta0"] = _theta0(cfg)
    try:
        gen = GeneratorSpec.from_dict(cfg["generator"])
        theta0 = ExperimentConfig(cfg["p"], cfg["q"], cfg["theta0"], master_seed=cfg["seed"]).theta0()
    except (ConfigurationError, InvalidInputError) as exc:
        raise CliError(f"{config_path}: {exc}", EXIT_CONFIG) from exc
    if dry_run:
        return _manifest("simulate", cfg, [], started, cfg["seed"])
    out = _prepare_out(out_dir)
    ds = sample(theta0, cfg["n"], gen, cfg["seed"])
    data_path, meta_path = write_dataset(ds, out / "dataset.csv")
    manifest = _manifest("simulate", cfg, [data_path, meta_path], started, cfg["seed"])
    write_json(out / "manifest.json", manifest)
    return manifest


def cmd_fit(data_path, q, out_path) -> dict:
    started = _now()
    try:
        ds = read_dataset(data_path)
    except OSError as exc:
        raise CliError(f"{data_path}: cannot read data: {exc}", EXIT_IO) from exc
    except InvalidInputError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from exc
    if not (1 <= q < ds.p):
        raise CliError(f"q must satisfy 1 <= q < p = {ds.p}, got {q}", EXIT_CONFIG)
    try:
        fit = mle_fit(ds, q)
    except DegenerateDataError as exc:
        raise CliError(f"degenerate fit: {exc}", EXIT_DEGENERATE) from exc
    out_path = Path(out_path)
    if out_path.parent and not out_path.parent.exists():
        _prepare_out(out_path.parent)
    write_json(out_path, fit.to_dict())
    print(f"n={fit.n} p={ds.p} q={q}")
    print(f"loglik={fit.loglik!r}")
    print(f"sigma2_hat={fit.theta_hat.sigma2!r}")
    print(f"clamp_count={len(fit.clamped)}")
    manifest_path = out_path.with_name(out_path.stem + ".manifest.json")
    config = {"data": str(data_path), "q": q}
    manifest = _manifest("fit", config, [out_path, manifest_path], started, ds.seed)
    write_json(manifest_path, manifest)
    return manifest


def _experiment_config(cfg: dict) -> ExperimentConfig:
    return ExperimentConfig(
        p=cfg["p"],
        q=cfg["q"],
        theta0_spec=cfg["theta0"],
        n_grid=tuple(cfg["n_grid"]),
        reps=cfg["reps"],
        generator=GeneratorSpec.from_dict(cfg["generator"]),
        eta=cfg["eta"],
        master_seed=cfg["seed"],
        threads=cfg["threads"],
        sup_starts=cfg["sup_starts"],
        record_runtime=cfg["record_runtime"],
    )


def _run_consistency(ecfg, out) -> list[Path]:
    report = run_consistency_experiment(ecfg)
    rows = []
    for r in report.rows:
        rt = r.runtime_ms if ecfg.record_runtime else None
        rows.append([r.n, r.rep, r.d_quotient, r.cov_frob_err, r.sigma2_hat, r.clamp_count, rt])
    long_rows = [
        [r.n, r.rep, metric, getattr(r, metric)]
        for r in report.rows
        for metric in ("d_quotient", "cov_frob_err", "sigma2_hat")
    ]
    summary = report.summary()
    return [
        write_csv(out / "consistency.csv", CONVERGENCE_HEADER, rows),
        write_csv(out / "consistency_long.csv", ("n", "rep", "metric", "value"), long_rows),
        write_json(out / "consistency_summary.json", summary),
        write_csv(out / "timings.csv", ("n", "rep", "runtime_ms"), [[r.n, r.rep, r.runtime_ms] for r in report.rows]),
    ]


def _run_sup_ratio(ecfg, out) -> list[Path]:
    report = run_sup_ratio(ecfg)
    rows = [[r.n, r.sup_log_ratio, r.h_hat, r.probe_count, r.mean_log_ratio] for r in report.rows]
    summary = {
        "eta": ecfg.eta,
        "n_grid": [r.n for r in report.rows],
        "sup_log_ratio": [r.sup_log_ratio for r in report.rows],
        "h_hat": [r.h_hat for r in report.rows],
        "heuristic_lower_bound": True,
    }
    return [write_csv(out / "sup_ratio.csv", SUP_RATIO_HEADER, rows), write_json(out / "sup_ratio_summary.json", summary)]


def _run_wald(ecfg, cfg, out) -> list[Path]:
    theta0 = ecfg.theta0()
    x = sample_iid(theta0, 1, child_seed(ecfg.master_seed, "wald-x")).rows[0]
    decay = wald_decay_diagnostic(theta0, cfg["scale_grid"], x, cfg["wald_mode"])
    cont = continuity_diagnostic(theta0, cfg["i_max"], x, seed=child_seed(ecfg.master_seed, "continuity"))
    paths = [
        write_csv(out / "wald_decay.csv", list(decay[0]), decay),
        write_csv(out / "continuity.csv", list(cont[0]), cont),
    ]
    if ecfg.generator.kind == "m_dependent":
        alt = random_params(ecfg.p, ecfg.q, child_seed(ecfg.master_seed, "lln-theta"), 1.0, theta0.sigma2 * 1.5)
        lln = weak_lln_diagnostic(ecfg, alt, cfg.get("lln_grid") or list(ecfg.n_grid))
        paths.append(write_csv(out / "weak_lln.csv", list(lln[0]), lln))
    return paths


def _run_counterexamples(cfg, out) -> list[Path]:
    ray = ray_chain_table(cfg["ray_x"], cfg["ray_y"], cfg["k_grid"])
    lift = lift_discontinuity_sequence(cfg["n_max"])
    return [
        write_csv(out / "ray_chain.csv", ("k", "distance", "value"), ray),
        write_csv(out / "lift_discontinuity.csv", ("n", "distance", "same_index_chain", "value"), lift),
    ]


def cmd_experiment(config_path, out_dir, seed=None, threads=None, dry_run=False) -> dict:
    started = _now()
    cfg = load_config(config_path, EXPERIMENT_SCHEMA)
    if seed is not None:
        cfg["seed"] = seed
    if threads is not None:
        cfg["threads"] = threads
    for key, value in EXPERIMENT_DEFAULTS.items():
        cfg.setdefault(key, value)
    kind = cfg["kind"]
    ecfg = None
    if kind != "counterexamples":
        cfg["theta0"] = _theta0(cfg)
        try:
            ecfg = _experiment_config(cfg)
        except (ConfigurationError, InvalidInputError) as exc:
            raise CliError(f"{config_path}: {exc}", EXIT_CONFIG) from exc
    if dry_run:
        return _manifest("experiment", cfg, [], started, cfg.get("seed"))
    out = _prepare_out(out_dir)
    try:
        if kind == "consistency":
            paths = _run_consistency(ecfg, out)
        elif kind == "sup-ratio":
            paths = _run_sup_ratio(ecfg, out)
        elif kind == "wald-diagnostics":
            paths = _run_wald(ecfg, cfg, out)
        else:
            paths = _run_counterexamples(cfg, out)
    except ConfigurationError as exc:
        raise CliError(f"{config_path}: {exc}", EXIT_CONFIG) from exc
    manifest_path = out / "manifest.json"
    manifest = _manifest("experiment", cfg, paths + [manifest_path], started, cfg.get("seed"))
    write_json(manifest_path, manifest)
    return manifest


def cmd_distance(theta_a_path, theta_b_path, theta0_path) -> dict:
    try:
        a, b, t0 = (read_params(p) for p in (theta_a_path, theta_b_path, theta0_path))
    except OSError as exc:
        raise CliError(f"cannot read parameter file: {exc}", EXIT_IO) from exc
    except (InvalidInputError, ValueError, KeyError) as exc:
        raise CliError(f"bad parameter file: {exc}", EXIT_CONFIG) from exc
    if not (a.w.shape == b.w.shape == t0.w.shape):
        raise CliError(f"shape mismatch: {a.w.shape}, {b.w.shape}, {t0.w.shape}", EXIT_CONFIG)
    ident = IdentifiedSet(t0)
    report = {
        "param_distance": param_distance(a, b),
        "distance_to_C_a": distance_to_C(a, ident),
        "distance_to_C_b": distance_to_C(b, ident),
        "quotient_distance": quotient_distance(QuotientPoint(a, ident), QuotientPoint(b, ident)),
    }
    for k, v in report.items():
        print(f"{k}={v!r}")
    return report


# --- entry point -----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ppcaq", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="draw a dataset from a PPCA model")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--dry-run", action="store_true")

    f = sub.add_parser("fit", help="closed-form maximum-likelihood fit")
    f.add_argument("--data", required=True)
    f.add_argument("--q", type=int, required=True)
    f.add_argument("--out", required=True)

    e = sub.add_parser("experiment", help="run a consistency-lab experiment")
    e.add_argument("--config", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--seed", type=int)
    e.add_argument("--threads", type=int)
    e.add_argument("--dry-run", action="store_true")

    d = sub.add_parser("distance", help="quotient distances between parameter files")
    d.add_argument("--a", required=True)
    d.add_argument("--b", required=True)
    d.add_argument("--theta0", required=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        if args.command == "simulate":
            cmd_simulate(args.config, args.out, args.seed, args.dry_run)
        elif args.command == "fit":
            cmd_fit(args.data, args.q, args.out)
        elif args.command == "experiment":
            if args.threads is not None and args.threads < 1:
                raise CliError("--threads must be >= 1", EXIT_CONFIG)
            cmd_experiment(args.config, args.out, args.seed, args.threads, args.dry_run)
        else:
            cmd_distance(args.a, args.b, args.theta0)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except DegenerateDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
