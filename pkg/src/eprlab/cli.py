"""Command-line entry point: ``eprlab <subcommand> [options]``.

Configuration precedence is CLI flag > ``--config`` file > built-in default.
A config file is a JSON object of option values, or a run manifest written
by a previous invocation (its ``config`` section is used), which makes
``eprlab <cmd> --config run.manifest.json`` an exact re-run.

Machine-readable output goes to files (or stdout with ``--out -``); human
messages go to stderr. Exit codes: 0 ok, 2 usage, 3 invalid config or
input values, 4 I/O or log-file failure.
"""

from __future__ import annotations

import argparse
import json
import os
import secrets
import sys
from pathlib import Path
from typing import Any, Callable, Sequence

from . import __version__
from .acquisition import (
    CoincidencePolicy,
    ExperimentConfig,
    SettingPair,
    apply_coincidence_filter,
    chsh_schedule,
    dump_json,
    read_log,
    run_experiment,
    write_log,
)
from .cv import CVNoise, cv_variance_product
from .errors import (
    ConditioningOnNullError,
    ConfigError,
    DomainError,
    EmptyCellError,
    InsufficientDataError,
    LogFormatError,
    LogParseError,
    PreconditionError,
    ReportError,
    UsageError,
)
from .estimators import (
    bayes_joint,
    chsh_from_log,
    correlation,
    correlation_table,
    qm_prediction,
    report,
    screening_off_report,
    single_rate,
)
from .invariance import RotationMode, RotationSpec, invariance_test
from .optics import DetectorParams
from .perturb import perturbation_report
from .source import SINGLET, LambdaDistribution, SourceKind
from .streams import check_seed

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_IO = 0, 2, 3, 4
OUT_DIR_ENV = "EPRLAB_OUT_DIR"


def _floats(text: str | Sequence[float]) -> list[float]:
    if isinstance(text, str):
        return [float(x) for x in text.split(",") if x.strip()]
    return [float(x) for x in text]


def _bool(v: Any) -> bool:
    if isinstance(v, bool):
        return v
    raise ValueError(f"expected true/false, got {v!r}")


def _opt_float(v: Any) -> float | None:
    return None if v is None else float(v)


def _opt_seed(v: Any) -> int | None:
    return None if v is None else check_seed(int(v))


def _int(v: Any) -> int:
    if isinstance(v, bool) or float(v) != int(float(v)):
        raise ValueError(f"expected an integer, got {v!r}")
    return int(float(v))


def _opt_str(v: Any) -> str | None:
    return None if v is None else str(v)


# key -> (flags, type coercion, argparse kwargs, default)
Option = tuple[tuple[str, ...], Callable[[Any], Any], dict[str, Any], Any]

COMMON: dict[str, Option] = {
    "seed": (("--seed",), _opt_seed, {"type": int, "help": "64-bit seed; generated and recorded when omitted"}, None),
}

DETECTOR: dict[str, Option] = {
    "efficiency": (("--efficiency",), float, {"type": float, "help": "detection efficiency per channel"}, 1.0),
    "dark_rate": (("--dark-rate",), float, {"type": float, "help": "dark-count probability per trial per side"}, 0.0),
}

SOURCE: dict[str, Option] = {
    "source": (("--source",), str, {"choices": [k.value for k in SourceKind]}, SourceKind.FIXED_AXIS.value),
    "axis": (("--axis",), float, {"type": float, "help": "source axis / offset in degrees"}, 0.0),
}

LOG_INPUT: dict[str, Option] = {
    "log": (("--log",), _opt_str, {"help": "trial-log CSV"}, None),
}

OPTIONS: dict[str, dict[str, Option]] = {
    "simulate": {
        **SOURCE,
        "pairs": (("--pairs",), _int, {"type": int, "help": "trials per setting pair"}, 10000),
        "a": (("--a",), float, {"type": float}, 0.0),
        "b": (("--b",), float, {"type": float}, 0.0),
        "chsh_angles": (("--chsh-angles",), _opt_str, {"help": "a,a',b,b' : schedule the four CHSH pairs"}, None),
        "schedule": (("--schedule",), _opt_str, {"help": "explicit schedule 'a:b:n;a:b:n'"}, None),
        "interleave": (("--interleave",), str, {"choices": ["round-robin", "block"]}, "round-robin"),
        "zeus": (("--zeus",), _bool, {"action": "store_true", "help": "record lambda on every trial"}, False),
        **DETECTOR,
        "out": (("--out",), str, {"help": "output CSV path"}, "trials.csv"),
    },
    "analyze": {
        **LOG_INPUT,
        "a": (("--a",), _opt_float, {"type": float}, None),
        "b": (("--b",), _opt_float, {"type": float}, None),
        "bayes": (("--bayes",), _bool, {"action": "store_true", "help": "add the Bayes-conditional joint"}, False),
        "event": (("--event",), str, {"choices": ["plus", "minus"]}, "plus"),
        "coincidence": (("--coincidence",), str, {"choices": [p.value for p in CoincidencePolicy]}, "require-both"),
        "out": (("--out",), str, {}, "analysis.json"),
    },
    "chsh": {
        **LOG_INPUT,
        "angles": (("--angles",), str, {"help": "a,a',b,b' in degrees"}, "0,45,22.5,67.5"),
        "out": (("--out",), str, {}, "chsh.json"),
    },
    "screening": {
        **LOG_INPUT,
        "a": (("--a",), float, {"type": float}, 22.5),
        "b": (("--b",), float, {"type": float}, 22.5),
        "bins": (("--bins",), str, {"help": "'auto', 'support', or comma-separated edges 0..180"}, "auto"),
        "out": (("--out",), str, {}, "screening.json"),
    },
    "invariance": {
        **SOURCE,
        "theta": (("--theta",), float, {"type": float, "help": "rotation angle in degrees"}, 30.0),
        "mode": (("--mode",), str, {"choices": [m.value for m in RotationMode]}, "co-rotate"),
        "grid": (("--grid",), str, {"help": "setting pairs 'a:b;a:b'"}, "0:22.5;0:67.5;45:22.5;45:67.5"),
        "pairs": (("--pairs",), _int, {"type": int, "help": "trials per setting pair"}, 100000),
        **DETECTOR,
        "out": (("--out",), str, {}, "invariance.json"),
    },
    "cv": {
        "sigma_x": (("--sigma-x",), float, {"type": float}, 0.1),
        "sigma_p": (("--sigma-p",), float, {"type": float}, 0.1),
        "samples": (("--samples",), _int, {"type": int}, 100000),
        "out": (("--out",), str, {}, "cv.json"),
    },
    "perturb": {
        "n": (("--n",), _int, {"type": int, "help": "grid points"}, 64),
        "length": (("--length",), float, {"type": float}, 1.0),
        "softening": (("--softening",), _opt_float, {"type": float, "help": "default 0.1 * length"}, None),
        "strength": (("--strength",), float, {"type": float}, 1.0),
        "modes": (("--modes",), str, {"help": "two mode indices, e.g. 1,2"}, "1,2"),
        "out": (("--out",), str, {}, "perturb.json"),
    },
}

HELP = {
    "simulate": "run an experiment and write a trial log",
    "analyze": "correlations, single rates and the Bayes-conditional joint of a log",
    "chsh": "CHSH combination from a log",
    "screening": "lambda-binned screening-off report (Zeus logs)",
    "invariance": "rotational-invariance test",
    "cv": "continuous-variable variance-product criterion",
    "perturb": "Coulomb / exchange integrals and the degenerate eigensystem",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eprlab", description="EPR-B Monte Carlo laboratory")
    parser.add_argument("--version", action="version", version=f"eprlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, opts in OPTIONS.items():
        p = sub.add_parser(name, help=HELP[name], description=HELP[name])
        for key, (flags, _coerce, kwargs, _default) in {**opts, **COMMON}.items():
            p.add_argument(*flags, dest=key, default=argparse.SUPPRESS, **kwargs)
        p.add_argument("--config", dest="_config", default=None, help="JSON config file or run manifest")
        p.add_argument("--workers", dest="_workers", type=int, default=1, help="parallel workers (results do not depend on it)")
    return parser


def resolve_config(command: str, ns: argparse.Namespace) -> dict[str, Any]:
    """Merge defaults, the --config file and explicit flags; coerce types."""
    opts = {**OPTIONS[command], **COMMON}
    cfg = {key: spec[3] for key, spec in opts.items()}
    explicit_out = "out" in vars(ns)
    if ns._config:
        try:
            loaded = json.loads(Path(ns._config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{ns._config}: invalid JSON: {exc}") from None
        if not isinstance(loaded, dict):
            raise ConfigError(f"{ns._config}: expected a JSON object")
        if "config" in loaded and "subcommand" in loaded:
            if loaded["subcommand"] != command:
                raise ConfigError(f"manifest is for {loaded['subcommand']!r}, not {command!r}")
            loaded = loaded["config"]
        unknown = set(loaded) - set(opts)
        if unknown:
            raise ConfigError(f"unknown config keys for {command}: {', '.join(sorted(unknown))}")
        cfg.update(loaded)
        explicit_out = explicit_out or "out" in loaded
    for key in opts:
        if key in vars(ns):
            cfg[key] = getattr(ns, key)
    for key, spec in opts.items():
        try:
            cfg[key] = spec[1](cfg[key])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid value for {key}: {exc}") from None
    if not explicit_out and cfg["out"] != "-":
        cfg["out"] = str(Path(os.environ.get(OUT_DIR_ENV, ".")) / cfg["out"])
    if cfg["seed"] is None:
        cfg["seed"] = secrets.randbits(64)
    return cfg


def _manifest_path(cfg: dict[str, Any], command: str) -> Path:
    if cfg["out"] == "-":
        return Path(os.environ.get(OUT_DIR_ENV, ".")) / f"{command}.manifest.json"
    out = Path(cfg["out"])
    return out.with_name(out.stem + ".manifest.json")


def _emit_json(obj: dict[str, Any], out: str) -> dict[str, str]:
    text = dump_json(obj)
    if out == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return {"report": "-"}
    with open(out, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return {"report": out}


def _info(msg: str) -> None:
    print(msg, file=sys.stderr)


def _detector(cfg: dict[str, Any]) -> DetectorParams:
    return DetectorParams(cfg["efficiency"], cfg["dark_rate"])


def _source(cfg: dict[str, Any]):
    kind = SourceKind(cfg["source"])
    if kind is SourceKind.SINGLET:
        return SINGLET
    return LambdaDistribution(kind, cfg["axis"])


def _parse_schedule(text: str, with_counts: bool) -> list[tuple[float, ...]]:
    out = []
    for item in text.split(";"):
        item = item.strip()
        if not item:
            continue
        parts = item.split(":")
        if len(parts) != (3 if with_counts else 2):
            raise ConfigError(f"bad schedule entry {item!r}")
        try:
            vals = [float(p) for p in parts]
        except ValueError:
            raise ConfigError(f"bad schedule entry {item!r}") from None
        out.append(tuple(vals))
    if not out:
        raise ConfigError("empty schedule")
    return out


def _four_angles(text: str) -> list[float]:
    try:
        angles = _floats(text)
    except ValueError:
        raise ConfigError(f"angles must be numbers: {text!r}") from None
    if len(angles) != 4:
        raise ConfigError("exactly four angles are required: a,a',b,b'")
    return angles


def _require_log(cfg: dict[str, Any]):
    if not cfg["log"]:
        raise ConfigError("--log is required")
    return read_log(cfg["log"])


def cmd_simulate(cfg: dict[str, Any], workers: int) -> dict[str, str]:
    if cfg["schedule"]:
        schedule = tuple(SettingPair(a, b, n) for a, b, n in _parse_schedule(cfg["schedule"], True))
    elif cfg["chsh_angles"]:
        schedule = chsh_schedule(*_four_angles(cfg["chsh_angles"]), cfg["pairs"])
    else:
        schedule = (SettingPair(cfg["a"], cfg["b"], cfg["pairs"]),)
    config = ExperimentConfig(
        source=_source(cfg), schedule=schedule, seed=cfg["seed"], detector=_detector(cfg),
        zeus=cfg["zeus"], interleave=cfg["interleave"],
    )
    log = run_experiment(config, workers=workers)
    if cfg["out"] == "-":
        raise ConfigError("simulate needs a file path for --out")
    csv_path, meta_path = write_log(log, cfg["out"])
    _info(f"simulate: {len(log)} trials -> {csv_path}")
    return {"log": str(csv_path), "meta": str(meta_path)}


def cmd_analyze(cfg: dict[str, Any], workers: int) -> dict[str, str]:
    log = apply_coincidence_filter(_require_log(cfg), cfg["coincidence"])
    out: dict[str, Any] = {"records": len(log), "coincidence": log.meta["coincidence"]}
    a, b = cfg["a"], cfg["b"]
    if a is None and b is None:
        out["correlations"] = correlation_table(log)
    else:
        if a is None or b is None:
            raise ConfigError("--a and --b must be given together")
        e = correlation(log, a, b)
        out["correlations"] = [{"a_deg": a, "b_deg": b, **e.to_dict(),
                                "qm_polarization": qm_prediction("polarization", a, b)}]
        out["single_rates"] = {
            "A": single_rate(log, "A", a, cfg["event"]).to_dict(),
            "B": single_rate(log, "B", b, cfg["event"]).to_dict(),
        }
    if cfg["bayes"]:
        if a is None or b is None:
            raise ConfigError("--bayes needs --a and --b")
        out["bayes"] = bayes_joint(log, a, b, cfg["event"]).to_dict()
    _info(f"analyze: {len(log)} coincident records")
    return _emit_json(report("analysis", **out), cfg["out"])


def cmd_chsh(cfg: dict[str, Any], workers: int) -> dict[str, str]:
    log = _require_log(cfg)
    res = chsh_from_log(log, *_four_angles(cfg["angles"]))
    _info(f"chsh: S = {res.s:.4f} +- {res.std_err:.4f}")
    return _emit_json(res.to_dict(), cfg["out"])


def cmd_screening(cfg: dict[str, Any], workers: int) -> dict[str, str]:
    log = _require_log(cfg)
    bins: Any = cfg["bins"]
    if bins == "auto":
        bins = None
    elif bins != "support":
        try:
            bins = _floats(bins)
        except ValueError:
            raise ConfigError(f"bad --bins {bins!r}") from None
    rep = screening_off_report(log, cfg["a"], cfg["b"], bins)
    _info(f"screening: pooled deviation {rep.pooled.deviation:.4f}")
    return _emit_json(rep.to_dict(), cfg["out"])


def cmd_invariance(cfg: dict[str, Any], workers: int) -> dict[str, str]:
    grid = [(a, b) for a, b in _parse_schedule(cfg["grid"], False)]
    config = ExperimentConfig(
        source=_source(cfg),
        schedule=tuple(SettingPair(a, b, cfg["pairs"]) for a, b in grid),
        seed=cfg["seed"],
        detector=_detector(cfg),
    )
    rep = invariance_test(config, RotationSpec(cfg["theta"], cfg["mode"]), workers=workers)
    _info(f"invariance: all_pass={rep.passed} record_identical={rep.record_identical}")
    return _emit_json(rep.to_dict(), cfg["out"])


def cmd_cv(cfg: dict[str, Any], workers: int) -> dict[str, str]:
    res = cv_variance_product(CVNoise(cfg["sigma_x"], cfg["sigma_p"]), cfg["samples"], cfg["seed"], workers)
    _info(f"cv: product = {res.product:.6g} ({res.verdict.value})")
    return _emit_json(res.to_dict(), cfg["out"])


def cmd_perturb(cfg: dict[str, Any], workers: int) -> dict[str, str]:
    try:
        modes = tuple(int(m) for m in cfg["modes"].split(","))
    except ValueError:
        raise ConfigError(f"bad --modes {cfg['modes']!r}") from None
    if len(modes) != 2:
        raise ConfigError("--modes needs exactly two indices")
    rep = perturbation_report(cfg["n"], cfg["length"], cfg["softening"], cfg["strength"], modes)
    _info(f"perturb: J = {rep['J']:.12g}, K = {rep['K']:.12g}")
    return _emit_json(rep, cfg["out"])


COMMANDS: dict[str, Callable[[dict[str, Any], int], dict[str, str]]] = {
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
    "chsh": cmd_chsh,
    "screening": cmd_screening,
    "invariance": cmd_invariance,
    "cv": cmd_cv,
    "perturb": cmd_perturb,
}

CONFIG_ERRORS = (ConfigError, UsageError, DomainError, EmptyCellError, ReportError,
                 ConditioningOnNullError, InsufficientDataError, PreconditionError)
IO_ERRORS = (OSError, LogParseError, LogFormatError)


def dispatch(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    command = ns.command
    try:
        if ns._workers < 1:
            raise ConfigError("--workers must be >= 1")
        cfg = resolve_config(command, ns)
        artifacts = COMMANDS[command](cfg, ns._workers)
        manifest = {
            "schema": 1,
            "kind": "manifest",
            "subcommand": command,
            "config": cfg,
            "seed": cfg["seed"],
            "artifacts": artifacts,
            "tool": {"name": "eprlab", "version": __version__},
        }
        mpath = _manifest_path(cfg, command)
        with open(mpath, "w", encoding="utf-8", newline="") as fh:
            fh.write(dump_json(manifest))
    except IO_ERRORS as exc:
        print(f"eprlab {command}: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except CONFIG_ERRORS as exc:
        print(f"eprlab {command}: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> None:
    sys.exit(dispatch(argv))


if __name__ == "__main__":
    main()
