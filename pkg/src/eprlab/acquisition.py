"""Running experiments, coincidence filtering, and trial-log persistence.

Log files are a CSV with header ``n,a_deg,b_deg,ch_a,ch_b,lambda_deg`` and a
JSON sidecar (``<stem>.meta.json``) carrying the configuration and counts.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import ConfigError, LogFormatError, LogParseError
from .model import TrialLog, angle_difference, normalize_angles, quantize_angle
from .optics import IDEAL, DetectorParams, detect_from_uniform
from .source import (
    LambdaDistribution,
    Source,
    sample_lambdas,
    singlet_outcomes_from_uniform,
    source_from_dict,
)
from .streams import SeededStream, check_seed

FORMAT_VERSION = 1
CSV_HEADER = ("n", "a_deg", "b_deg", "ch_a", "ch_b", "lambda_deg")
CSV_HEADER_NO_ZEUS = CSV_HEADER[:-1]

# Trials are generated in fixed-size chunks, each with its own substreams, so
# the output does not depend on how chunks are spread over workers.
CHUNK_SIZE = 1 << 16

_ROLE_SOURCE, _ROLE_LEFT, _ROLE_RIGHT = 0, 1, 2


class Interleave(str, enum.Enum):
    ROUND_ROBIN = "round-robin"
    BLOCK = "block"


@dataclass(frozen=True)
class SettingPair:
    a: float
    b: float
    trials: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "a", quantize_angle(self.a))
        object.__setattr__(self, "b", quantize_angle(self.b))
        if isinstance(self.trials, bool) or int(self.trials) != self.trials or self.trials < 1:
            raise ConfigError(f"trials per setting pair must be a positive integer, got {self.trials!r}")
        object.__setattr__(self, "trials", int(self.trials))

    def to_dict(self) -> dict[str, Any]:
        return {"a": self.a, "b": self.b, "trials": self.trials}


@dataclass(frozen=True)
class ExperimentConfig:
    source: Source
    schedule: tuple[SettingPair, ...]
    seed: int
    detector: DetectorParams = IDEAL
    zeus: bool = False
    interleave: Interleave = Interleave.ROUND_ROBIN

    def __post_init__(self) -> None:
        schedule = tuple(self.schedule)
        if not schedule:
            raise ConfigError("setting schedule is empty")
        if not all(isinstance(p, SettingPair) for p in schedule):
            raise ConfigError("schedule entries must be SettingPair")
        object.__setattr__(self, "schedule", schedule)
        object.__setattr__(self, "seed", check_seed(self.seed))
        object.__setattr__(self, "interleave", Interleave(self.interleave))
        object.__setattr__(self, "zeus", bool(self.zeus))

    @property
    def total_trials(self) -> int:
        return sum(p.trials for p in self.schedule)

    @property
    def lambda_based(self) -> bool:
        return isinstance(self.source, LambdaDistribution)

    def to_dict(self) -> dict[str, Any]:
        return {
            "source": self.source.to_dict(),
            "schedule": [p.to_dict() for p in self.schedule],
            "detector": self.detector.to_dict(),
            "seed": self.seed,
            "zeus": self.zeus,
            "interleave": self.interleave.value,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ExperimentConfig":
        try:
            return cls(
                source=source_from_dict(d["source"]),
                schedule=tuple(SettingPair(p["a"], p["b"], p["trials"]) for p in d["schedule"]),
                seed=d["seed"],
                detector=DetectorParams(**d.get("detector", {})),
                zeus=d.get("zeus", False),
                interleave=d.get("interleave", Interleave.ROUND_ROBIN.value),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid experiment config: {exc}") from exc

    def with_source(self, source: Source) -> "ExperimentConfig":
        return ExperimentConfig(source, self.schedule, self.seed, self.detector, self.zeus, self.interleave)

    def with_schedule(self, schedule: Iterable[SettingPair]) -> "ExperimentConfig":
        return ExperimentConfig(self.source, tuple(schedule), self.seed, self.detector, self.zeus, self.interleave)


def settings_sequence(config: ExperimentConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-trial (a, b) arrays; a function of the config alone."""
    pair_idx = np.concatenate([np.full(p.trials, i, dtype=np.int64) for i, p in enumerate(config.schedule)])
    if config.interleave is Interleave.ROUND_ROBIN:
        within = np.concatenate([np.arange(p.trials, dtype=np.int64) for p in config.schedule])
        order = np.lexsort((pair_idx, within))
        pair_idx = pair_idx[order]
    a = np.array([p.a for p in config.schedule])[pair_idx]
    b = np.array([p.b for p in config.schedule])[pair_idx]
    return a, b


def _simulate_chunk(config: ExperimentConfig, chunk: int, a: np.ndarray, b: np.ndarray):
    size = a.shape[0]
    root = SeededStream(config.seed, (chunk,))
    src = root.child(_ROLE_SOURCE).generator()
    left = root.child(_ROLE_LEFT).generator()
    right = root.child(_ROLE_RIGHT).generator()
    det = config.detector
    lam = None
    if isinstance(config.source, LambdaDistribution):
        lam = sample_lambdas(config.source, src, size)
        lam_right = normalize_angles(lam + 90.0)
        ul = left.random((2, size))
        ur = right.random((2, size))
        out_a = detect_from_uniform(lam, a, det, ul[0], ul[1])
        out_b = detect_from_uniform(lam_right, b, det, ur[0], ur[1])
    else:
        out_a, out_b = singlet_outcomes_from_uniform(angle_difference(a, b), src.random(size))
        ul = left.random((2, size))
        ur = right.random((2, size))
        out_a = _thin(out_a, det, ul)
        out_b = _thin(out_b, det, ur)
    return out_a, out_b, lam


def _thin(codes: np.ndarray, det: DetectorParams, u: np.ndarray) -> np.ndarray:
    """Efficiency loss and dark counts applied to already-decided outcomes."""
    kept = np.where(u[0] < det.efficiency, codes, 0)
    half = 0.5 * det.dark_rate
    dark = np.where(u[1] < half, 1, np.where(u[1] < det.dark_rate, -1, 0))
    return np.where(kept == 0, dark, kept).astype(np.int8)


def run_experiment(config: ExperimentConfig, workers: int = 1) -> TrialLog:
    """Simulate every scheduled trial and return the raw (unfiltered) log."""
    if workers < 1:
        raise ConfigError("workers must be >= 1")
    a, b = settings_sequence(config)
    total = a.shape[0]
    starts = list(range(0, total, CHUNK_SIZE))

    def job(k: int):
        s = starts[k]
        return _simulate_chunk(config, k, a[s:s + CHUNK_SIZE], b[s:s + CHUNK_SIZE])

    if workers == 1 or len(starts) == 1:
        parts = [job(k) for k in range(len(starts))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, range(len(starts))))

    out_a = np.concatenate([p[0] for p in parts])
    out_b = np.concatenate([p[1] for p in parts])
    zeus = None
    if config.zeus and config.lambda_based:
        zeus = np.concatenate([p[2] for p in parts])
    meta = {
        "format_version": FORMAT_VERSION,
        "config": config.to_dict(),
        "counts": {"scheduled": total, "records": total},
    }
    return TrialLog(np.arange(1, total + 1), a, b, out_a, out_b, zeus, meta)


class CoincidencePolicy(str, enum.Enum):
    REQUIRE_BOTH = "require-both"
    KEEP_ALL = "keep-all"


def apply_coincidence_filter(log: TrialLog, policy: CoincidencePolicy | str = CoincidencePolicy.REQUIRE_BOTH) -> TrialLog:
    """Drop accidentals: records where either side registered nothing.

    The returned log's metadata gains a ``coincidence`` entry with the
    policy and the pre-, post- and rejected counts.
    """
    policy = CoincidencePolicy(policy)
    if policy is CoincidencePolicy.KEEP_ALL:
        mask = np.ones(len(log), dtype=bool)
    else:
        mask = (log.out_a != 0) & (log.out_b != 0)
    post = int(mask.sum())
    meta = json.loads(json.dumps(log.meta))
    meta["coincidence"] = {"policy": policy.value, "pre": len(log), "post": post, "rejected": len(log) - post}
    meta.setdefault("counts", {})["records"] = post
    return log.select(mask, meta)


def meta_path_for(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def format_angle(x: float) -> str:
    s = f"{x:.6f}".rstrip("0").rstrip(".")
    return "0" if s in ("", "-0") else s


def _format_code(c: int) -> str:
    return "+1" if c > 0 else ("-1" if c < 0 else "0")


def log_to_csv(log: TrialLog) -> str:
    """Render ``log`` in the CSV log format (LF line endings)."""
    buf = io.StringIO()
    zeus = log.zeus_lambda
    buf.write(",".join(CSV_HEADER) + "\n")
    a_str = [format_angle(x) for x in log.a_deg.tolist()]
    b_str = [format_angle(x) for x in log.b_deg.tolist()]
    ca = [_format_code(c) for c in log.out_a.tolist()]
    cb = [_format_code(c) for c in log.out_b.tolist()]
    lam = [""] * len(log) if zeus is None else [format_angle(x) for x in zeus.tolist()]
    buf.writelines(
        f"{n},{a},{b},{x},{y},{z}\n" for n, a, b, x, y, z in zip(log.n.tolist(), a_str, b_str, ca, cb, lam)
    )
    return buf.getvalue()


def dump_json(obj: Any) -> str:
    """Canonical JSON text used for every machine-readable artifact."""
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_log(log: TrialLog, path: str | Path) -> tuple[Path, Path]:
    """Write the CSV and its ``.meta.json`` sidecar; returns both paths."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(log_to_csv(log))
    meta = dict(log.meta)
    meta.setdefault("format_version", FORMAT_VERSION)
    mpath = meta_path_for(path)
    with open(mpath, "w", encoding="utf-8", newline="") as fh:
        fh.write(dump_json(meta))
    return path, mpath


def _parse_angle(text: str, line: int, name: str, path: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise LogParseError(f"column {name!r}: not a number: {text!r}", line, path) from None
    if not math.isfinite(value):
        raise LogParseError(f"column {name!r}: non-finite angle", line, path)
    return quantize_angle(value)


def read_log(path: str | Path) -> TrialLog:
    """Load a log written by :func:`write_log`.

    The sidecar is optional; when present its ``format_version`` must match.
    A file without the ``lambda_deg`` column yields a log without Zeus data.
    """
    path = Path(path)
    spath = str(path)
    mpath = meta_path_for(path)
    meta: dict[str, Any] = {}
    if mpath.exists():
        try:
            meta = json.loads(mpath.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise LogParseError(f"sidecar is not valid JSON: {exc.msg}", exc.lineno, str(mpath)) from None
        version = meta.get("format_version")
        if version != FORMAT_VERSION:
            raise LogFormatError(f"{mpath}: unsupported log format version {version!r} (expected {FORMAT_VERSION})")

    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise LogParseError("empty file, missing header row", 1, spath) from None
        header = [h.strip() for h in header]
        if tuple(header) == CSV_HEADER:
            with_zeus_col = True
        elif tuple(header) == CSV_HEADER_NO_ZEUS:
            with_zeus_col = False
        else:
            raise LogParseError(f"missing or invalid header row, expected {','.join(CSV_HEADER)!r}", 1, spath)
        width = len(header)
        ns: list[int] = []
        a: list[float] = []
        b: list[float] = []
        oa: list[int] = []
        ob: list[int] = []
        lam: list[float | None] = []
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != width:
                raise LogParseError(f"expected {width} fields, found {len(row)}", line, spath)
            try:
                n = int(row[0])
            except ValueError:
                raise LogParseError(f"column 'n': not an integer: {row[0]!r}", line, spath) from None
            if n < 1 or (ns and n <= ns[-1]):
                raise LogParseError(f"run index {n} is not positive and strictly increasing", line, spath)
            codes = []
            for name, text in (("ch_a", row[3]), ("ch_b", row[4])):
                if text not in ("+1", "1", "-1", "0"):
                    raise LogParseError(f"column {name!r}: invalid channel code {text!r}", line, spath)
                codes.append(int(text))
            ns.append(n)
            a.append(_parse_angle(row[1], line, "a_deg", spath))
            b.append(_parse_angle(row[2], line, "b_deg", spath))
            oa.append(codes[0])
            ob.append(codes[1])
            if with_zeus_col and row[5] != "":
                lam.append(_parse_angle(row[5], line, "lambda_deg", spath))
            else:
                lam.append(None)

    present = [x is not None for x in lam]
    if any(present) and not all(present):
        first_blank = present.index(False) + 2
        raise LogParseError("lambda_deg must be filled on every row or on none", first_blank, spath)
    zeus = np.array(lam, dtype=np.float64) if lam and all(present) else None
    return TrialLog(np.array(ns, dtype=np.int64), a, b, oa, ob, zeus, meta)


def schedule_from_pairs(pairs: Sequence[tuple[float, float]], trials: int) -> tuple[SettingPair, ...]:
    return tuple(SettingPair(a, b, trials) for a, b in pairs)


def chsh_schedule(a: float, a2: float, b: float, b2: float, trials: int) -> tuple[SettingPair, ...]:
    """The four setting pairs of a CHSH test, ``trials`` each."""
    return schedule_from_pairs([(a, b), (a, b2), (a2, b), (a2, b2)], trials)
