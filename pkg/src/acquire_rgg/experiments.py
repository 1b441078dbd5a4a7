"""
Monte Carlo sweeps over ``(n, r, seed)`` and the scaling fit.

A sweep is described by a YAML file::

    schema: sweep-v1
    seed: 1            # trial t of every (n, r) pair uses seed + t
    trials: 10
    sampler: fixed_n   # or poisson
    grid:
      - {n: 1000000, r: [4, 8, 16, 32]}
    methods: [dangerous, ball, tessellation, fallback, greedy]
    workers: 1
    tessellation: {c: 0.25, eps: 0.01, rules: relaxed, strip_rows: 1}
    fit: {band_limit: 10, drift_limit: 0.1, slope_range: [-2.6, -1.4]}

Rows reach the CSV in config order whatever the worker count.  Every float
is written with ``repr`` so identical configs give identical bytes; run
times go to a separate ``.timing.csv`` next to the main file.
"""
from __future__ import annotations

import csv
import io
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np
import yaml

from . import certificates as cert
from . import tessellation as tess
from .engine import replay, save_protocol
from .rgg import FIXED_N, POISSON, sample_fixed_n, sample_poisson

SCHEMA = "trialv1"
CONFIG_SCHEMA = "sweep-v1"

SPARSE, MID, DENSE = "Sparse", "Mid", "Dense"
LOWER_METHODS = ("dangerous", "ball")
UPPER_METHODS = ("tessellation", "fallback", "greedy")
METHODS = LOWER_METHODS + UPPER_METHODS
PHASES = ("build", "certify", "protocol", "replay")

DEFAULT_FIT = {"band_limit": 10.0, "drift_limit": 0.1, "slope_range": [-2.6, -1.4],
               "min_r": 4, "min_seeds": 10}


class ConfigError(ValueError):
    pass


class InsufficientData(ValueError):
    pass


def regime(n, r):
    """Sparse below ``r = 1``, Dense once ``r lg r`` exceeds ``sqrt n``, Mid otherwise.

    Compared as ``(r lg r)^2 > n`` so that the boundary ``r lg r = sqrt n``
    lands in Mid without rounding a square root.
    """
    if r < 1:
        return SPARSE
    return DENSE if (r * math.log2(r)) ** 2 > n else MID


@dataclass
class TrialRecord:
    n: int
    r: float
    seed: int
    sampler: str = FIXED_N
    regime: str = MID
    vertices: int = 0
    lower_dangerous: int | None = None
    dangerous_conditional: bool | None = None
    lower_ball: int | None = None
    upper_tessellation: int | None = None
    upper_fallback_only: int | None = None
    upper_greedy: int | None = None
    good_square_fraction: float | None = None
    error1: int | None = None
    error2: int | None = None
    error3: int | None = None
    merge_errors: int | None = None
    replay_ok: bool | None = None
    sandwich_ok: bool | None = None
    errors: str = ""
    wallclock: dict = field(default_factory=dict)

    @property
    def best_lower(self):
        vals = [v for v in (self.lower_dangerous, self.lower_ball) if v is not None]
        return max(vals) if vals else None

    @property
    def best_upper(self):
        vals = [v for v in (self.upper_tessellation, self.upper_fallback_only,
                            self.upper_greedy) if v is not None]
        return min(vals) if vals else None


CSV_FIELDS = ["schema"] + [f.name for f in fields(TrialRecord) if f.name != "wallclock"] + [
    "best_lower", "best_upper"]
TIMING_FIELDS = ["n", "r", "seed"] + [f"{p}_s" for p in PHASES]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def record_row(rec):
    row = {"schema": SCHEMA}
    for name in CSV_FIELDS[1:]:
        row[name] = _fmt(getattr(rec, name))
    return row


_INT_FIELDS = {"n", "seed", "vertices", "lower_dangerous", "lower_ball", "upper_tessellation",
               "upper_fallback_only", "upper_greedy", "error1", "error2", "error3",
               "merge_errors"}
_FLOAT_FIELDS = {"r", "good_square_fraction"}
_BOOL_FIELDS = {"dangerous_conditional", "replay_ok", "sandwich_ok"}


def read_records(stream):
    """Parse a sweep CSV back into :class:`TrialRecord` objects."""
    reader = csv.DictReader(stream)
    out = []
    for lineno, row in enumerate(reader, start=2):
        if row.get("schema") != SCHEMA:
            raise ValueError(f"line {lineno}: unknown schema {row.get('schema')!r}")
        kw = {}
        for f in fields(TrialRecord):
            if f.name == "wallclock":
                continue
            raw = row.get(f.name, "")
            if f.name in _INT_FIELDS:
                kw[f.name] = int(raw) if raw != "" else None
            elif f.name in _FLOAT_FIELDS:
                kw[f.name] = float(raw) if raw != "" else None
            elif f.name in _BOOL_FIELDS:
                kw[f.name] = (raw == "1") if raw != "" else None
            else:
                kw[f.name] = raw
        out.append(TrialRecord(**kw))
    return out


# -- configuration ----------------------------------------------------------

@dataclass
class SweepConfig:
    pairs: list
    trials: int
    seed: int = 0
    sampler: str = FIXED_N
    methods: tuple = METHODS
    workers: int = 1
    tessellation: dict = field(default_factory=dict)
    ball_budget: int | None = None
    protocol_dir: str | None = None
    fit: dict = field(default_factory=lambda: dict(DEFAULT_FIT))

    def tasks(self):
        for n, r in self.pairs:
            for t in range(self.trials):
                yield TrialTask(n, r, self.seed + t, self)


@dataclass
class TrialTask:
    n: int
    r: float
    seed: int
    config: SweepConfig


def parse_config(data):
    """Build a :class:`SweepConfig` from YAML text or an already-parsed mapping."""
    raw = yaml.safe_load(data) if isinstance(data, (str, bytes)) else data
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    schema = raw.get("schema", CONFIG_SCHEMA)
    if schema != CONFIG_SCHEMA:
        raise ConfigError(f"unsupported config schema {schema!r}")
    pairs = []
    for entry in raw.get("grid", []) or []:
        ns = entry["n"] if isinstance(entry["n"], list) else [entry["n"]]
        rs = entry["r"] if isinstance(entry["r"], list) else [entry["r"]]
        for n in ns:
            for r in rs:
                pairs.append((int(n), float(r)))
    methods = tuple(raw.get("methods", METHODS))
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise ConfigError(f"unknown methods {sorted(unknown)}")
    sampler = raw.get("sampler", FIXED_N)
    if sampler not in (FIXED_N, POISSON):
        raise ConfigError(f"unknown sampler {sampler!r}")
    fit = dict(DEFAULT_FIT)
    fit.update(raw.get("fit", {}) or {})
    return SweepConfig(
        pairs=pairs,
        trials=int(raw.get("trials", 1)),
        seed=int(raw.get("seed", 0)),
        sampler=sampler,
        methods=methods,
        workers=max(1, int(raw.get("workers", 1))),
        tessellation=dict(raw.get("tessellation", {}) or {}),
        ball_budget=raw.get("ball_budget"),
        protocol_dir=raw.get("protocol_dir"),
        fit=fit,
    )


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


# -- one trial --------------------------------------------------------------

def _tess_plan(n, r, side, opts):
    return tess.plan(
        n, r,
        c=float(opts.get("c", 0.25)),
        eps=float(opts.get("eps", 0.01)),
        side=side,
        strip_rows=int(opts.get("strip_rows", 1)),
        rules=opts.get("rules", "relaxed"),
    )


def run_trial(task):
    """Run every configured method on one sampled instance."""
    cfg = task.config
    rec = TrialRecord(task.n, float(task.r), task.seed, cfg.sampler, regime(task.n, task.r))
    clock = {p: 0.0 for p in PHASES}
    problems = []
    t0 = time.perf_counter()
    sampler = sample_poisson if cfg.sampler == POISSON else sample_fixed_n
    g = sampler(task.n, task.r, task.seed)
    rec.vertices = g.n
    clock["build"] = time.perf_counter() - t0
    methods = set(cfg.methods)

    t0 = time.perf_counter()
    if "dangerous" in methods:
        try:
            c = cert.dangerous_squares(g)
            if c.applicable:
                rec.lower_dangerous = c.value
                rec.dangerous_conditional = c.conditional
        except Exception as exc:  # recorded, never fatal
            problems.append(f"dangerous: {type(exc).__name__}: {exc}")
    if "ball" in methods:
        try:
            budget = g.n if cfg.ball_budget is None else int(cfg.ball_budget)
            rec.lower_ball = cert.ball_counting_cap(g, budget).value
        except Exception as exc:
            problems.append(f"ball: {type(exc).__name__}: {exc}")
    clock["certify"] = time.perf_counter() - t0

    protocols = {}
    t0 = time.perf_counter()
    if methods & {"tessellation", "fallback"}:
        try:
            p = tess.classify(_tess_plan(g.n, task.r, g.side, cfg.tessellation), g)
            rec.good_square_fraction = p.good_count / p.num_squares
            if "tessellation" in methods:
                res = tess.full_protocol(g, p)
                rec.upper_tessellation = res.residual_count
                rec.error1 = res.error_counts.get(tess.ERROR1, 0)
                rec.error2 = res.error_counts.get(tess.ERROR2, 0)
                rec.error3 = res.error_counts.get(tess.ERROR3, 0)
                rec.merge_errors = res.error_counts.get("Merge", 0)
                protocols["tessellation"] = res.protocol
            if "fallback" in methods:
                res = tess.fallback_only(g, p)
                rec.upper_fallback_only = res.residual_count
                protocols["fallback"] = res.protocol
        except Exception as exc:
            problems.append(f"tessellation: {type(exc).__name__}: {exc}")
    if "greedy" in methods:
        try:
            proto, resid = tess.grid_protocol(g)
            rec.upper_greedy = len(resid)
            protocols["greedy"] = proto
        except Exception as exc:
            problems.append(f"greedy: {type(exc).__name__}: {exc}")
    clock["protocol"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    ok = True
    for name, proto in protocols.items():
        try:
            replay(g, proto)
        except Exception as exc:
            ok = False
            problems.append(f"replay {name}: {type(exc).__name__}: {exc}")
        if cfg.protocol_dir:
            os.makedirs(cfg.protocol_dir, exist_ok=True)
            fname = f"n{task.n}_r{_fmt(float(task.r))}_s{task.seed}_{name}.atproto"
            with open(os.path.join(cfg.protocol_dir, fname), "wb") as fh:
                fh.write(save_protocol(proto, g.n))
    rec.replay_ok = ok if protocols else None
    clock["replay"] = time.perf_counter() - t0

    lo, hi = rec.best_lower, rec.best_upper
    rec.sandwich_ok = None if lo is None or hi is None else lo <= hi
    rec.errors = "; ".join(problems)
    rec.wallclock = clock
    return rec


# -- sweeps -----------------------------------------------------------------

def iter_sweep(config):
    """Trial records in config order; trials run on ``config.workers`` processes."""
    tasks = list(config.tasks())
    if config.workers <= 1 or len(tasks) <= 1:
        for task in tasks:
            yield run_trial(task)
        return
    with ProcessPoolExecutor(max_workers=config.workers) as pool:
        yield from pool.map(run_trial, tasks)


def run_sweep(config, out, timing_out=None):
    """Write one CSV row per trial to the text stream ``out``; returns the records."""
    if not isinstance(config, SweepConfig):
        config = parse_config(config)
    writer = csv.DictWriter(out, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    twriter = None
    if timing_out is not None:
        twriter = csv.DictWriter(timing_out, fieldnames=TIMING_FIELDS, lineterminator="\n")
        twriter.writeheader()
    records = []
    for rec in iter_sweep(config):
        writer.writerow(record_row(rec))
        out.flush()
        if twriter is not None:
            row = {"n": rec.n, "r": repr(rec.r), "seed": rec.seed}
            row.update({f"{p}_s": f"{rec.wallclock.get(p, 0.0):.6f}" for p in PHASES})
            twriter.writerow(row)
            timing_out.flush()
        records.append(rec)
    return records


def sweep_to_file(config, path):
    """Run a sweep writing ``path`` and ``path`` with a ``.timing.csv`` suffix."""
    root, _ = os.path.splitext(path)
    with open(path, "w", encoding="utf-8", newline="") as out, \
            open(root + ".timing.csv", "w", encoding="utf-8", newline="") as tout:
        return run_sweep(config, out, tout)


def sweep_csv(config):
    """The sweep CSV as a string (no timings)."""
    buf = io.StringIO()
    run_sweep(config, buf)
    return buf.getvalue()


# -- scaling fit ------------------------------------------------------------

@dataclass
class FitResult:
    slope: float
    intercept: float
    band: tuple
    band_ratio: float
    drift: float
    flags: list
    n: int
    points: int
    radii: list

    def summary(self):
        lo, hi = self.band
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "band_low": lo,
            "band_high": hi,
            "band_ratio": self.band_ratio,
            "drift": self.drift,
            "flags": list(self.flags),
            "n": self.n,
            "points": self.points,
            "radii": list(self.radii),
            "note": "band limits are engineering thresholds, not constants from the theory",
        }


def fit_scaling(records, regime_name=MID, value="best_upper", band_limit=10.0,
                drift_limit=0.1, min_r=4, min_seeds=10):
    """Least-squares slope of ``log(value)`` against ``log(r lg r)`` at fixed ``n``.

    ``band`` is the range of ``value * (r lg r)^2 / n``.  Flags: ``band_ratio``
    when high/low exceeds ``band_limit``; ``drift`` when the slope differs from
    -2 by more than ``drift_limit``, i.e. the normalised constant trends with r.
    """
    pts = []
    for rec in records:
        if isinstance(rec, TrialRecord):
            reg = rec.regime
            v = getattr(rec, value)
            n, r = rec.n, rec.r
        else:
            n, r, v = rec["n"], rec["r"], rec[value]
            reg = rec.get("regime", regime(n, r))
        if reg.lower() != regime_name.lower() or v is None or not v > 0:
            continue
        pts.append((int(n), float(r), float(v)))
    if not pts:
        raise InsufficientData(f"no usable {regime_name} records")
    ns = {p[0] for p in pts}
    if len(ns) != 1:
        raise InsufficientData(f"records mix several n values: {sorted(ns)}")
    n = ns.pop()
    per_r = {}
    for _, r, _ in pts:
        per_r[r] = per_r.get(r, 0) + 1
    if len(per_r) < min_r:
        raise InsufficientData(f"{len(per_r)} distinct r values, need {min_r}")
    if min(per_r.values()) < min_seeds:
        raise InsufficientData(f"some r has fewer than {min_seeds} trials")
    x = np.array([math.log(r * math.log2(r)) for _, r, _ in pts])
    y = np.array([math.log(v) for _, _, v in pts])
    A = np.stack([x, np.ones_like(x)], axis=1)
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    consts = [v * (r * math.log2(r)) ** 2 / n for _, r, v in pts]
    lo, hi = min(consts), max(consts)
    ratio = hi / lo
    flags = []
    if ratio > band_limit:
        flags.append("band_ratio")
    drift = float(slope) + 2.0
    if abs(drift) > drift_limit:
        flags.append("drift")
    return FitResult(float(slope), float(intercept), (lo, hi), ratio, drift, flags, n,
                     len(pts), sorted(per_r))
