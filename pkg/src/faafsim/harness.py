"""Batch runner for the sign-combination x axis-lock experiment tables."""

from __future__ import annotations

import configparser
import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import geometry as geo
from .compliance import AXES, load_calibration
from .simulator import (STATUSES, TrialOutcome, TrialSpec, plunge_sweep, run_trial,
                        write_summary_json, write_trace_csv)
from .trajectory import PressController, SpiralParams

SCENARIOS = ("square", "triangle", "square-lateral", "wellplate-lid", "petri-lid", "plunge-sweep")

# fixed column order: signs of (x, y, yaw) offsets
COLUMNS = ("+++", "+-+", "-++", "--+", "++-", "+--", "-+-", "---")
SIGNS = tuple(tuple(1.0 if ch == "+" else -1.0 for ch in col) for col in COLUMNS)

# a trial that raised instead of returning a status
ERROR = "error"


class ConfigError(ValueError):
    pass


def parse_pattern(text: str) -> Tuple[bool, bool, bool, bool]:
    """``"1011"`` -> enabled flags for x, y, z, yaw (1 = enabled, 0 = locked)."""
    text = text.strip()
    if len(text) != 4 or set(text) - {"0", "1"}:
        raise ConfigError(f"lock pattern {text!r} must be four 0/1 flags (x y z yaw)")
    return tuple(ch == "1" for ch in text)


def pattern_text(enabled: Sequence[bool]) -> str:
    return "".join("1" if e else "0" for e in enabled)


def _floats(text: str, n: int) -> Tuple[float, ...]:
    vals = tuple(float(v) for v in text.replace(",", " ").split())
    if len(vals) != n:
        raise ConfigError(f"expected {n} numbers, got {text!r}")
    return vals


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    offset_magnitudes: Tuple[Tuple[float, float, float], ...] = ((4.0, 4.0, 8.0),)
    lock_patterns: Tuple[Tuple[bool, bool, bool, bool], ...] = ((True, True, True, True),)
    repetitions: int = 5
    jitter: Tuple[float, float] = (0.25, 0.5)
    seed: int = 0
    output_dir: Optional[str] = None
    object: str = "square_prism"
    site: str = "square_base"
    orientation: str = "vertical"
    spiral: SpiralParams = SpiralParams(5.0, 18.0, 12)
    press: PressController = PressController(11.0)
    steps: int = 2000
    traces: bool = False
    workers: int = 1
    # plunge-sweep only
    pairs: Tuple[Tuple[str, str], ...] = ()
    max_yaw: int = 20
    catalog_path: Optional[str] = None
    calibration_path: Optional[str] = None
    calibration_overrides: Tuple[Tuple[str, str], ...] = ()

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        if not self.lock_patterns:
            raise ConfigError("lock_patterns must not be empty")
        for p in self.lock_patterns:
            if len(p) != 4:
                raise ConfigError("each lock pattern needs four flags")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if min(self.jitter) < 0:
            raise ConfigError("jitter must be >= 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.scenario == "plunge-sweep":
            if not self.pairs:
                raise ConfigError("plunge-sweep needs object/site pairs")
        else:
            if not self.offset_magnitudes:
                raise ConfigError("offset_magnitudes must not be empty")
            cat = geo.load_catalog(self.catalog_path)
            cat.object(self.object)
            cat.site(self.site)

    @property
    def n_trials(self) -> int:
        if self.scenario == "plunge-sweep":
            return len(self.pairs) * len(self.lock_patterns)
        return len(self.offset_magnitudes) * len(self.lock_patterns) * len(COLUMNS) * self.repetitions


def _preset_text(scenario: str) -> str:
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}; expected one of {SCENARIOS}")
    return resources.files("faafsim.presets").joinpath(f"{scenario}.ini").read_text()


def _parser() -> configparser.ConfigParser:
    return configparser.ConfigParser(inline_comment_prefixes=("#",))


def load_config(path: Optional[str | Path] = None, scenario: Optional[str] = None,
                **overrides) -> ExperimentConfig:
    """Resolve a scenario preset, then the user file, then ``overrides`` (field names)."""
    user = _parser()
    if path is not None:
        user.read_string(Path(path).read_text(), source=str(path))
    name = scenario or user.get("experiment", "scenario", fallback=None)
    if name is None:
        raise ConfigError("no scenario given (config [experiment] scenario or --scenario)")
    cp = _parser()
    cp.read_string(_preset_text(name), source=f"presets/{name}.ini")
    for sec in user.sections():
        if not cp.has_section(sec):
            cp.add_section(sec)
        for k, v in user[sec].items():
            cp[sec][k] = v
    ex = cp["experiment"]
    kw: Dict[str, object] = {"scenario": name}
    kw["lock_patterns"] = tuple(parse_pattern(p) for p in ex.get("locks", "1111").split())
    if "pairs" in ex:
        kw["pairs"] = tuple(tuple(p.split("/", 1)) for p in ex["pairs"].split())
        kw["max_yaw"] = ex.getint("max_yaw", 20)
    else:
        kw["object"], kw["site"] = ex["object"], ex["site"]
        kw["orientation"] = ex.get("orientation", "vertical")
        kw["offset_magnitudes"] = tuple(_floats(m, 3) for m in ex["magnitudes"].split(";"))
        kw["repetitions"] = ex.getint("repetitions", 5)
        kw["jitter"] = _floats(ex.get("jitter", "0.25, 0.5"), 2)
        kw["steps"] = ex.getint("steps", 2000)
        sp = cp["spiral"]
        kw["spiral"] = SpiralParams(sp.getfloat("r_start"), sp.getfloat("r_end"), sp.getfloat("laps"),
                                    direction=sp.get("direction", "ccw"))
        pr = cp["press"]
        kw["press"] = PressController(pr.getfloat("force"), gain=pr.getfloat("gain", 0.02))
    kw["seed"] = ex.getint("seed", 0)
    kw["output_dir"] = ex.get("output_dir", None)
    kw["traces"] = ex.getboolean("traces", False)
    kw["workers"] = ex.getint("workers", 1)
    kw["catalog_path"] = ex.get("catalog", None)
    kw["calibration_path"] = ex.get("calibration", None)
    if cp.has_section("calibration"):
        kw["calibration_overrides"] = tuple(sorted(cp["calibration"].items()))
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**kw)


def config_text(cfg: ExperimentConfig) -> str:
    """Resolved configuration as INI text."""
    cp = _parser()
    cp["experiment"] = {"scenario": cfg.scenario,
                        "locks": " ".join(pattern_text(p) for p in cfg.lock_patterns),
                        "seed": str(cfg.seed), "workers": str(cfg.workers),
                        "traces": "yes" if cfg.traces else "no"}
    ex = cp["experiment"]
    if cfg.output_dir:
        ex["output_dir"] = cfg.output_dir
    if cfg.scenario == "plunge-sweep":
        ex["pairs"] = " ".join(f"{o}/{s}" for o, s in cfg.pairs)
        ex["max_yaw"] = str(cfg.max_yaw)
    else:
        ex["object"], ex["site"], ex["orientation"] = cfg.object, cfg.site, cfg.orientation
        ex["magnitudes"] = "; ".join(", ".join(f"{v:g}" for v in m) for m in cfg.offset_magnitudes)
        ex["repetitions"] = str(cfg.repetitions)
        ex["jitter"] = ", ".join(f"{v:g}" for v in cfg.jitter)
        ex["steps"] = str(cfg.steps)
        sp = cfg.spiral
        cp["spiral"] = {"r_start": f"{sp.r_start:g}", "r_end": f"{sp.r_end:g}",
                        "laps": f"{sp.laps:g}", "direction": sp.direction}
        cp["press"] = {"force": f"{cfg.press.target_force:g}", "gain": f"{cfg.press.gain:g}"}
    if cfg.calibration_overrides:
        cp["calibration"] = dict(cfg.calibration_overrides)
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# success matrix


def row_label(enabled: Sequence[bool], magnitude: Optional[Sequence[float]] = None) -> str:
    flags = " ".join("✓" if e else "-" for e in enabled)
    if magnitude is None:
        return flags
    return "(±{:g},±{:g},±{:g}) {}".format(*magnitude, flags)


@dataclass
class SuccessMatrix:
    """Successes per row (lock pattern, per magnitude block) and sign column."""

    labels: List[str]
    successes: np.ndarray
    repetitions: int
    columns: Tuple[str, ...] = COLUMNS

    def __post_init__(self):
        self.successes = np.asarray(self.successes, dtype=int).reshape(len(self.labels), len(self.columns))
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if (self.successes < 0).any() or (self.successes > self.repetitions).any():
            raise ValueError("cell counts must lie in [0, repetitions]")

    def cell(self, row: int, col: str) -> str:
        return f"{self.successes[row, self.columns.index(col)]}/{self.repetitions}"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row", *self.columns])
        for i, lab in enumerate(self.labels):
            w.writerow([lab, *(self.cell(i, c) for c in self.columns)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "SuccessMatrix":
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], rows[1:]
        cols = tuple(header[1:])
        labels, counts, reps = [], [], set()
        for r in body:
            labels.append(r[0])
            cells = [c.split("/") for c in r[1:]]
            counts.append([int(k) for k, _ in cells])
            reps.update(int(n) for _, n in cells)
        if len(reps) > 1:
            raise ValueError("mixed repetition counts")
        return cls(labels, np.array(counts), reps.pop() if reps else 1, cols)


def render_matrix(m: SuccessMatrix) -> str:
    """Fixed-width text table in the paper's column order."""
    lw = max([len("x y z yaw")] + [len(lab) for lab in m.labels])
    cw = max(5, len(f"{m.repetitions}/{m.repetitions}"))
    head = "x y z yaw".rjust(lw) + " | " + " ".join(c.center(cw) for c in m.columns)
    lines = [head, "-" * len(head)]
    for i, lab in enumerate(m.labels):
        lines.append(lab.rjust(lw) + " | " + " ".join(m.cell(i, c).center(cw) for c in m.columns))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# running


@dataclass(frozen=True)
class TrialKey:
    block: int   # magnitude index
    row: int     # lock-pattern index
    col: int
    rep: int


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    matrix: Optional[SuccessMatrix]
    trials: List[Tuple[TrialKey, TrialSpec, Dict[str, object]]] = field(default_factory=list)
    plunge: List[Tuple[str, str, str, int]] = field(default_factory=list)

    @property
    def tallies(self) -> Dict[str, int]:
        out = {s: 0 for s in (*STATUSES, ERROR)}
        for _, _, summ in self.trials:
            out[summ["status"]] += 1
        return out

    @property
    def completed(self) -> bool:
        """Every trial produced a status (success or not)."""
        if self.config.scenario == "plunge-sweep":
            return all(lim is not None for *_, lim in self.plunge)
        return self.tallies[ERROR] == 0 and len(self.trials) == self.config.n_trials


def trial_seed(seed: int, block: int, col: int, rep: int) -> int:
    """Jitter seed of one cell repetition; shared by every lock row of the block."""
    return int(np.random.SeedSequence([seed, block, col, rep]).generate_state(1)[0])


def trial_specs(cfg: ExperimentConfig) -> List[Tuple[TrialKey, TrialSpec]]:
    out = []
    for b, mag in enumerate(cfg.offset_magnitudes):
        for r, enabled in enumerate(cfg.lock_patterns):
            locks = tuple(not e for e in enabled)
            for c, signs in enumerate(SIGNS):
                offs = tuple(float(s * m) for s, m in zip(signs, mag))
                for k in range(cfg.repetitions):
                    spec = TrialSpec(cfg.object, cfg.site, offs, locks, spiral=cfg.spiral,
                                     press=cfg.press, orientation=cfg.orientation,
                                     seed=trial_seed(cfg.seed, b, c, k), jitter=cfg.jitter,
                                     steps=cfg.steps, catalog_path=cfg.catalog_path,
                                     calibration_path=cfg.calibration_path,
                                     calibration_overrides=cfg.calibration_overrides)
                    if cfg.jitter == (0.0, 0.0):
                        # identical repetitions: let them share one simulation
                        spec = replace(spec, seed=0)
                    out.append((TrialKey(b, r, c, k), spec))
    return out


def _work(spec: TrialSpec, keep_trace: bool) -> Tuple[Dict[str, object], Optional[TrialOutcome]]:
    """Summary of one trial, plus the full outcome when traces are kept."""
    try:
        out = run_trial(spec)
    except Exception as exc:  # any escape is reported, never fatal for the batch
        return ({"status": ERROR, "success_time": None, "max_force": 0.0, "steps": 0,
                 "message": f"{type(exc).__name__}: {exc}", "offsets": list(spec.offsets)}, None)
    return out.summary(), (out if keep_trace else None)


def _run_unique(specs: Sequence[TrialSpec], workers: int, keep_trace: bool):
    unique = list(dict.fromkeys(specs))
    if workers > 1 and len(unique) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outs = list(pool.map(_work, unique, [keep_trace] * len(unique), chunksize=1))
    else:
        outs = [_work(s, keep_trace) for s in unique]
    return dict(zip(unique, outs))


def run_experiment(cfg: ExperimentConfig, progress=None) -> ExperimentResult:
    """Run every trial of ``cfg`` and write the report files if ``output_dir`` is set."""
    if cfg.scenario == "plunge-sweep":
        res = _run_plunge(cfg)
    else:
        keyed = trial_specs(cfg)
        done = _run_unique([s for _, s in keyed], cfg.workers, cfg.traces)
        counts = np.zeros((len(cfg.offset_magnitudes) * len(cfg.lock_patterns), len(COLUMNS)), dtype=int)
        trials = []
        for key, spec in keyed:
            summ = done[spec][0]
            counts[key.block * len(cfg.lock_patterns) + key.row, key.col] += summ["status"] == "success"
            trials.append((key, spec, summ))
            if progress:
                progress(key, summ)
        multi = len(cfg.offset_magnitudes) > 1
        labels = [row_label(p, m if multi else None)
                  for m in cfg.offset_magnitudes for p in cfg.lock_patterns]
        res = ExperimentResult(cfg, SuccessMatrix(labels, counts, cfg.repetitions), trials)
        if cfg.output_dir:
            _write(res, done)
    return res


def _run_plunge(cfg: ExperimentConfig) -> ExperimentResult:
    cat = geo.load_catalog(cfg.catalog_path)
    cal = load_calibration(cfg.calibration_path, **dict(cfg.calibration_overrides))
    rows = []
    for o, s in cfg.pairs:
        obj, site = cat.object(o), cat.site(s)
        for enabled in cfg.lock_patterns:
            comp = (cal.compliance.with_grip_width(cat.grip_widths.get(o, 0.0))
                    .with_locks(**{a: not e for a, e in zip(AXES, enabled)}))
            lim = plunge_sweep(obj, site, comp, max_yaw=cfg.max_yaw, calibration=cal)
            rows.append((o, s, pattern_text(enabled), lim))
    res = ExperimentResult(cfg, None, plunge=rows)
    if cfg.output_dir:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "plunge.csv").write_text(render_plunge_csv(rows))
        (out / "config.ini").write_text(config_text(cfg))
    return res


def render_plunge_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["object", "site", "enabled_xyz_yaw", "limit_deg"])
    w.writerows(rows)
    return buf.getvalue()


TRIAL_FIELDS = ("block", "pattern", "column", "rep", "seed", "dx", "dy", "dyaw", "status",
                "success_time", "max_force", "steps", "message")


def trials_csv(res: ExperimentResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRIAL_FIELDS)
    for key, spec, s in res.trials:
        dx, dy, dyaw = s["offsets"]
        st = s["success_time"]
        w.writerow([key.block, pattern_text(res.config.lock_patterns[key.row]), COLUMNS[key.col],
                    key.rep, spec.seed, f"{dx:.6f}", f"{dy:.6f}", f"{dyaw:.6f}", s["status"],
                    "" if st is None else f"{st:.6f}", f"{s['max_force']:.6f}", s["steps"],
                    s["message"]])
    return buf.getvalue()


def tally_text(res: ExperimentResult) -> str:
    t = res.tallies
    return "statuses: " + ", ".join(f"{k} {v}" for k, v in t.items()) + f" (total {sum(t.values())})\n"


def _write(res: ExperimentResult, done) -> None:
    cfg = res.config
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "matrix.txt").write_text(render_matrix(res.matrix) + tally_text(res))
    (out / "matrix.csv").write_text(res.matrix.to_csv())
    (out / "trials.csv").write_text(trials_csv(res))
    (out / "config.ini").write_text(config_text(cfg))
    (out / "summary.json").write_text(json.dumps(
        {"scenario": cfg.scenario, "trials": cfg.n_trials, "tallies": res.tallies,
         "completed": res.completed}, indent=2, sort_keys=True))
    if cfg.traces:
        tdir = out / "traces"
        tdir.mkdir(exist_ok=True)
        for key, spec, _ in res.trials:
            stem = f"b{key.block}_{pattern_text(cfg.lock_patterns[key.row])}_{COLUMNS[key.col]}_r{key.rep}"
            out = done[spec][1]
            if out is not None:
                write_trace_csv(out.trace, tdir / f"{stem}.csv")
                write_summary_json(out, tdir / f"{stem}.json", spec)
