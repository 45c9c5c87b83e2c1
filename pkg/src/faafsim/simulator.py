"""Quasi-static trial loop: approach, spiral search with force-regulated pressing, success detection."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import astuple, dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import geometry as geo
from ._penalty import ContactProblem, Stepper
from .compliance import (AXES, Calibration, Dropped, FingerCompliance,
                         NonConvergence, load_calibration)
from .geometry import CrossSection, PlanarPose, TargetSite
from .trajectory import PressController, SpiralParams, grasp_frame, press_step, spiral_point

DEG = math.pi / 180.0

STATUSES = ("success", "no-insertion", "dropped", "force-abort", "numerical-failure")

# pressing force used when a plunge is not given one explicitly
PRESS_DEFAULTS = {"square_prism": 11.0, "triangle_prism": 12.0,
                  "wellplate_lid": 8.0, "petri_lid": 8.0}

SUCCESS_TOL = 0.05


@lru_cache(maxsize=8)
def _catalog(path: Optional[str]):
    return geo.load_catalog(path)


@lru_cache(maxsize=8)
def _calibration(path: Optional[str], overrides: Tuple[Tuple[str, str], ...]) -> Calibration:
    return load_calibration(path, **dict(overrides))


@dataclass(frozen=True)
class TrialSpec:
    object: str
    site: str
    offsets: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    axis_locks: Tuple[bool, bool, bool, bool] = (False, False, False, False)
    spiral: SpiralParams = SpiralParams(5.0, 18.0, 12)
    press: PressController = PressController(11.0)
    orientation: str = "vertical"
    seed: int = 0
    jitter: Tuple[float, float] = (0.0, 0.0)
    steps: int = 2000
    approach_height: float = 5.0
    approach_step: float = 0.2
    contact_threshold: float = 0.5
    stage_mass: Optional[float] = None
    opening_growth: float = 0.0
    catalog_path: Optional[str] = None
    calibration_path: Optional[str] = None
    calibration_overrides: Tuple[Tuple[str, str], ...] = ()

    def __post_init__(self):
        dx, dy, dyaw = self.offsets
        if abs(dx) > 20 or abs(dy) > 20 or abs(dyaw) > 30:
            raise ValueError("offsets must be within +-20 mm / +-30 deg")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.orientation not in ("vertical", "lateral"):
            raise ValueError(f"unknown orientation {self.orientation!r}")
        cat = _catalog(self.catalog_path)
        cat.object(self.object)
        cat.site(self.site)


@dataclass
class SimTrace:
    """Per-step records; approach steps carry t <= 0, spiral steps t > 0."""

    t: List[float] = field(default_factory=list)
    phase: List[str] = field(default_factory=list)
    hand: List[Tuple[float, float, float, float]] = field(default_factory=list)
    obj: List[Tuple[float, float, float, float]] = field(default_factory=list)
    state: List[Tuple[float, ...]] = field(default_factory=list)
    n_contacts: List[int] = field(default_factory=list)
    wrench: List[Tuple[float, float, float, float]] = field(default_factory=list)
    residual: List[float] = field(default_factory=list)
    penetration: List[float] = field(default_factory=list)
    success: List[bool] = field(default_factory=list)

    def __len__(self):
        return len(self.t)

    def append(self, t, phase, hand, obj, q, n, wrench, residual, pen, ok):
        self.t.append(float(t))
        self.phase.append(phase)
        self.hand.append(tuple(float(v) for v in hand))
        self.obj.append(tuple(float(v) for v in obj))
        self.state.append(tuple(float(v) for v in q))
        self.n_contacts.append(int(n))
        self.wrench.append(tuple(float(v) for v in wrench))
        self.residual.append(float(residual))
        self.penetration.append(float(pen))
        self.success.append(bool(ok))

    def retime(self, n_first: int, dt: float):
        """Give the first ``n_first`` records times (k - n_first + 1) * dt."""
        for k in range(n_first):
            self.t[k] = (k - n_first + 1) * dt

    def columns(self) -> List[str]:
        return ["t", "phase", "hand_x", "hand_y", "hand_z", "hand_yaw", "obj_x", "obj_y", "obj_z",
                "obj_yaw", "dx", "dy", "dz", "dyaw", "dtwist", "dz_arm", "n_contacts", "fx", "fy", "fz", "tz",
                "residual", "penetration", "success"]

    def rows(self):
        for k in range(len(self.t)):
            yield [self.t[k], self.phase[k], *self.hand[k], *self.obj[k], *self.state[k],
                   self.n_contacts[k], *self.wrench[k], self.residual[k], self.penetration[k],
                   int(self.success[k])]


@dataclass
class TrialOutcome:
    status: str
    success_time: Optional[float]
    max_force: float
    trace: SimTrace
    message: str = ""
    offsets: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    @property
    def succeeded(self) -> bool:
        return self.status == "success"

    def summary(self) -> Dict[str, object]:
        return {"status": self.status, "success_time": self.success_time,
                "max_force": self.max_force, "steps": len(self.trace), "message": self.message,
                "offsets": list(self.offsets)}


# ---------------------------------------------------------------------------
# shared helpers


def grown_site(site: TargetSite, growth: float) -> TargetSite:
    """Same site with the aperture enlarged by ``growth`` mm per side."""
    if growth == 0.0:
        return site
    op = site.opening
    if site.sense == "rim":
        # the seat shrinks so the lid has more room
        growth = -growth
    if op.is_circle:
        new = CrossSection.circle(op.radius + growth, name=op.name)
    else:
        n, d = op.half_planes()
        new = CrossSection("polygon", tuple(map(tuple, geo._offset_polygon(n, d, growth))),
                           name=op.name)
    return replace(site, opening=new)


def object_pose(hand, q) -> PlanarPose:
    c, s = math.cos(hand[3] * DEG), math.sin(hand[3] * DEG)
    return PlanarPose(hand[0] + c * q[0] - s * q[1], hand[1] + s * q[0] + c * q[1],
                      hand[2] + q[2], hand[3] + q[3] + q[4])


def inserted(obj: CrossSection, site: TargetSite, pose: PlanarPose) -> bool:
    """Bottom below the chamfer band (or the rim lead-in) and inside the aperture."""
    if pose.z > site.band_bottom + 1e-9:
        return False
    return geo.contains_at(obj, site, pose, tol=SUCCESS_TOL)


class _Run:
    """State of one simulated trial."""

    def __init__(self, obj, site, compliance: FingerCompliance, cal: Calibration, press,
                 friction=True):
        self.obj, self.site, self.press = obj, site, press
        self.abort_force = cal.abort_force
        self.stepper = Stepper(ContactProblem(obj, site, cal.contact), compliance,
                               friction=friction)
        self.q = np.zeros(5)
        self.trace = SimTrace()
        self.max_force = 0.0
        self.fz = 0.0

    def step(self, t, phase, hand):
        hand = np.asarray(hand, dtype=float)
        self.q = self.stepper.solve(hand, self.q)
        g, gc, X, pen, gdir = self.stepper.inspect(hand, self.q)
        self.stepper.commit(X, pen, gdir)
        self.fz = max(0.0, -gc[2])
        self.max_force = max(self.max_force, self.fz)
        pose = object_pose(hand, self.q)
        ok = inserted(self.obj, self.site, pose)
        free = self.stepper.free
        residual = float(np.max(np.abs(g[free]))) if free.any() else 0.0
        wrench = (-gc[0], -gc[1], -gc[2], -(gc[3]) / DEG)
        st = self.stepper.compliance.state_from(self.q)
        self.trace.append(t, phase, hand, pose.as_tuple(), astuple(st), int((pen > 0).sum()), wrench,
                          residual, max(0.0, float(pen.max())), ok)
        return ok


def _resolve(spec: TrialSpec):
    cat = _catalog(spec.catalog_path)
    cal = _calibration(spec.calibration_path, spec.calibration_overrides)
    obj = cat.object(spec.object)
    site = grown_site(cat.site(spec.site), spec.opening_growth)
    mass = cal.stage_mass if spec.stage_mass is None else spec.stage_mass
    frame = grasp_frame(spec.orientation, mass)
    locks = dict(zip(AXES, spec.axis_locks))
    comp = (cal.compliance.with_grip_width(cat.grip_widths.get(spec.object, 0.0))
            .with_locks(**locks).with_bias(frame.bias))
    return obj, site, comp, cal


def trial_offsets(spec: TrialSpec) -> Tuple[float, float, float]:
    dx, dy, dyaw = spec.offsets
    sd_mm, sd_deg = spec.jitter
    if sd_mm > 0 or sd_deg > 0:
        rng = np.random.default_rng(spec.seed)
        ex, ey, ew = rng.normal(size=3)
        dx, dy, dyaw = dx + sd_mm * ex, dy + sd_mm * ey, dyaw + sd_deg * ew
    return float(dx), float(dy), float(dyaw)


def run_trial(spec: TrialSpec, record_every: int = 1) -> TrialOutcome:
    """Simulate one insertion attempt; never raises for physical or numerical failure."""
    obj, site, comp, cal = _resolve(spec)
    dx, dy, dyaw = trial_offsets(spec)
    spiral = replace(spec.spiral, offset=(dx, dy))
    run = _Run(obj, site, comp, cal, spec.press)
    dt = spiral.duration / spec.steps

    x0, y0 = spiral_point(0.0, spiral)
    hz = site.top + spec.approach_height
    status, success_time, message = "no-insertion", None, ""
    n_app = 0
    try:
        # descend until the contact force crosses the threshold
        max_app = int(math.ceil((spec.approach_height + site.top + 5.0) / spec.approach_step))
        done = False
        for _ in range(max_app):
            hz -= spec.approach_step
            n_app += 1
            ok = run.step(0.0, "approach", (x0, y0, hz, dyaw))
            if ok:
                status, success_time, done = "success", 0.0, True
                break
            if run.fz > run.abort_force:
                status, message, done = "force-abort", f"force {run.fz:.2f} N", True
                break
            if run.fz > spec.contact_threshold:
                break
        run.trace.retime(n_app, dt)
        n_app = 0
        if not done:
            for i in range(1, spec.steps + 1):
                t = i * dt if i < spec.steps else spiral.duration
                x, y = spiral_point(t, spiral)
                hz += press_step(run.fz, spec.press)
                ok = run.step(t, "spiral", (x, y, hz, dyaw))
                if ok:
                    status, success_time = "success", t
                    break
                if run.fz > run.abort_force:
                    status, message = "force-abort", f"force {run.fz:.2f} N"
                    break
    except Dropped as exc:
        status, message = "dropped", str(exc)
    except NonConvergence as exc:
        status, message = "numerical-failure", str(exc)
    if n_app:
        # failed during the approach
        run.trace.retime(len(run.trace), dt)
    return TrialOutcome(status, success_time, run.max_force, run.trace, message, (dx, dy, dyaw))


# ---------------------------------------------------------------------------
# plunge


def run_plunge(obj: CrossSection, site: TargetSite, yaw: float,
               compliance: Optional[FingerCompliance] = None, *, press_force: Optional[float] = None,
               calibration: Optional[Calibration] = None, steps: int = 200,
               x: float = 0.0, y: float = 0.0, friction: bool = True) -> bool:
    """Straight centred descent at a fixed yaw under force control, no spiral."""
    cal = calibration or _calibration(None, ())
    if compliance is None:
        compliance = cal.compliance
    if compliance.grip_width <= 0:
        compliance = compliance.with_grip_width(_catalog(None).grip_widths.get(obj.name, 0.0))
    force = press_force or PRESS_DEFAULTS.get(obj.name, 10.0)
    press = PressController(force)
    run = _Run(obj, site, compliance, cal, press, friction=friction)
    hz = site.top + 5.0
    approach = True
    try:
        for _ in range(steps):
            if approach:
                hz -= 0.2
            else:
                hz += press_step(run.fz, press)
            if run.step(0.0, "plunge", (x, y, hz, yaw)):
                return True
            if run.fz > 0.5:
                approach = False
            if run.fz > run.abort_force:
                return False
    except (Dropped, NonConvergence):
        return False
    return False


def plunge_sweep(obj: CrossSection, site: TargetSite, compliance: Optional[FingerCompliance] = None,
                 max_yaw: int = 20, **kwargs) -> int:
    """Largest whole-degree yaw reached by consecutive successful plunges from 0."""
    limit = -1
    for deg in range(0, max_yaw + 1):
        if not run_plunge(obj, site, float(deg), compliance, **kwargs):
            break
        limit = deg
    return limit


# ---------------------------------------------------------------------------
# export


def write_trace_csv(trace: SimTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(trace.columns())
        for row in trace.rows():
            w.writerow([f"{v:.9g}" if isinstance(v, float) else v for v in row])


def write_summary_json(outcome: TrialOutcome, path, spec: Optional[TrialSpec] = None) -> None:
    data = outcome.summary()
    if spec is not None:
        data["spec"] = {"object": spec.object, "site": spec.site, "offsets": list(spec.offsets),
                        "axis_locks": list(spec.axis_locks), "orientation": spec.orientation,
                        "seed": spec.seed, "direction": spec.spiral.direction}
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True))
