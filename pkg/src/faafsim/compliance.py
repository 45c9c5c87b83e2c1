"""Passive finger compliance: per-axis force laws, stage energy, equilibrium.

Displacements are in mm for x, y, z and in degrees for yaw.  Energies are in
mJ (N*mm); for yaw the torque (N*mm) is integrated over radians.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

AXES = ("x", "y", "z", "yaw")
DEG = math.pi / 180.0


class NonConvergence(RuntimeError):
    """Equilibrium solve did not reach the residual tolerance."""


class Dropped(RuntimeError):
    """The grasped object left the hard-stop penalty band."""


# ---------------------------------------------------------------------------
# force-law terms (defined for s >= 0; laws extend them as odd functions)


@dataclass(frozen=True)
class Spring:
    """Linear spring engaged between ``start`` and ``stop`` (force saturates after)."""

    k: float
    start: float = 0.0
    stop: float = math.inf

    def force(self, s):
        return self.k * (min(max(s, self.start), self.stop) - self.start)

    def stiffness(self, s):
        return self.k if self.start < s < self.stop else 0.0

    def energy(self, s):
        if s <= self.start:
            return 0.0
        if s <= self.stop:
            return 0.5 * self.k * (s - self.start) ** 2
        span = self.stop - self.start
        return 0.5 * self.k * span * span + self.k * span * (s - self.stop)

    def knees(self):
        return tuple(v for v in (self.start, self.stop) if 0 < v < math.inf)


@dataclass(frozen=True)
class MagnetDecay:
    """Repelling-magnet preload ``peak * (1 + (s/shape)^2)^-2``.

    The ideal law jumps to ``peak`` at zero displacement; a linear ramp of
    width ``ramp`` keeps it continuous.
    """

    peak: float
    shape: float
    ramp: float

    def _decay(self, s):
        return self.peak / (1.0 + (s / self.shape) ** 2) ** 2

    def _prim(self, s):
        u = s / self.shape
        return self.peak * self.shape * 0.5 * (u / (1.0 + u * u) + math.atan(u))

    def force(self, s):
        if s < self.ramp:
            return self._decay(self.ramp) * s / self.ramp
        return self._decay(s)

    def stiffness(self, s):
        if s < self.ramp:
            return self._decay(self.ramp) / self.ramp
        u = s / self.shape
        return -4.0 * self.peak * u / (self.shape * (1.0 + u * u) ** 3)

    def energy(self, s):
        fr = self._decay(self.ramp)
        if s < self.ramp:
            return 0.5 * fr * s * s / self.ramp
        return 0.5 * fr * self.ramp + self._prim(s) - self._prim(self.ramp)

    def knees(self):
        return (self.ramp,)


@dataclass(frozen=True)
class PeakedTorque:
    """Magnet torque ``peak * (t/tp) * exp((1 - (t/tp)^2) / 2)``; maximum at ``tp``."""

    peak: float
    peak_at: float

    def force(self, s):
        u = s / self.peak_at
        return self.peak * u * math.exp(0.5 * (1.0 - u * u))

    def stiffness(self, s):
        u = s / self.peak_at
        return self.peak / self.peak_at * (1.0 - u * u) * math.exp(0.5 * (1.0 - u * u))

    def energy(self, s):
        u = s / self.peak_at
        return self.peak * self.peak_at * math.exp(0.5) * (1.0 - math.exp(-0.5 * u * u))

    def knees(self):
        return ()


@dataclass(frozen=True)
class MagnetConnector:
    """Gap-adjustable magnet pair; a wider gap weakens the peak."""

    gap: float
    peak_ref: float
    gap_ref: float
    gap_scale: float
    gap_range: Tuple[float, float]
    active_range: float
    decay_shape: float
    ramp: float = 0.1

    def __post_init__(self):
        lo, hi = self.gap_range
        if not lo <= self.gap <= hi:
            raise ValueError(f"magnet gap {self.gap} outside adjustable range {self.gap_range}")

    @property
    def peak(self) -> float:
        return self.peak_ref * ((self.gap_ref + self.gap_scale) / (self.gap + self.gap_scale)) ** 2

    def with_gap(self, gap: float) -> "MagnetConnector":
        return replace(self, gap=gap)


# ---------------------------------------------------------------------------
# axis laws


@dataclass(frozen=True)
class AxisLaw:
    """Odd, piecewise force-displacement law with a penalty hard stop past travel."""

    axis: str
    travel_limit: float
    segments: Tuple[object, ...]
    hard_stop_stiffness: float
    energy_scale: float = 1.0

    def force(self, s: float) -> float:
        a = abs(s)
        f = sum(seg.force(a) for seg in self.segments)
        if a > self.travel_limit:
            f += self.hard_stop_stiffness * (a - self.travel_limit)
        return math.copysign(f, s) if s != 0 else 0.0

    def stiffness(self, s: float) -> float:
        a = abs(s)
        k = sum(seg.stiffness(a) for seg in self.segments)
        if a > self.travel_limit:
            k += self.hard_stop_stiffness
        return k

    def energy(self, s: float) -> float:
        a = abs(s)
        e = sum(seg.energy(a) for seg in self.segments)
        if a > self.travel_limit:
            e += 0.5 * self.hard_stop_stiffness * (a - self.travel_limit) ** 2
        return self.energy_scale * e

    def knees(self) -> Tuple[float, ...]:
        ks = {self.travel_limit}
        for seg in self.segments:
            ks.update(seg.knees())
        return tuple(sorted(ks))

    def scaled(self, factor: float) -> "AxisLaw":
        return replace(self, segments=tuple(_scale_segment(s, factor) for s in self.segments))


def _scale_segment(seg, f):
    if isinstance(seg, Spring):
        return replace(seg, k=seg.k * f)
    if isinstance(seg, (MagnetDecay, PeakedTorque)):
        return replace(seg, peak=seg.peak * f)
    raise TypeError(seg)


@dataclass(frozen=True)
class TwistLaw:
    """Pseudo-yaw from the two fingers sliding oppositely along x.

    Fingers sit ``grip_width`` apart, so a twist of ``psi`` slides each by
    ``grip_width/2 * psi`` and the torque is ``grip_width * F_x``.
    """

    x_law: AxisLaw
    grip_width: float
    axis: str = "twist"

    @property
    def travel_limit(self) -> float:
        return math.degrees(2.0 * self.x_law.travel_limit / self.grip_width)

    def _slide(self, deg):
        return 0.5 * self.grip_width * math.radians(deg)

    def force(self, deg: float) -> float:
        return self.grip_width * self.x_law.force(self._slide(deg))

    def stiffness(self, deg: float) -> float:
        # d torque / d degree
        return self.grip_width * self.x_law.stiffness(self._slide(deg)) * 0.5 * self.grip_width * DEG

    def energy(self, deg: float) -> float:
        return 2.0 * self.x_law.energy(self._slide(deg))


def reaction(law, s: float) -> float:
    """Restoring force (N) or torque (N*mm) of one axis at displacement ``s``."""
    if not math.isfinite(s):
        raise ValueError("displacement must be finite")
    return law.force(s)


# ---------------------------------------------------------------------------
# stage


@dataclass(frozen=True)
class ComplianceState:
    """Object displacement relative to the hand frame.

    ``dtwist`` is the extra yaw produced by the fingers sliding oppositely
    along x; the object's total yaw offset is ``dyaw + dtwist``.  ``dz_arm``
    is the vertical give of the arm and wrist, which only carries load when
    the finger's own z axis is locked.
    """

    dx: float = 0.0
    dy: float = 0.0
    dz: float = 0.0
    dyaw: float = 0.0
    dtwist: float = 0.0
    dz_arm: float = 0.0

    def as_array(self) -> np.ndarray:
        """Solver vector: the two vertical terms act in series and are summed."""
        return np.array([self.dx, self.dy, self.dz + self.dz_arm, self.dyaw, self.dtwist])

    @classmethod
    def from_array(cls, a, z_locked: bool = False) -> "ComplianceState":
        dx, dy, dz, dyaw, dtwist = (float(v) for v in a)
        if z_locked:
            return cls(dx, dy, 0.0, dyaw, dtwist, dz)
        return cls(dx, dy, dz, dyaw, dtwist)

    @property
    def total_yaw(self) -> float:
        return self.dyaw + self.dtwist


@dataclass(frozen=True)
class FingerCompliance:
    laws: Dict[str, AxisLaw]
    locks: Dict[str, bool] = field(default_factory=lambda: {a: False for a in AXES})
    gravity_bias: Tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    grip_width: float = 0.0
    drop_band: float = 0.5
    x_magnet: Optional[MagnetConnector] = None
    yaw_magnet: Optional[MagnetConnector] = None
    arm_stiffness: float = 100.0

    def locked(self, axis: str) -> bool:
        return bool(self.locks.get(axis, False))

    @property
    def twist_law(self) -> Optional[TwistLaw]:
        if self.grip_width <= 0 or self.locked("x"):
            return None
        return TwistLaw(self.laws["x"], self.grip_width)

    def free_mask(self) -> Tuple[bool, bool, bool, bool, bool]:
        """Solver coordinates that may move; the vertical one always can (arm give)."""
        return (not self.locked("x"), not self.locked("y"), True,
                not self.locked("yaw"), self.twist_law is not None)

    def state_from(self, q) -> ComplianceState:
        return ComplianceState.from_array(q, self.locked("z"))

    def with_locks(self, **locks: bool) -> "FingerCompliance":
        merged = dict(self.locks)
        for k, v in locks.items():
            if k not in AXES:
                raise ValueError(f"unknown axis {k!r}")
            merged[k] = bool(v)
        return replace(self, locks=merged)

    def with_lock_pattern(self, enabled: Sequence[bool]) -> "FingerCompliance":
        """``enabled`` lists x, y, z, yaw; False locks the axis."""
        return replace(self, locks={a: not bool(e) for a, e in zip(AXES, enabled)})

    def with_bias(self, bias) -> "FingerCompliance":
        return replace(self, gravity_bias=tuple(float(b) for b in bias))

    def with_grip_width(self, width: float) -> "FingerCompliance":
        return replace(self, grip_width=float(width))

    def travel_limits(self) -> Tuple[float, ...]:
        tw = self.twist_law
        return (self.laws["x"].travel_limit, self.laws["y"].travel_limit,
                self.laws["z"].travel_limit, self.laws["yaw"].travel_limit,
                tw.travel_limit if tw else math.inf)

    def within_band(self, state: ComplianceState) -> bool:
        tw = self.twist_law
        lim = self.travel_limits()
        vals = [state.dx, state.dy, state.dz, state.dyaw, state.dtwist]
        for i, (v, L) in enumerate(zip(vals, lim)):
            if i == 4:
                if tw is not None and abs(tw._slide(v)) > self.laws["x"].travel_limit + self.drop_band:
                    return False
                continue
            if abs(v) > L + self.drop_band:
                return False
        return True


def potential_energy(compliance: FingerCompliance, state: ComplianceState) -> float:
    """Stored energy (mJ) of the stage, including hard-stop and lock penalties."""
    total = 0.0
    vals = {"x": state.dx, "y": state.dy, "z": state.dz, "yaw": state.dyaw}
    for axis in AXES:
        law = compliance.laws[axis]
        s = vals[axis]
        if compliance.locked(axis):
            k = law.hard_stop_stiffness
            total += 0.5 * k * s * s * (law.energy_scale if axis == "yaw" else 1.0)
        else:
            total += law.energy(s)
    tw = compliance.twist_law
    if tw is not None:
        total += tw.energy(state.dtwist)
    elif state.dtwist != 0.0:
        x_law = compliance.laws["x"]
        slide = 0.5 * compliance.grip_width * math.radians(state.dtwist)
        total += x_law.hard_stop_stiffness * slide * slide
    total += 0.5 * compliance.arm_stiffness * state.dz_arm ** 2
    return total


# ---------------------------------------------------------------------------
# calibration


@dataclass(frozen=True)
class ContactParams:
    stiffness: float = 1000.0
    friction: float = 0.1
    smoothing: float = 0.01
    friction_smoothing: float = 0.002
    edge_friction: float = 0.45

    def friction_at(self, normal) -> float:
        """Coefficient for a contact with (unnormalised) normal ``normal``.

        Face-on-face support (vertical normal) uses ``friction``; a sharp
        edge on a bevel or wall (normal at 45 deg or flatter) uses
        ``edge_friction``; in between is linear in tan(tilt).
        """
        h = math.hypot(normal[0], normal[1])
        v = abs(normal[2])
        w = 1.0 if h >= v else h / v
        return self.friction + w * (self.edge_friction - self.friction)


@dataclass(frozen=True)
class Calibration:
    compliance: FingerCompliance
    contact: ContactParams
    abort_force: float
    stage_mass: float
    raw: Dict[str, Dict[str, str]] = field(default_factory=dict)
    source: str = ""

    def with_contact(self, **kw) -> "Calibration":
        return replace(self, contact=replace(self.contact, **kw))


def _floats(text: str) -> Tuple[float, ...]:
    return tuple(float(t) for t in text.split(","))


def build_laws(cp: configparser.ConfigParser, x_gap: Optional[float] = None,
               yaw_gap: Optional[float] = None):
    st = cp["stage"]
    k_hs = st.getfloat("hard_stop_stiffness")
    k_hs_yaw = st.getfloat("hard_stop_stiffness_yaw")
    pf = st.getfloat("parallel_factor", fallback=1.0)

    z = cp["z"]
    z_law = AxisLaw("z", z.getfloat("travel"), (Spring(z.getfloat("spring")),), k_hs)

    y = cp["y"]
    knee = y.getfloat("knee")
    y_law = AxisLaw("y", y.getfloat("travel"),
                    (Spring(y.getfloat("follow_spring"), 0.0, knee),
                     Spring(y.getfloat("main_spring"), knee)), k_hs)

    x = cp["x"]
    xmc = MagnetConnector(
        gap=x_gap if x_gap is not None else x.getfloat("mc_gap"),
        peak_ref=x.getfloat("mc_peak_ref"), gap_ref=x.getfloat("mc_gap_ref"),
        gap_scale=x.getfloat("mc_gap_scale"), gap_range=_floats(x.get("mc_gap_range")),
        active_range=x.getfloat("mc_active_range"), decay_shape=x.getfloat("mc_shape"),
        ramp=x.getfloat("mc_ramp"))
    x_law = AxisLaw("x", x.getfloat("travel"),
                    (MagnetDecay(xmc.peak, xmc.decay_shape, xmc.ramp),
                     Spring(x.getfloat("spring"), x.getfloat("spring_start"))), k_hs)

    w = cp["yaw"]
    peak_at = w.getfloat("peak_angle")
    ymc = MagnetConnector(
        gap=yaw_gap if yaw_gap is not None else w.getfloat("mc_gap"),
        peak_ref=w.getfloat("mc_peak_ref"), gap_ref=w.getfloat("mc_gap_ref"),
        gap_scale=w.getfloat("mc_gap_scale"), gap_range=_floats(w.get("mc_gap_range")),
        active_range=_peaked_active_range(peak_at), decay_shape=peak_at)
    yaw_law = AxisLaw("yaw", w.getfloat("travel"), (PeakedTorque(ymc.peak, peak_at),),
                      k_hs_yaw, energy_scale=DEG)

    laws = {"x": x_law, "y": y_law, "z": z_law, "yaw": yaw_law}
    if pf != 1.0:
        laws = {k: v.scaled(pf) for k, v in laws.items()}
    return laws, xmc, ymc


def _peaked_active_range(peak_at: float) -> float:
    """Angle beyond which the peaked torque stays under 1% of its maximum."""
    lo, hi = peak_at, 10 * peak_at
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        u = mid / peak_at
        if u * math.exp(0.5 * (1 - u * u)) > 0.01:
            lo = mid
        else:
            hi = mid
    return hi


def load_calibration(path: Optional[str | Path] = None, **overrides) -> Calibration:
    """Read the calibration file; ``overrides`` maps ``section.key`` to a value."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    if path is None:
        text = resources.files("faafsim.data").joinpath("calibration.ini").read_text()
        source = "faafsim/data/calibration.ini"
    else:
        text = Path(path).read_text()
        source = str(path)
    cp.read_string(text, source=source)
    for key, value in overrides.items():
        section, name = key.split(".", 1) if "." in key else key.split("__", 1)
        cp[section][name] = str(value)
    if cp.getint("calibration", "version") != 1:
        raise ValueError("unsupported calibration version")
    laws, xmc, ymc = build_laws(cp)
    st = cp["stage"]
    comp = FingerCompliance(laws=laws, drop_band=st.getfloat("drop_band"),
                            x_magnet=xmc, yaw_magnet=ymc,
                            arm_stiffness=st.getfloat("arm_stiffness"))
    c = cp["contact"]
    contact = ContactParams(c.getfloat("stiffness"), c.getfloat("friction"),
                            c.getfloat("smoothing"), c.getfloat("friction_smoothing"),
                            c.getfloat("edge_friction"))
    return Calibration(comp, contact, cp.getfloat("limits", "abort_force"),
                       st.getfloat("stage_mass"),
                       raw={s: dict(cp[s]) for s in cp.sections()}, source=source)


def default_compliance() -> FingerCompliance:
    return load_calibration().compliance


# ---------------------------------------------------------------------------
# equilibrium


def equilibrate(compliance: FingerCompliance, hand_pose, obj, site,
                warm_start: Optional[ComplianceState] = None, *, contact: Optional[ContactParams] = None,
                problem=None, memory=None, tol: float = 1e-6, max_iter: int = 10_000) -> ComplianceState:
    """Local minimiser of stage + contact (+ friction) energy for a commanded hand pose.

    Damped Newton descent with Armijo backtracking over the unlocked axes;
    locked axes stay exactly at zero.  Raises :class:`NonConvergence` if the
    generalised-force residual does not drop below ``tol`` and
    :class:`Dropped` if the solution leaves the penalty band.
    """
    from ._penalty import ContactProblem, solve

    if problem is None:
        problem = ContactProblem(obj, site, contact or ContactParams())
    if warm_start is None:
        warm_start = ComplianceState()
    if not compliance.within_band(warm_start):
        raise Dropped("warm start outside the penalty band")
    result = solve(problem, compliance, hand_pose, warm_start.as_array(), memory,
                   tol=tol, max_iter=max_iter)
    return compliance.state_from(result.q)
