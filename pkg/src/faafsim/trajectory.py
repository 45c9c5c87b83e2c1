"""Commanded hand motion: Archimedean spiral search, force-regulated pressing, grasp frames."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

GRAVITY = 9.80665
MAX_PRESS_STEP = 0.2


@dataclass(frozen=True)
class SpiralParams:
    r_start: float
    r_end: float
    laps: float
    duration: float = 1.0
    offset: Tuple[float, float] = (0.0, 0.0)
    direction: str = "ccw"
    z_ref: float = 0.0

    def __post_init__(self):
        if self.r_start < 0 or self.r_end < 0:
            raise ValueError("spiral radii must be >= 0")
        if self.laps < 1:
            raise ValueError("laps must be >= 1")
        if not self.duration > 0:
            raise ValueError("duration must be > 0")
        if self.direction not in ("ccw", "cw"):
            raise ValueError("direction must be 'ccw' or 'cw'")

    @property
    def sign(self) -> float:
        return 1.0 if self.direction == "ccw" else -1.0

    def radius(self, t: float) -> float:
        return (self.r_start - self.r_end) * ((self.duration - t) / self.duration) + self.r_end


def spiral_point(t: float, p: SpiralParams) -> Tuple[float, float]:
    """Hand (x, y) at time ``t`` in [0, duration].

    A cw path is the y-mirror of the ccw path with the same parameters.
    """
    if not 0.0 <= t <= p.duration:
        raise ValueError(f"t={t} outside [0, {p.duration}]")
    r = p.radius(t)
    phase = 2.0 * math.pi * p.laps * t / p.duration
    return r * math.cos(phase) + p.offset[0], p.sign * r * math.sin(phase) + p.offset[1]


def spiral_path(p: SpiralParams, steps: int) -> np.ndarray:
    """``steps + 1`` samples from t = 0 to t = duration (inclusive)."""
    ts = np.linspace(0.0, p.duration, steps + 1)
    return np.array([spiral_point(float(t), p) for t in ts])


@dataclass(frozen=True)
class PressController:
    """Proportional vertical-force regulator acting on the commanded hand height."""

    target_force: float
    gain: float = 0.02
    force_deadband: float = 0.0
    max_step: float = MAX_PRESS_STEP

    def __post_init__(self):
        if not self.target_force > 0:
            raise ValueError("target_force must be > 0")
        if not self.gain > 0:
            raise ValueError("gain must be > 0")
        if self.force_deadband < 0:
            raise ValueError("force_deadband must be >= 0")


def press_step(current_force: float, ctrl: PressController) -> float:
    """Hand z correction (mm): negative descends, positive retreats."""
    if current_force < 0:
        raise ValueError("current_force must be >= 0")
    err = current_force - ctrl.target_force
    if abs(err) <= ctrl.force_deadband:
        return 0.0
    return min(ctrl.max_step, max(-ctrl.max_step, ctrl.gain * err))


@dataclass(frozen=True)
class GraspFrame:
    """How the finger stage sits relative to gravity.

    ``bias`` is the constant load (x, y, z in N; yaw in N*mm) that gravity
    puts on the passive stage, expressed in finger axes.
    """

    orientation: str
    bias: Tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    axis_map: Tuple[str, str, str, str] = ("x", "y", "z", "yaw")


def grasp_frame(orientation: str, stage_mass: float = 0.02) -> GraspFrame:
    """Vertical grasps carry no stage bias (the z spring is preloaded by design).

    In a lateral grasp the finger x axis points along gravity, so the moving
    stage's weight pulls it toward -x.
    """
    if orientation == "vertical":
        return GraspFrame("vertical")
    if orientation == "lateral":
        if stage_mass < 0:
            raise ValueError("stage_mass must be >= 0")
        return GraspFrame("lateral", (-stage_mass * GRAVITY, 0.0, 0.0, 0.0),
                          ("gravity", "y", "z", "yaw"))
    raise ValueError(f"unknown orientation {orientation!r}")
