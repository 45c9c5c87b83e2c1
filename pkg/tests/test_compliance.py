import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from faafsim import geometry as geo
from faafsim.compliance import (AXES, DEG, ComplianceState, Dropped, build_laws, equilibrate,
                                load_calibration, potential_energy, reaction)
from faafsim.geometry import PlanarPose
from faafsim._penalty import ContactProblem, Stepper

CAL = load_calibration()
COMP = CAL.compliance
LAWS = COMP.laws
CAT = geo.load_catalog()
SQ, SQ_BASE = CAT.object("square_prism"), CAT.site("square_base")


def state(axis, s):
    return ComplianceState(**{f"d{axis}": s})


def test_shipped_constants():
    assert [LAWS[a].travel_limit for a in AXES] == [10.0, 13.5, 5.0, 20.0]
    assert LAWS["z"].hard_stop_stiffness == 100.0


def test_reaction_examples():
    assert reaction(LAWS["z"], 3.0) == pytest.approx(0.45)
    assert reaction(LAWS["y"], 0.0) == 0.0
    assert reaction(LAWS["y"], 8.0) == pytest.approx(0.75 + 0.67 * 3)
    # continuous at the y knee
    assert reaction(LAWS["y"], 5.0 - 1e-9) == pytest.approx(0.75)
    assert reaction(LAWS["y"], 5.0 + 1e-9) == pytest.approx(0.75)


def test_x_spring_beyond_five_mm():
    tail = LAWS["x"].segments[0].force(7.0)
    assert reaction(LAWS["x"], 7.0) == pytest.approx(tail + 0.78 * 2.0)


def test_yaw_peak_near_fourteen_degrees():
    s = np.linspace(0.0, 20.0, 20001)
    f = [reaction(LAWS["yaw"], v) for v in s]
    assert s[int(np.argmax(f))] == pytest.approx(14.0, abs=1e-3)


def test_hard_stop_beyond_travel():
    assert reaction(LAWS["z"], 6.0) == pytest.approx(0.15 * 6.0 + 100.0 * 1.0)


def test_reaction_rejects_nonfinite():
    with pytest.raises(ValueError):
        reaction(LAWS["z"], math.nan)


@pytest.mark.parametrize("axis", AXES)
@settings(max_examples=200, deadline=None)
@given(s=st.floats(-25.0, 25.0))
def test_odd_symmetry(axis, s):
    assert reaction(LAWS[axis], -s) == -reaction(LAWS[axis], s)


@pytest.mark.parametrize("axis", AXES)
def test_continuity_and_sign(axis):
    law = LAWS[axis]
    s = np.arange(0.0, law.travel_limit, 1e-3)
    f = np.array([reaction(law, v) for v in s])
    # no jumps: a 1e-3 step changes the force by at most the steepest slope times the step
    kmax = max(law.stiffness(v) for v in s[::50]) + 1.0
    assert np.max(np.abs(np.diff(f))) < kmax * 2e-3 + 1e-9
    assert np.all(f >= 0.0)


def test_magnet_small_beyond_active_range():
    xmc = COMP.x_magnet
    seg = LAWS["x"].segments[0]
    assert seg.force(xmc.active_range) <= 0.01 * xmc.peak
    ymc = COMP.yaw_magnet
    peaked = LAWS["yaw"].segments[0]
    assert peaked.force(ymc.active_range) <= 0.01 * ymc.peak * (1 + 1e-9)


@pytest.mark.parametrize("which,lo,hi", [("x", 0.5, 3.0), ("yaw", 1.0, 5.0)])
def test_gap_monotonicity(which, lo, hi):
    import configparser
    from importlib import resources

    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.read_string(resources.files("faafsim.data").joinpath("calibration.ini").read_text())
    peaks = []
    for g in np.linspace(lo, hi, 11):
        laws, xmc, ymc = build_laws(cp, **({"x_gap": g} if which == "x" else {"yaw_gap": g}))
        mc = xmc if which == "x" else ymc
        seg = laws[which].segments[0]
        peaks.append(mc.peak)
        if which == "yaw":
            assert seg.force(14.0) == pytest.approx(mc.peak)
    assert all(a > b for a, b in zip(peaks, peaks[1:]))


def test_magnet_gap_outside_range_rejected():
    with pytest.raises(ValueError):
        COMP.x_magnet.with_gap(3.5)


# ---------------------------------------------------------------- energy


def test_energy_examples():
    assert potential_energy(COMP, ComplianceState()) == 0.0
    assert potential_energy(COMP, state("z", 5.0)) == pytest.approx(0.5 * 0.15 * 25)


@pytest.mark.parametrize("axis", AXES)
def test_energy_gradient_matches_reaction(axis):
    law = LAWS[axis]
    rng = np.random.default_rng(3)
    knees = np.array(law.knees())
    pts = []
    while len(pts) < 200:
        s = rng.uniform(-1.3 * law.travel_limit, 1.3 * law.travel_limit)
        if np.min(np.abs(abs(s) - knees)) > 1e-3 and abs(s) > 1e-3:
            pts.append(s)
    scale = DEG if axis == "yaw" else 1.0
    for s in pts:
        h = 1e-6 * max(1.0, abs(s))
        fd = (potential_energy(COMP, state(axis, s + h)) - potential_energy(COMP, state(axis, s - h))) / (2 * h)
        want = reaction(law, s) * scale
        assert abs(fd - want) <= 1e-6 * max(1.0, abs(want))


def test_locked_axis_penalty_energy():
    locked = COMP.with_locks(y=True)
    assert potential_energy(locked, state("y", 0.1)) == pytest.approx(0.5 * 100.0 * 0.01)


# ---------------------------------------------------------------- equilibrate


def test_zero_wrench_gives_zero_state():
    hand = PlanarPose(0.0, 0.0, SQ_BASE.top + 3.0, 0.0)
    st_ = equilibrate(COMP, hand, SQ, SQ_BASE)
    assert st_ == ComplianceState()


def test_locked_axes_stay_zero_under_load():
    comp = COMP.with_locks(x=True, y=True, z=True, yaw=True)
    hand = PlanarPose(6.0, 3.0, SQ_BASE.top - 0.5, 4.0)
    st_ = equilibrate(comp, hand, SQ, SQ_BASE, contact=CAL.contact)
    assert (st_.dx, st_.dy, st_.dz, st_.dyaw, st_.dtwist) == (0.0, 0.0, 0.0, 0.0, 0.0)
    # the arm alone gives way vertically
    assert st_.dz_arm > 0.0


def test_table_contact_force_balance():
    """Pressing onto the table: z-law reaction equals the summed contact force."""
    comp = COMP.with_locks(x=True, y=True, yaw=True)
    problem = ContactProblem(SQ, SQ_BASE, CAL.contact)
    hand = np.array([14.0, 0.0, SQ_BASE.top - 5.02, 0.0])
    stp = Stepper(problem, comp, friction=False)
    q = stp.solve(hand, np.zeros(5))
    g, gc, X, pen, gdir = stp.inspect(hand, q)
    fz = -gc[2]
    assert fz > 0.75  # more than the z spring holds in travel
    dz = q[2]
    assert dz > 5.0  # pushed into the hard stop
    assert reaction(LAWS["z"], dz) == pytest.approx(fz, abs=1e-6)


def test_warm_start_independence():
    comp = COMP.with_grip_width(19.6)
    hand = PlanarPose(1.6, 0.8, SQ_BASE.top - 0.6, 3.0)
    ref = equilibrate(comp, hand, SQ, SQ_BASE, contact=CAL.contact).as_array()
    rng = np.random.default_rng(11)
    for _ in range(10):
        w = ref + rng.uniform(-1, 1, len(ref))
        got = equilibrate(comp, hand, SQ, SQ_BASE, ComplianceState.from_array(w[:5]),
                          contact=CAL.contact).as_array()
        assert np.max(np.abs(got - ref)) < 1e-4


def test_warm_start_outside_band_drops():
    with pytest.raises(Dropped):
        equilibrate(COMP, PlanarPose(0, 0, 30, 0), SQ, SQ_BASE, ComplianceState(dy=20.0))


def test_parallel_factor_scales_laws():
    cal2 = load_calibration(**{"stage.parallel_factor": "2.0"})
    assert reaction(cal2.compliance.laws["z"], 3.0) == pytest.approx(0.9)


def test_friction_coefficient_by_normal():
    c = CAL.contact
    assert c.friction_at((0, 0, 1)) == pytest.approx(c.friction)
    assert c.friction_at((1, 0, 1)) == pytest.approx(c.edge_friction)
    assert c.friction_at((1, 0, 0)) == pytest.approx(c.edge_friction)
