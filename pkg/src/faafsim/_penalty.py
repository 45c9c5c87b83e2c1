"""Compiled energy kernel and Newton solver for the stage + contact equilibrium.

Generalised coordinates ``q = (dx, dy, dz, dyaw, dtwist)`` in mm and degrees.
Contact witnesses are footprint vertices (hole sites) or seat vertices seen
from the lid (rim sites); each one carries a smooth penetration measure
``D(X)`` against the chamfered aperture and a quadratic penalty energy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .geometry import CrossSection, TargetSite

DEG = math.pi / 180.0

SEG_SPRING, SEG_MAGNET, SEG_PEAKED = 0, 1, 2
MAX_SEG = 3

OK, NONCONVERGED = 0, 1


# ---------------------------------------------------------------------------
# stage laws


@njit(cache=True)
def _seg_eval(kind, p1, p2, p3, a):
    """(force, stiffness, energy) of one law term at a >= 0."""
    if kind == SEG_SPRING:
        k, start, stop = p1, p2, p3
        if a <= start:
            return 0.0, 0.0, 0.0
        if a <= stop:
            return k * (a - start), k, 0.5 * k * (a - start) ** 2
        span = stop - start
        return k * span, 0.0, 0.5 * k * span * span + k * span * (a - stop)
    if kind == SEG_MAGNET:
        peak, shape, ramp = p1, p2, p3
        ur = ramp / shape
        fr = peak / (1.0 + ur * ur) ** 2
        if a < ramp:
            return fr * a / ramp, fr / ramp, 0.5 * fr * a * a / ramp
        u = a / shape
        den = 1.0 + u * u
        f = peak / den ** 2
        k = -4.0 * peak * u / (shape * den ** 3)
        prim_a = peak * shape * 0.5 * (u / den + math.atan(u))
        prim_r = peak * shape * 0.5 * (ur / (1.0 + ur * ur) + math.atan(ur))
        return f, k, 0.5 * fr * ramp + prim_a - prim_r
    # peaked torque
    peak, tp = p1, p2
    u = a / tp
    ex = math.exp(0.5 * (1.0 - u * u))
    return (peak * u * ex, peak / tp * (1.0 - u * u) * ex,
            peak * tp * math.exp(0.5) * (1.0 - math.exp(-0.5 * u * u)))


@njit(cache=True)
def _law_eval(segs, nseg, travel, khs, s):
    a = abs(s)
    f = 0.0
    k = 0.0
    e = 0.0
    for i in range(nseg):
        fi, ki, ei = _seg_eval(int(segs[i, 0]), segs[i, 1], segs[i, 2], segs[i, 3], a)
        f += fi
        k += ki
        e += ei
    if a > travel:
        f += khs * (a - travel)
        k += khs
        e += 0.5 * khs * (a - travel) ** 2
    if s < 0:
        f = -f
    return f, k, e


@njit(cache=True)
def _stage(q, segs, nseg, travel, khs, locked, bias, grip):
    """Stage energy, gradient and (diagonal) Hessian in q units."""
    e = 0.0
    g = np.zeros(5)
    h = np.zeros(5)
    for i in range(4):
        scale = DEG if i == 3 else 1.0
        if locked[i]:
            e += 0.5 * khs[i] * q[i] * q[i] * scale
            g[i] = khs[i] * q[i] * scale
            h[i] = khs[i] * scale
        else:
            f, k, en = _law_eval(segs[i], nseg[i], travel[i], khs[i], q[i])
            e += en * scale
            g[i] = f * scale
            h[i] = k * scale
        e -= bias[i] * q[i] * scale
        g[i] -= bias[i] * scale
    # twist: both fingers slide by grip/2 * angle along x
    c = 0.5 * grip * DEG
    if locked[0] or grip <= 0.0:
        e += khs[0] * (c * q[4]) ** 2
        g[4] = 2.0 * khs[0] * c * c * q[4]
        h[4] = 2.0 * khs[0] * c * c
    else:
        f, k, en = _law_eval(segs[0], nseg[0], travel[0], khs[0], c * q[4])
        e += 2.0 * en
        g[4] = 2.0 * f * c
        h[4] = 2.0 * k * c * c
    return e, g, h


# ---------------------------------------------------------------------------
# contact geometry


@njit(cache=True)
def _smin(a, ga, ha, b, gb, hb, delta):
    """Polynomial smooth minimum with exact gradient/Hessian (3-vectors)."""
    d = a - b
    if d >= delta:
        return b, gb.copy(), hb.copy()
    if d <= -delta:
        return a, ga.copy(), ha.copy()
    v = 0.5 * (a + b) - (d * d + delta * delta) / (4.0 * delta)
    wa = 0.5 - d / (2.0 * delta)
    wb = 0.5 + d / (2.0 * delta)
    g = wa * ga + wb * gb
    dg = ga - gb
    h = wa * ha + wb * hb - np.outer(dg, dg) / (2.0 * delta)
    return v, g, h


@njit(cache=True)
def _penetration(X, normals, offsets, circle, radius, top, zb, kappa, delta, caught_row):
    """Smooth penetration D(X) with gradient and Hessian.

    Returns (D, gD, HD, W, gW, HW): the aperture term and the "caught"
    wall-only term (zero unless an edge is flagged).
    """
    px, py, z = X[0], X[1], X[2]
    zero3 = np.zeros(3)
    zero33 = np.zeros((3, 3))
    c = math.sqrt(1.0 + kappa * kappa)
    S2 = 0.0
    G = np.zeros(3)
    HH = np.zeros((3, 3))
    W2 = 0.0
    GW = np.zeros(3)
    HW = np.zeros((3, 3))
    nf = 1 if circle else offsets.shape[0]
    for j in range(nf):
        gs = np.zeros(3)
        hs = np.zeros((3, 3))
        if circle:
            r = math.sqrt(px * px + py * py)
            if r < 1e-12:
                continue
            s = r - radius
            ux, uy = px / r, py / r
            gs[0] = ux
            gs[1] = uy
            hs[0, 0] = (1.0 - ux * ux) / r
            hs[0, 1] = -ux * uy / r
            hs[1, 0] = -ux * uy / r
            hs[1, 1] = (1.0 - uy * uy) / r
        else:
            s = normals[j, 0] * px + normals[j, 1] * py - offsets[j]
            gs[0] = normals[j, 0]
            gs[1] = normals[j, 1]
        if caught_row[j] and s > 0.0:
            W2 += s * s
            GW += s * gs
            HW += np.outer(gs, gs) + s * hs
        if kappa > 0.0:
            b = (s - kappa * (z - zb)) / c
            gb = gs / c
            gb[2] = -kappa / c
            e, ge, he = _smin(s, gs, hs, b, gb, hs / c, delta)
        else:
            e, ge, he = s, gs, hs
        if e > 0.0:
            S2 += e * e
            G += e * ge
            HH += np.outer(ge, ge) + e * he
    W = 0.0
    gW = zero3.copy()
    hW = zero33.copy()
    if W2 > 0.0:
        W = math.sqrt(W2)
        gW = GW / W
        hW = (HW - np.outer(gW, gW)) / W
    if S2 <= 0.0:
        return -1.0, zero3.copy(), zero33.copy(), W, gW, hW
    H = math.sqrt(S2)
    gH = G / H
    hH = (HH - np.outer(gH, gH)) / H
    gt = np.zeros(3)
    gt[2] = -1.0
    D, gD, hD = _smin(top - z, gt, zero33, H, gH, hH, delta)
    return D, gD, hD, W, gW, hW


@njit(cache=True)
def _points(q, hand, pts, rim):
    """Witness positions X (m, 3), first (m, 3, 5) and second derivatives (m, 3, 5, 5)."""
    m = pts.shape[0]
    hc, hs = math.cos(hand[3] * DEG), math.sin(hand[3] * DEG)
    a1x, a1y = hc, hs
    a2x, a2y = -hs, hc
    ox = hand[0] + q[0] * a1x + q[1] * a2x
    oy = hand[1] + q[0] * a1y + q[1] * a2y
    oz = hand[2] + q[2]
    psi = (hand[3] + q[3] + q[4]) * DEG
    cp, sp = math.cos(psi), math.sin(psi)
    X = np.empty((m, 3))
    J = np.zeros((m, 3, 5))
    K = np.zeros((m, 3, 5, 5))
    for i in range(m):
        X[i, 2] = oz
        J[i, 2, 2] = 1.0
        if not rim:
            rx = cp * pts[i, 0] - sp * pts[i, 1]
            ry = sp * pts[i, 0] + cp * pts[i, 1]
            X[i, 0] = ox + rx
            X[i, 1] = oy + ry
            J[i, 0, 0], J[i, 1, 0] = a1x, a1y
            J[i, 0, 1], J[i, 1, 1] = a2x, a2y
            for a in (3, 4):
                J[i, 0, a] = -ry * DEG
                J[i, 1, a] = rx * DEG
                for b in (3, 4):
                    K[i, 0, a, b] = -rx * DEG * DEG
                    K[i, 1, a, b] = -ry * DEG * DEG
        else:
            bx, by = pts[i, 0] - ox, pts[i, 1] - oy
            ux = cp * bx + sp * by
            uy = -sp * bx + cp * by
            X[i, 0], X[i, 1] = ux, uy
            # R^T a1, R^T a2
            t1x, t1y = cp * a1x + sp * a1y, -sp * a1x + cp * a1y
            t2x, t2y = cp * a2x + sp * a2y, -sp * a2x + cp * a2y
            J[i, 0, 0], J[i, 1, 0] = -t1x, -t1y
            J[i, 0, 1], J[i, 1, 1] = -t2x, -t2y
            for a in (3, 4):
                J[i, 0, a] = uy * DEG
                J[i, 1, a] = -ux * DEG
                for b in (3, 4):
                    K[i, 0, a, b] = -ux * DEG * DEG
                    K[i, 1, a, b] = -uy * DEG * DEG
                # d2u / dpsi d(dx): J R^T a1 with J(v) = (-v_y, v_x)
                K[i, 0, a, 0] = -t1y * DEG
                K[i, 1, a, 0] = t1x * DEG
                K[i, 0, 0, a] = -t1y * DEG
                K[i, 1, 0, a] = t1x * DEG
                K[i, 0, a, 1] = -t2y * DEG
                K[i, 1, a, 1] = t2x * DEG
                K[i, 0, 1, a] = -t2y * DEG
                K[i, 1, 1, a] = t2x * DEG
    return X, J, K


@njit(cache=True)
def _contact(q, hand, pts, rim, normals, offsets, circle, radius, top, zb, kappa, kc, delta,
             caught, fr_on, fr_x, fr_n, fr_p, mu, eps, want):
    """Contact + friction + caught-edge energy in q coordinates."""
    X, J, K = _points(q, hand, pts, rim)
    m = pts.shape[0]
    e = 0.0
    g = np.zeros(5)
    h = np.zeros((5, 5))
    pen = np.zeros(m)
    gdir = np.zeros((m, 3))
    for i in range(m):
        D, gD, hD, W, gW, hW = _penetration(X[i], normals, offsets, circle, radius, top, zb,
                                             kappa, delta, caught[i])
        pen[i] = D
        gX = np.zeros(3)
        hX = np.zeros((3, 3))
        if D > 0.0:
            e += 0.5 * kc * D * D
            gX += kc * D * gD
            hX += kc * (np.outer(gD, gD) + D * hD)
            gdir[i] = gD
        if W > 0.0:
            e += 0.5 * kc * W * W
            gX += kc * W * gW
            hX += kc * (np.outer(gW, gW) + W * hW)
        if fr_on[i] and mu > 0.0:
            dx = X[i] - fr_x[i]
            w = fr_p[i] @ dx
            r = math.sqrt(w @ w + eps * eps)
            c = mu * fr_n[i]
            e += c * (r - eps)
            gX += c * w / r
            hX += c * (fr_p[i] / r - np.outer(w, w) / r ** 3)
        Ji = J[i]
        g += Ji.T @ gX
        if want:
            h += Ji.T @ hX @ Ji
            for k in range(3):
                if gX[k] != 0.0:
                    h += gX[k] * K[i, k]
    return e, g, h, X, pen, gdir


# ---------------------------------------------------------------------------
# solver


@njit(cache=True)
def _total(q, hand, st_segs, st_nseg, st_travel, st_khs, locked, bias, grip,
           pts, rim, normals, offsets, circle, radius, top, zb, kappa, kc, delta,
           caught, fr_on, fr_x, fr_n, fr_p, mu, eps, want):
    es, gs, hs = _stage(q, st_segs, st_nseg, st_travel, st_khs, locked, bias, grip)
    ec, gc, hc, X, pen, gdir = _contact(q, hand, pts, rim, normals, offsets, circle, radius, top,
                                        zb, kappa, kc, delta, caught, fr_on, fr_x, fr_n, fr_p,
                                        mu, eps, want)
    h = hc.copy()
    for i in range(5):
        h[i, i] += hs[i]
    return es + ec, gs + gc, h, gc


@njit(cache=True)
def _newton(q0, free, hand, st_segs, st_nseg, st_travel, st_khs, locked, bias, grip,
            pts, rim, normals, offsets, circle, radius, top, zb, kappa, kc, delta,
            caught, fr_on, fr_x, fr_n, fr_p, mu, eps, tol, max_iter):
    idx = np.where(free)[0]
    nf = idx.shape[0]
    q = q0.copy()
    for i in range(5):
        if not free[i]:
            q[i] = 0.0
    if nf == 0:
        return q, OK, 0
    it = 0
    while it < max_iter:
        E, g, H, _ = _total(q, hand, st_segs, st_nseg, st_travel, st_khs, locked, bias, grip,
                            pts, rim, normals, offsets, circle, radius, top, zb, kappa, kc, delta,
                            caught, fr_on, fr_x, fr_n, fr_p, mu, eps, True)
        gf = g[idx]
        if np.max(np.abs(gf)) < tol:
            return q, OK, it
        Hf = np.empty((nf, nf))
        for a in range(nf):
            for b in range(nf):
                Hf[a, b] = H[idx[a], idx[b]]
        lam, V = np.linalg.eigh(Hf)
        lmax = np.max(np.abs(lam))
        floor = max(1e-9 * lmax, 1e-9)
        for a in range(nf):
            lam[a] = max(abs(lam[a]), floor)
        step_f = -(V @ ((V.T @ gf) / lam))
        step = np.zeros(5)
        for a in range(nf):
            step[idx[a]] = step_f[a]
        # keep single steps modest: the contact landscape is only C1
        smax = np.max(np.abs(step))
        if smax > 2.0:
            step *= 2.0 / smax
        slope = g @ step
        gnorm = np.max(np.abs(gf))
        alpha = 1.0
        accepted = False
        best_q = q
        best_g = gnorm
        for _ in range(45):
            qn = q + alpha * step
            En, gn, _, _ = _total(qn, hand, st_segs, st_nseg, st_travel, st_khs, locked, bias, grip,
                                  pts, rim, normals, offsets, circle, radius, top, zb, kappa, kc,
                                  delta, caught, fr_on, fr_x, fr_n, fr_p, mu, eps, False)
            if En <= E + 1e-4 * alpha * slope:
                accepted = True
                break
            # energy change lost in round-off: fall back to the residual as merit
            if abs(En - E) <= 1e-11 * (abs(E) + 1.0):
                gnn = np.max(np.abs(gn[idx]))
                if gnn < best_g:
                    best_g = gnn
                    best_q = qn
                if gnn < 0.5 * gnorm:
                    accepted = True
                    break
            alpha *= 0.5
        if not accepted:
            if best_g < gnorm:
                qn = best_q
            else:
                return q, NONCONVERGED, it
        q = qn
        it += 1
    return q, NONCONVERGED, it


# ---------------------------------------------------------------------------
# python-side wrapper


def _stage_tables(compliance):
    from .compliance import MagnetDecay, PeakedTorque, Spring

    segs = np.zeros((4, MAX_SEG, 4))
    nseg = np.zeros(4, dtype=np.int64)
    travel = np.zeros(4)
    khs = np.zeros(4)
    for i, axis in enumerate(("x", "y", "z", "yaw")):
        law = compliance.laws[axis]
        travel[i] = law.travel_limit
        khs[i] = law.hard_stop_stiffness
        nseg[i] = len(law.segments)
        for j, seg in enumerate(law.segments):
            if isinstance(seg, Spring):
                segs[i, j] = (SEG_SPRING, seg.k, seg.start, seg.stop)
            elif isinstance(seg, MagnetDecay):
                segs[i, j] = (SEG_MAGNET, seg.peak, seg.shape, seg.ramp)
            elif isinstance(seg, PeakedTorque):
                segs[i, j] = (SEG_PEAKED, seg.peak, seg.peak_at, 0.0)
            else:
                raise TypeError(f"unsupported law term {seg!r}")
    locked = np.array([compliance.locked(a) for a in ("x", "y", "z", "yaw")])
    if locked[2]:
        # a locked finger leaves only the arm's vertical give
        khs[2] = compliance.arm_stiffness
    bias = np.array(compliance.gravity_bias, dtype=float)
    return segs, nseg, travel, khs, locked, bias, float(compliance.grip_width)


@dataclass
class SolveResult:
    q: np.ndarray
    status: int
    iterations: int


class ContactProblem:
    """Pre-packed geometry of one object/site pair for the compiled kernel."""

    def __init__(self, obj: CrossSection, site: TargetSite, contact):
        self.obj, self.site, self.contact = obj, site, contact
        self.rim = site.sense == "rim"
        moving = site.opening if self.rim else obj
        container = obj if self.rim else site.opening
        inner_r = moving.radius if moving.is_circle else 0.0
        self.pts = np.zeros((1, 2)) if moving.is_circle else moving.vertex_array().copy()
        self.circle = container.is_circle
        if self.circle:
            self.normals = np.zeros((1, 2))
            self.offsets = np.zeros(1)
            self.radius = container.radius - inner_r
        else:
            n, d = container.half_planes()
            self.normals, self.offsets = n, d - inner_r
            self.radius = 0.0
        self.top = site.top
        self.zb = site.band_bottom
        self.kappa = site.bevel_slope
        self.n_faces = len(self.offsets)
        self.m = len(self.pts)
        # lid edges closer than this to the seat side get caught (rim sites only)
        self.catch_band = float(dict(site.extras).get("clearance", site.chamfer_width)) if self.rim else 0.0

    def separations(self, X) -> np.ndarray:
        """Signed witness-to-face distances (m, n_faces); positive = across the face."""
        xy = np.asarray(X)[:, :2]
        if self.circle:
            return (np.hypot(xy[:, 0], xy[:, 1]) - self.radius)[:, None]
        return xy @ self.normals.T - self.offsets[None, :]

    def no_caught(self):
        return np.zeros((self.m, self.n_faces), dtype=np.bool_)


class FrictionMemory:
    """Lagged friction bounds (coefficient x normal force), anchor points and
    tangent projectors per witness."""

    def __init__(self, m: int):
        self.on = np.zeros(m, dtype=np.bool_)
        self.x = np.zeros((m, 3))
        self.n = np.zeros(m)
        self.p = np.tile(np.eye(3), (m, 1, 1))
        self.caught = None


def _args(problem, compliance, hand, memory):
    st = _stage_tables(compliance)
    c = problem.contact
    if memory is None:
        memory = FrictionMemory(problem.m)
    caught = memory.caught if memory.caught is not None else problem.no_caught()
    hand = np.array(hand, dtype=float)
    return (hand, *st, problem.pts, problem.rim, problem.normals, problem.offsets, problem.circle,
            float(problem.radius), float(problem.top), float(problem.zb), float(problem.kappa),
            float(c.stiffness), float(c.smoothing), caught, memory.on, memory.x, memory.n,
            memory.p, 1.0, float(c.friction_smoothing))


def hand_array(hand_pose):
    return np.array([hand_pose.x, hand_pose.y, hand_pose.z, hand_pose.yaw], dtype=float)


def solve(problem, compliance, hand_pose, q0, memory=None, tol=1e-6, max_iter=10_000):
    from .compliance import Dropped, NonConvergence

    args = _args(problem, compliance, hand_array(hand_pose), memory)
    free = np.array(compliance.free_mask(), dtype=np.bool_)
    q, status, it = _newton(np.asarray(q0, dtype=float), free, *args, float(tol), int(max_iter))
    if status != OK:
        raise NonConvergence(f"equilibrium residual above {tol} after {it} iterations")

    if not compliance.within_band(compliance.state_from(q)):
        raise Dropped("object left the hard-stop penalty band")
    return SolveResult(q, status, it)


@dataclass
class Evaluation:
    energy: float
    gradient: np.ndarray
    contact_gradient: np.ndarray
    points: np.ndarray
    penetration: np.ndarray
    normal_dir: np.ndarray


def evaluate(problem, compliance, hand_pose, q, memory=None) -> Evaluation:
    """Energy, gradient and per-witness contact data at a given state."""
    args = _args(problem, compliance, hand_array(hand_pose), memory)
    q = np.asarray(q, dtype=float)
    E, g, _, gc = _total(q, *args, True)
    (hand, segs, nseg, travel, khs, locked, bias, grip, pts, rim, normals, offsets, circle, radius,
     top, zb, kappa, kc, delta, caught, fr_on, fr_x, fr_n, fr_p, mu, eps) = args
    _, _, _, X, pen, gdir = _contact(q, hand, pts, rim, normals, offsets, circle, radius, top, zb,
                                     kappa, kc, delta, caught, fr_on, fr_x, fr_n, fr_p, mu, eps,
                                     False)
    return Evaluation(E, g, gc, X, pen, gdir)


def hessian(problem, compliance, hand_pose, q, memory=None) -> np.ndarray:
    args = _args(problem, compliance, hand_array(hand_pose), memory)
    _, _, H, _ = _total(np.asarray(q, dtype=float), *args, True)
    return H


class Stepper:
    """Repeated equilibrium solves for one trial with packed, reusable arguments.

    Owns the friction memory and the caught-edge flags; ``commit`` updates
    them from an accepted state (one-step lag).
    """

    def __init__(self, problem, compliance, tol=1e-6, max_iter=10_000, friction=True,
                 catch=True):
        self.problem = problem
        self.catch = catch and problem.rim and problem.catch_band > 0
        self.compliance = compliance
        self.tol, self.max_iter = float(tol), int(max_iter)
        self.memory = FrictionMemory(problem.m)
        self.memory.caught = problem.no_caught()
        self.friction = friction
        self.free = np.array(compliance.free_mask(), dtype=np.bool_)
        self._stage = _stage_tables(compliance)
        c = problem.contact
        self._geom = (problem.pts, problem.rim, problem.normals, problem.offsets, problem.circle,
                      float(problem.radius), float(problem.top), float(problem.zb),
                      float(problem.kappa), float(c.stiffness), float(c.smoothing))
        self.mu = 1.0 if friction else 0.0
        self.eps = float(c.friction_smoothing)
        self.iterations = 0

    def _args(self, hand):
        m = self.memory
        return (hand, *self._stage, *self._geom, m.caught, m.on, m.x, m.n, m.p, self.mu, self.eps)

    def solve(self, hand, q0):
        from .compliance import Dropped, NonConvergence

        q, status, it = _newton(q0, self.free, *self._args(hand), self.tol, self.max_iter)
        self.iterations = it
        if status != OK:
            raise NonConvergence(f"equilibrium residual above {self.tol} after {it} iterations")
        if not self.compliance.within_band(self.compliance.state_from(q)):
            raise Dropped("object left the hard-stop penalty band")
        return q

    def inspect(self, hand, q):
        """(energy gradient, contact gradient, witness points, penetrations, penetration gradients)."""
        args = self._args(hand)
        _, g, _, gc = _total(q, *args, True)
        (hand, segs, nseg, travel, khs, locked, bias, grip, pts, rim, normals, offsets, circle,
         radius, top, zb, kappa, kc, delta, caught, fr_on, fr_x, fr_n, fr_p, mu, eps) = args
        _, _, _, X, pen, gdir = _contact(q, hand, pts, rim, normals, offsets, circle, radius, top,
                                         zb, kappa, kc, delta, caught, fr_on, fr_x, fr_n, fr_p,
                                         mu, eps, False)
        return g, gc, X, pen, gdir

    def commit(self, X, pen, gdir):
        m = self.memory
        c = self.problem.contact
        kc = c.stiffness
        for i in range(len(pen)):
            if pen[i] > 0.0:
                gn = float(np.linalg.norm(gdir[i]))
                nhat = gdir[i] / gn
                m.on[i] = True
                m.x[i] = X[i]
                m.n[i] = c.friction_at(gdir[i]) * kc * pen[i] * gn
                m.p[i] = np.eye(3) - np.outer(nhat, nhat)
            else:
                m.on[i] = False
                m.n[i] = 0.0
        if self.catch:
            self._update_caught(X, pen)

    def _update_caught(self, X, pen):
        """Lid corner-catch: while the lid rests on the seat, a lid edge that has
        passed a seat corner by less than the catch band hooks over it and stays
        on the outside of that corner (the 4-DOF stand-in for the lid tilting
        down over the seat edge)."""
        caught = self.memory.caught
        if not (pen > 0.0).any():
            caught[:] = False
            return
        s = self.problem.separations(X)
        band = self.problem.catch_band
        caught[:] = (s >= -band) & (caught | (s <= 0.0))
