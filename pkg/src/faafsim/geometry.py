"""Object cross-sections, chamfered target sites and pose-dependent queries.

Frames: every site is described in its own target-site frame.  ``z`` is the
height of the object's bottom above the hole-bottom plane for ``hole`` sites
and above the table for ``rim`` sites, so the table (hole) or the seat top
(rim) sits at ``z = site.top``.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

CONTAIN_EPS = 1e-9
CORNER_PERTURBATION = 1e-6
CATALOG_VERSION = 1


class NonConvexError(ValueError):
    pass


class CatalogError(ValueError):
    pass


def normalize_yaw(deg: float) -> float:
    """Wrap an angle in degrees into (-180, 180]."""
    r = math.fmod(deg, 360.0)
    if r <= -180.0:
        r += 360.0
    elif r > 180.0:
        r -= 360.0
    return r


def rot(theta_rad: float) -> np.ndarray:
    c, s = math.cos(theta_rad), math.sin(theta_rad)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class PlanarPose:
    """Pose in the target-site frame: mm for x, y, z and degrees for yaw."""

    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        for name in ("x", "y", "z", "yaw"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"PlanarPose.{name} must be finite")
        object.__setattr__(self, "yaw", normalize_yaw(float(self.yaw)))

    @property
    def yaw_rad(self) -> float:
        return math.radians(self.yaw)

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.x, self.y, self.z, self.yaw)


@dataclass(frozen=True)
class CrossSection:
    """Convex footprint (CCW polygon centred on its centroid) or a circle."""

    kind: str
    vertices: Tuple[Tuple[float, float], ...] = ()
    radius: float = 0.0
    length: float = 0.0
    name: str = ""

    def __post_init__(self):
        if self.kind == "circle":
            if not self.radius > 0:
                raise ValueError("circle radius must be positive")
            return
        if self.kind != "polygon":
            raise ValueError(f"unknown cross-section kind {self.kind!r}")
        verts = np.asarray(self.vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[0] < 3 or verts.shape[1] != 2:
            raise ValueError("polygon needs at least 3 (x, y) vertices")
        _check_convex_ccw(verts)
        c = _polygon_centroid(verts)
        if abs(c[0]) > 1e-9 or abs(c[1]) > 1e-9:
            raise ValueError(f"polygon centroid must be at the origin, got {c}")

    # -- constructors -----------------------------------------------------
    @classmethod
    def square(cls, side: float, length: float = 0.0, name: str = "") -> "CrossSection":
        h = side / 2.0
        return cls("polygon", ((h, -h), (h, h), (-h, h), (-h, -h)), length=length, name=name)

    @classmethod
    def rectangle(cls, lx: float, ly: float, length: float = 0.0, name: str = "") -> "CrossSection":
        a, b = lx / 2.0, ly / 2.0
        return cls("polygon", ((a, -b), (a, b), (-a, b), (-a, -b)), length=length, name=name)

    @classmethod
    def triangle(cls, circumradius: float, length: float = 0.0, name: str = "") -> "CrossSection":
        verts = tuple(
            (circumradius * math.cos(math.radians(a)), circumradius * math.sin(math.radians(a)))
            for a in (90.0, 210.0, 330.0)
        )
        # exact zero centroid: cos(90) is not exactly 0 in floating point
        verts = ((0.0, circumradius),) + verts[1:]
        return cls("polygon", verts, length=length, name=name)

    @classmethod
    def circle(cls, radius: float, length: float = 0.0, name: str = "") -> "CrossSection":
        return cls("circle", radius=radius, length=length, name=name)

    # -- queries ----------------------------------------------------------
    @property
    def is_circle(self) -> bool:
        return self.kind == "circle"

    def vertex_array(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float)

    def half_planes(self) -> Tuple[np.ndarray, np.ndarray]:
        """Outward unit normals and offsets so that inside is ``n @ p <= d``."""
        v = self.vertex_array()
        e = np.roll(v, -1, axis=0) - v
        n = np.stack([e[:, 1], -e[:, 0]], axis=1)
        n /= np.linalg.norm(n, axis=1)[:, None]
        d = np.einsum("ij,ij->i", n, v)
        return n, d

    def placed(self, x: float, y: float, yaw_deg: float) -> np.ndarray:
        """Polygon vertices in the site frame for the given placement."""
        return self.vertex_array() @ rot(math.radians(yaw_deg)).T + np.array([x, y])

    def width_along(self, direction_deg: float) -> float:
        """Extent of the footprint along a direction (object frame)."""
        if self.is_circle:
            return 2.0 * self.radius
        u = np.array([math.cos(math.radians(direction_deg)), math.sin(math.radians(direction_deg))])
        p = self.vertex_array() @ u
        return float(p.max() - p.min())


def _polygon_centroid(v: np.ndarray) -> np.ndarray:
    x, y = v[:, 0], v[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cr = x * yn - xn * y
    area = cr.sum() / 2.0
    return np.array([((x + xn) * cr).sum(), ((y + yn) * cr).sum()]) / (6.0 * area)


def _check_convex_ccw(v: np.ndarray) -> None:
    e = np.roll(v, -1, axis=0) - v
    en = np.roll(e, -1, axis=0)
    cross = e[:, 0] * en[:, 1] - e[:, 1] * en[:, 0]
    if np.any(cross <= 0):
        raise NonConvexError("polygon must be strictly convex and counterclockwise")


@dataclass(frozen=True)
class TargetSite:
    """Chamfered hole, or raised seat that a lid fits over (``rim``)."""

    opening: CrossSection
    chamfer_width: float
    cavity_depth: float
    sense: str = "hole"
    chamfer_depth: Optional[float] = None
    name: str = ""
    extras: Tuple[Tuple[str, float], ...] = ()

    def __post_init__(self):
        if self.sense not in ("hole", "rim"):
            raise ValueError(f"unknown site sense {self.sense!r}")
        if self.chamfer_depth is None:
            # 45 degree bevel unless given
            object.__setattr__(self, "chamfer_depth", float(self.chamfer_width))
        if self.chamfer_width < 0:
            raise ValueError("chamfer_width must be >= 0")
        if not self.cavity_depth > 0:
            raise ValueError("cavity_depth must be > 0")
        if self.chamfer_depth > self.cavity_depth:
            raise ValueError("chamfer_depth must not exceed cavity_depth")
        if self.chamfer_width > 0 and not self.chamfer_depth > 0:
            raise ValueError("a chamfer needs a positive depth")

    @property
    def top(self) -> float:
        return self.cavity_depth

    @property
    def band_bottom(self) -> float:
        return self.cavity_depth - self.chamfer_depth

    @property
    def bevel_slope(self) -> float:
        """Horizontal opening growth per mm of height inside the chamfer band."""
        return self.chamfer_width / self.chamfer_depth if self.chamfer_width > 0 else 0.0

    def offset_at(self, z: float) -> float:
        """Outward growth of the active boundary at height ``z``."""
        if self.chamfer_width <= 0 or z <= self.band_bottom:
            return 0.0
        if z >= self.top:
            return self.chamfer_width
        return self.bevel_slope * (z - self.band_bottom)


@dataclass
class ObjectCatalog:
    version: int
    objects: Dict[str, CrossSection] = field(default_factory=dict)
    sites: Dict[str, TargetSite] = field(default_factory=dict)
    grip_widths: Dict[str, float] = field(default_factory=dict)
    raw: Dict[str, Dict[str, str]] = field(default_factory=dict)
    source: str = ""

    def object(self, name: str) -> CrossSection:
        try:
            return self.objects[name]
        except KeyError:
            raise CatalogError(f"unknown object {name!r}; known: {sorted(self.objects)}") from None

    def site(self, name: str) -> TargetSite:
        try:
            return self.sites[name]
        except KeyError:
            raise CatalogError(f"unknown site {name!r}; known: {sorted(self.sites)}") from None


def _shape_from_section(sec: configparser.SectionProxy, name: str, length: float = 0.0) -> CrossSection:
    shape = sec.get("shape")
    if shape == "square":
        return CrossSection.square(sec.getfloat("side"), length, name)
    if shape == "triangle":
        return CrossSection.triangle(sec.getfloat("circumradius"), length, name)
    if shape == "rectangle":
        return CrossSection.rectangle(sec.getfloat("length"), sec.getfloat("width"), length, name)
    if shape == "circle":
        return CrossSection.circle(sec.getfloat("diameter") / 2.0, length, name)
    raise CatalogError(f"{name}: unknown shape {shape!r}")


def _shrunk(cs: CrossSection, margin: float, name: str) -> CrossSection:
    if cs.is_circle:
        return CrossSection.circle(cs.radius - margin, name=name)
    v = cs.vertex_array()
    # only axis-aligned rectangles/squares are used as lids
    lx = v[:, 0].max() - v[:, 0].min()
    ly = v[:, 1].max() - v[:, 1].min()
    return CrossSection.rectangle(lx - 2 * margin, ly - 2 * margin, name=name)


def load_catalog(path: Optional[str | Path] = None) -> ObjectCatalog:
    """Load and validate the object/site catalog (defaults to the shipped file)."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if path is None:
        text = resources.files("faafsim.data").joinpath("catalog.ini").read_text()
        source = "faafsim/data/catalog.ini"
    else:
        text = Path(path).read_text()
        source = str(path)
    cp.read_string(text, source=source)
    if not cp.has_section("catalog"):
        raise CatalogError("catalog file lacks a [catalog] section")
    version = cp.getint("catalog", "version")
    if version != CATALOG_VERSION:
        raise CatalogError(f"catalog version {version} unsupported (want {CATALOG_VERSION})")
    cat = ObjectCatalog(version=version, source=source)
    for sname in cp.sections():
        cat.raw[sname] = dict(cp[sname])
        if sname.startswith("object."):
            name = sname.split(".", 1)[1]
            sec = cp[sname]
            length = sec.getfloat("length", fallback=sec.getfloat("depth", fallback=0.0))
            cat.objects[name] = _shape_from_section(sec, name, length)
            cat.grip_widths[name] = sec.getfloat("grip_width", fallback=0.0)
    for sname in cp.sections():
        if not sname.startswith("site."):
            continue
        name = sname.split(".", 1)[1]
        sec = cp[sname]
        sense = sec.get("sense", "hole")
        if sense == "rim":
            lid = cat.object(sec.get("fits"))
            opening = _shrunk(lid, sec.getfloat("clearance"), name)
            chamfer = sec.getfloat("lead_in", fallback=0.0)
            depth = sec.getfloat("height")
        else:
            opening = _shape_from_section(sec, name)
            chamfer = sec.getfloat("chamfer", fallback=0.0)
            depth = sec.getfloat("depth")
        extras = tuple(
            (k, float(v)) for k, v in sec.items()
            if k in ("clearance", "outer_length", "outer_width", "corner_chamfer")
        )
        cat.sites[name] = TargetSite(opening, chamfer, depth, sense, name=name, extras=extras)
    return cat


# ---------------------------------------------------------------------------
# containment


def _relative_points(obj: CrossSection, site: TargetSite, pose: PlanarPose):
    """Witness points expressed in the frame of the boundary they must stay inside.

    Returns (points, normals, offsets, circle_radius) where the containing
    boundary is either the half-planes ``normals @ p <= offsets`` or, for a
    circle, ``|p| <= circle_radius``.
    """
    if site.sense == "hole":
        inner, outer = obj, site.opening
        if inner.is_circle:
            pts = np.array([[pose.x, pose.y]])
        else:
            pts = inner.placed(pose.x, pose.y, pose.yaw)
        inner_r = inner.radius if inner.is_circle else 0.0
    else:
        inner, outer = site.opening, obj
        r = rot(-pose.yaw_rad)
        if inner.is_circle:
            pts = (r @ (-np.array([pose.x, pose.y])))[None, :]
        else:
            pts = (inner.vertex_array() - np.array([pose.x, pose.y])) @ r.T
        inner_r = inner.radius if inner.is_circle else 0.0
    if outer.is_circle:
        return pts, None, None, outer.radius - inner_r
    n, d = outer.half_planes()
    return pts, n, d - 0.0, inner_r


def containment_margin(obj: CrossSection, site: TargetSite, pose: PlanarPose) -> float:
    """Smallest clearance (mm) between the moving footprint and the active boundary.

    Positive means strictly contained.  Uses the chamfer-expanded boundary
    inside the chamfer band and the nominal boundary below it.
    """
    w = site.offset_at(pose.z)
    pts, n, d, r = _relative_points(obj, site, pose)
    if n is None:
        # circular boundary; r is the boundary radius minus any inner radius
        return float(r + w - np.linalg.norm(pts, axis=1).max())
    slack = (d + w)[None, :] - pts @ n.T
    if r > 0:
        # circle inside a polygon
        slack = slack - r
    return float(slack.min())


def contains_at(obj: CrossSection, site: TargetSite, pose: PlanarPose, tol: float = 0.0) -> bool:
    """True iff the footprint is strictly inside the boundary active at ``pose.z``.

    For ``rim`` sites the seat outline must be strictly inside the lid
    footprint.  ``tol`` relaxes the test by that many mm.
    """
    return containment_margin(obj, site, pose) + tol > CONTAIN_EPS


def geometric_insertable(obj: CrossSection, site: TargetSite, yaw: float, x: float = 0.0,
                         y: float = 0.0, n_heights: int = 41, n_edge: int = 200) -> bool:
    """Brute-force check that a straight vertical plunge clears the site.

    Samples the footprint boundary densely and a ladder of heights from above
    the site down to the hole bottom, testing every sample against the active
    boundary.  Independent of ``contains_at``'s vertex reasoning.
    """
    heights = np.linspace(site.top + 1.0, 0.0, n_heights)
    moving = obj if site.sense == "hole" else site.opening
    if moving.is_circle:
        a = np.linspace(0.0, 2 * math.pi, 4 * n_edge, endpoint=False)
        boundary = moving.radius * np.stack([np.cos(a), np.sin(a)], axis=1)
    else:
        v = moving.vertex_array()
        t = np.linspace(0.0, 1.0, n_edge, endpoint=False)[:, None]
        boundary = np.concatenate([v[i] + t * (v[(i + 1) % len(v)] - v[i]) for i in range(len(v))])
    if site.sense == "hole":
        pts = boundary @ rot(math.radians(yaw)).T + np.array([x, y])
        container = site.opening
    else:
        pts = (boundary - np.array([x, y])) @ rot(-math.radians(yaw)).T
        container = obj
    for z in heights:
        w = site.offset_at(z)
        if container.is_circle:
            inside = np.linalg.norm(pts, axis=1) < container.radius + w - CONTAIN_EPS
        else:
            n, d = container.half_planes()
            inside = np.all(pts @ n.T < d + w - CONTAIN_EPS, axis=1)
        if not inside.all():
            return False
    return True


def geometric_insertability_limit(obj: CrossSection, site: TargetSite, max_yaw: int = 20) -> int:
    """Largest integer yaw (from 0, consecutive) for which a rigid plunge clears the site."""
    if obj.is_circle and site.opening.is_circle:
        return max_yaw if geometric_insertable(obj, site, 0.0) else 0
    limit = 0
    for deg in range(0, max_yaw + 1):
        if not geometric_insertable(obj, site, float(deg)):
            break
        limit = deg
    return limit


def rigid_insertability_limit(obj: CrossSection, site: TargetSite, compliance=None,
                              max_yaw: int = 20, **plunge_kwargs) -> Tuple[int, int]:
    """Plunge insertability limits in whole degrees: ``(with_compliance, geometric)``.

    The first value sweeps yaw from 0 upward with a simulated centred plunge
    and stops at the first failure; the second is the purely geometric limit.
    ``compliance`` defaults to the shipped calibration with every axis free.
    """
    from .simulator import plunge_sweep

    geometric = geometric_insertability_limit(obj, site, max_yaw)
    with_compliance = plunge_sweep(obj, site, compliance, max_yaw=max_yaw, **plunge_kwargs)
    return with_compliance, geometric


# ---------------------------------------------------------------------------
# exact contact queries


@dataclass(frozen=True)
class ContactPoint:
    point: Tuple[float, float, float]
    normal: Tuple[float, float, float]
    penetration: float
    mu: float = 0.0


def _offset_polygon(n: np.ndarray, d: np.ndarray, w: float) -> np.ndarray:
    """Vertices of the mitered offset polygon ``n @ p <= d + w``."""
    m = len(d)
    out = np.empty((m, 2))
    for i in range(m):
        a = np.array([n[i - 1], n[i]])
        out[i] = np.linalg.solve(a, np.array([d[i - 1] + w, d[i] + w]))
    return out


def _closest_on_polygon(p: np.ndarray, verts: np.ndarray) -> Tuple[float, np.ndarray]:
    """Distance from ``p`` to a convex CCW polygon (0 inside) and the closest point."""
    m = len(verts)
    inside = True
    best_d, best_q = math.inf, p
    for i in range(m):
        a, b = verts[i], verts[(i + 1) % m]
        e = b - a
        if e[0] * (p[1] - a[1]) - e[1] * (p[0] - a[0]) < 0:
            inside = False
        t = min(1.0, max(0.0, float(np.dot(p - a, e) / np.dot(e, e))))
        q = a + t * e
        dist = float(np.linalg.norm(p - q))
        if dist < best_d:
            best_d, best_q = dist, q
    if inside:
        return 0.0, p.copy()
    return best_d, best_q


def _closest_in_slice(p: np.ndarray, container: CrossSection, n, d, w: float):
    if container.is_circle:
        rr = container.radius + w
        norm = float(np.linalg.norm(p))
        if norm <= rr:
            return 0.0, p.copy()
        return norm - rr, p * (rr / norm)
    return _closest_on_polygon(p, _offset_polygon(n, d, w))


def free_space_projection(X: np.ndarray, container: CrossSection, site: TargetSite,
                          inner_radius: float = 0.0) -> Tuple[float, np.ndarray]:
    """Exact distance from a point to the free region of a chamfered aperture.

    ``X = (x, y, z)`` is expressed in the aperture's frame.  Free space is
    everything above ``site.top`` plus the aperture itself (nominal prism
    below the chamfer band, linearly flared funnel inside it).  Returns the
    distance and the closest free point.
    """
    x = np.asarray(X, dtype=float)
    T, zb = site.top, site.band_bottom
    if container.is_circle:
        cont = CrossSection.circle(container.radius - inner_radius)
        n = d = None
    else:
        cont = container
        n, d = container.half_planes()
        d = d - inner_radius
    p, z = x[:2], x[2]
    if z >= T:
        return 0.0, x.copy()
    candidates = [(T - z, np.array([p[0], p[1], T]))]
    dp, qp = _closest_in_slice(p, cont, n, d, 0.0)
    if dp == 0.0:
        return 0.0, x.copy()
    candidates.append((dp, np.array([qp[0], qp[1], z])))
    if site.chamfer_width > 0:
        def f(h):
            dd, _ = _closest_in_slice(p, cont, n, d, site.offset_at(h))
            return dd * dd + (z - h) ** 2

        res = minimize_scalar(f, bounds=(zb, T), method="bounded", options={"xatol": 1e-12})
        h = float(res.x)
        for hh in (h, zb, T):
            dd, qq = _closest_in_slice(p, cont, n, d, site.offset_at(hh))
            candidates.append((math.sqrt(dd * dd + (z - hh) ** 2), np.array([qq[0], qq[1], hh])))
    dist, q = min(candidates, key=lambda c: c[0])
    return dist, q


def contact_set(obj: CrossSection, site: TargetSite, pose: PlanarPose,
                friction_mu: float = 0.0) -> List[ContactPoint]:
    """All penetrating contacts between the moving footprint's bottom and the site.

    Each contact reports the witness point in the site frame, the unit normal
    along which the *object* must move to leave the solid, and the exact
    penetration depth.  A witness point sitting exactly on a corner (normal
    undefined) is re-queried 1e-6 mm lower.
    """
    pts, _, _, _ = _relative_points(obj, site, pose)
    if site.sense == "hole":
        container = site.opening
        inner_r = obj.radius if obj.is_circle else 0.0
    else:
        container = obj
        inner_r = site.opening.radius if site.opening.is_circle else 0.0
    r_back = rot(pose.yaw_rad)
    contacts: List[ContactPoint] = []
    for p in pts:
        X = np.array([p[0], p[1], pose.z])
        dist, q = free_space_projection(X, container, site, inner_r)
        if dist <= 0.0:
            continue
        delta = q - X
        if np.linalg.norm(delta) < 1e-12:
            X = X - np.array([0.0, 0.0, CORNER_PERTURBATION])
            dist, q = free_space_projection(X, container, site, inner_r)
            delta = q - X
        delta = delta / np.linalg.norm(delta)
        if site.sense == "hole":
            normal = delta
            world = X
            if obj.is_circle and np.linalg.norm(p) > 0:
                # witness on the rim of the circular footprint
                u = p / np.linalg.norm(p)
                world = np.array([*(p + obj.radius * u), pose.z])
        else:
            back = r_back @ delta[:2]
            normal = np.array([-back[0], -back[1], delta[2]])
            bx, by = (r_back @ p) + np.array([pose.x, pose.y])
            world = np.array([bx, by, pose.z])
        contacts.append(ContactPoint(tuple(map(float, world)), tuple(map(float, normal)),
                                     float(dist), float(friction_mu)))
    return contacts
