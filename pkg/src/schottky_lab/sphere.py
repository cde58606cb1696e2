"""Riemann sphere geometry: chordal metric, Mobius maps, discs as caps.

Points are complex numbers in the stereographic chart, with ``INF`` for the
point at infinity.  The chordal metric is the Euclidean distance between
stereographic lifts onto the unit 2-sphere, so its diameter is 2.

A disc is stored by its boundary circle (center, radius in the chart) plus
the flag saying which side is the interior.  Internally every disc is also
a spherical cap (unit axis vector, angular radius); cap arithmetic is what
makes inclusion and separation checks exact rather than sampled.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

INF = complex(math.inf, 0.0)

#: chart magnitudes above this are normalized to the point at infinity
INFINITY_CUTOFF = 1e12


class DegenerateImageError(Exception):
    """Image of a circle is a line (boundary passes through the map's pole)."""


def is_inf(z: complex) -> bool:
    return cmath.isinf(z)


def normalize_point(z: complex) -> complex:
    if cmath.isnan(z) or is_inf(z) or abs(z) > INFINITY_CUTOFF:
        return INF
    return z


def lift(z: complex) -> np.ndarray:
    """Stereographic lift onto the unit sphere; infinity -> north pole."""
    if is_inf(z):
        return np.array([0.0, 0.0, 1.0])
    m2 = z.real * z.real + z.imag * z.imag
    w = 1.0 / (1.0 + m2)
    return np.array([2.0 * z.real * w, 2.0 * z.imag * w, (m2 - 1.0) * w])


def unlift(x) -> complex:
    x = np.asarray(x, dtype=float)
    denom = 1.0 - x[2]
    if denom < 1e-14:
        return INF
    return normalize_point(complex(x[0] / denom, x[1] / denom))


def chordal_distance(p: complex, q: complex) -> float:
    pi, qi = is_inf(p), is_inf(q)
    if pi and qi:
        return 0.0
    if pi or qi:
        w = q if pi else p
        return 2.0 / math.sqrt(1.0 + abs(w) ** 2)
    return 2.0 * abs(p - q) / math.sqrt((1.0 + abs(p) ** 2) * (1.0 + abs(q) ** 2))


def chordal_distance_many(ps: np.ndarray, qs: np.ndarray) -> np.ndarray:
    """Vectorized chordal distance; infinities must be encoded as np.inf."""
    ps = np.asarray(ps, dtype=complex)
    qs = np.asarray(qs, dtype=complex)
    pinf = ~np.isfinite(ps)
    qinf = ~np.isfinite(qs)
    p = np.where(pinf, 0.0, ps)
    q = np.where(qinf, 0.0, qs)
    d = 2.0 * np.abs(p - q) / np.sqrt((1.0 + np.abs(p) ** 2) * (1.0 + np.abs(q) ** 2))
    d = np.where(pinf ^ qinf, 2.0 / np.sqrt(1.0 + np.abs(np.where(pinf, q, p)) ** 2), d)
    d = np.where(pinf & qinf, 0.0, d)
    return d


# ---------------------------------------------------------------------------
# Mobius maps


class MobiusMap:
    """z -> (p z + q) / (r z + s), normalized to determinant 1."""

    __slots__ = ("mat",)

    def __init__(self, mat):
        m = np.asarray(mat, dtype=complex).reshape(2, 2)
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        if abs(det) < 1e-300:
            raise ValueError("singular matrix is not a Mobius map")
        self.mat = m / np.sqrt(det)

    @classmethod
    def identity(cls) -> "MobiusMap":
        return cls(np.eye(2))

    @classmethod
    def scaling(cls, lam: complex) -> "MobiusMap":
        return cls([[lam, 0.0], [0.0, 1.0]])

    @classmethod
    def loxodromic(cls, attracting: complex, repelling: complex,
                   multiplier: float) -> "MobiusMap":
        """Axis-conjugated scaling with the given fixed points, 0 < multiplier < 1."""
        if not 0.0 < multiplier < 1.0:
            raise ValueError("multiplier must lie in (0, 1)")
        if is_inf(repelling):
            conj = cls([[1.0, attracting], [0.0, 1.0]])
        elif is_inf(attracting):
            conj = cls([[repelling, 1.0], [1.0, 0.0]])
        else:
            conj = cls([[repelling, attracting], [1.0, 1.0]])
        return conj @ cls.scaling(multiplier) @ conj.inv()

    def __matmul__(self, other: "MobiusMap") -> "MobiusMap":
        return MobiusMap(self.mat @ other.mat)

    def inv(self) -> "MobiusMap":
        (p, q), (r, s) = self.mat
        return MobiusMap([[s, -q], [-r, p]])

    def pole(self) -> complex:
        """Preimage of infinity."""
        (p, q), (r, s) = self.mat
        if abs(r) < 1e-300:
            return INF
        return -s / r

    def __call__(self, z: complex) -> complex:
        (p, q), (r, s) = self.mat
        if is_inf(z):
            if abs(r) < 1e-300:
                return INF
            return normalize_point(p / r)
        num = p * z + q
        den = r * z + s
        if abs(den) == 0.0:
            return INF
        return normalize_point(num / den)

    def apply_many(self, zs: np.ndarray) -> np.ndarray:
        """Vectorized evaluation; np.inf encodes the point at infinity."""
        (p, q), (r, s) = self.mat
        zs = np.asarray(zs, dtype=complex)
        zinf = ~np.isfinite(zs)
        z = np.where(zinf, 0.0, zs)
        num = p * z + q
        den = r * z + s
        with np.errstate(divide="ignore", invalid="ignore"):
            w = num / den
        w = np.where(np.abs(den) == 0.0, np.inf + 0j, w)
        at_inf = (np.inf + 0j) if abs(r) < 1e-300 else complex(p / r)
        w = np.where(zinf, at_inf, w)
        w = np.where(np.abs(w) > INFINITY_CUTOFF, np.inf + 0j, w)
        return w

    def chordal_derivative(self, z: complex) -> float:
        """Local Lipschitz factor of the map in the chordal metric."""
        (p, q), (r, s) = self.mat
        if is_inf(z):
            if abs(r) < 1e-300:
                return abs(s / p)  # derivative at the fixed infinity
            return 1.0 / (abs(r) ** 2 + abs(p) ** 2)
        den = r * z + s
        if abs(den) == 0.0:
            # pole: measure in the 1/w chart at the image
            return (1.0 + abs(z) ** 2) / abs(p * z + q) ** 2
        w = (p * z + q) / den
        return (1.0 + abs(z) ** 2) / (abs(den) ** 2 * (1.0 + abs(w) ** 2))

    def fixed_points(self) -> tuple[complex, complex]:
        (p, q), (r, s) = self.mat
        if abs(r) < 1e-300:
            if abs(p - s) < 1e-300:
                return INF, INF
            return normalize_point(q / (s - p)), INF
        disc = cmath.sqrt((p - s) ** 2 + 4 * q * r)
        z1 = ((p - s) + disc) / (2 * r)
        z2 = ((p - s) - disc) / (2 * r)
        return normalize_point(z1), normalize_point(z2)

    def is_loxodromic(self) -> bool:
        t = self.mat[0, 0] + self.mat[1, 1]
        return abs(t.imag) < 1e-9 * max(1.0, abs(t.real)) and abs(t.real) > 2.0 + 1e-9

    def attracting_fixed_point(self) -> complex:
        z1, z2 = self.fixed_points()
        return z1 if self.chordal_derivative(z1) < 1.0 else z2


# ---------------------------------------------------------------------------
# Discs / spherical caps


@dataclass(frozen=True)
class Cap:
    """Closed spherical cap {x : axis . x >= cos(theta)} on the unit sphere."""

    axis: tuple[float, float, float]
    theta: float

    def axis_vec(self) -> np.ndarray:
        return np.array(self.axis)

    def angular_gap(self, other: "Cap") -> float:
        """Angle between closures; positive iff the closed caps are disjoint."""
        psi = angle_between(self.axis_vec(), other.axis_vec())
        return psi - self.theta - other.theta

    def containment_margin(self, inner: "Cap") -> float:
        """Angular margin by which ``inner`` sits strictly inside ``self``."""
        psi = angle_between(self.axis_vec(), inner.axis_vec())
        return self.theta - inner.theta - psi

    def point_margin(self, z: complex) -> float:
        """Angular depth of a point inside the cap (negative outside)."""
        return self.theta - angle_between(self.axis_vec(), lift(z))

    def chordal_diameter(self) -> float:
        return 2.0 * math.sin(min(self.theta, math.pi / 2))

    def center_point(self) -> complex:
        return unlift(self.axis_vec())


def angle_between(u: np.ndarray, v: np.ndarray) -> float:
    # atan2 form stays accurate for nearly parallel or antiparallel vectors,
    # where acos of the dot product loses ~1e-8 absolute precision
    s = float(np.linalg.norm(np.cross(u, v)))
    return math.atan2(s, float(np.dot(u, v)))


@dataclass(frozen=True)
class Disc:
    """Disc on the sphere: boundary circle in the chart plus interior side."""

    center: complex
    radius: float
    bounded_side: bool = True

    def __post_init__(self):
        if not self.radius > 0.0:
            raise ValueError("radius must be positive")

    def boundary_points(self, n: int = 3) -> list[complex]:
        return [self.center + self.radius * cmath.exp(2j * math.pi * k / n)
                for k in range(n)]

    def cap(self) -> Cap:
        # the lifted boundary circle lies in the plane n.X = d with
        # n = (2 Re c, 2 Im c, |c|^2 - r^2 - 1), d = 1 + |c|^2 - r^2;
        # closed form stays exact for arbitrarily small radii
        u = self.center.real ** 2 + self.center.imag ** 2
        v = self.radius ** 2
        n = np.array([2.0 * self.center.real, 2.0 * self.center.imag,
                      u - v - 1.0])
        n /= float(np.linalg.norm(n))
        k = 1.0 + u - v
        # tan(theta) = 2r / k exactly; the cap with axis +n always contains
        # lift(center), and never contains infinity, so orientation is
        # decided by the interior side alone
        if self.bounded_side:
            return Cap(axis=tuple(n), theta=math.atan2(2.0 * self.radius, k))
        return Cap(axis=tuple(-n), theta=math.atan2(2.0 * self.radius, -k))

    def contains(self, z: complex, margin: float = 0.0) -> bool:
        if self.bounded_side:
            if is_inf(z):
                return False
            return abs(z - self.center) <= self.radius * (1.0 - margin)
        if is_inf(z):
            return True
        return abs(z - self.center) >= self.radius * (1.0 + margin)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """n points uniformly distributed over the cap (chart coordinates)."""
        cap = self.cap()
        return sample_cap(cap, n, rng)


def circumcircle(z1: complex, z2: complex, z3: complex) -> tuple[complex, float]:
    """Center and radius of the circle through three chart points."""
    # translate z1 to the origin first; keeps precision for tiny circles
    w2, w3 = z2 - z1, z3 - z1
    ax, ay = 0.0, 0.0
    bx, by = w2.real, w2.imag
    cx, cy = w3.real, w3.imag
    d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    if abs(d) < 1e-300:
        raise DegenerateImageError("collinear image points: circle maps to a line")
    ux = ((ax * ax + ay * ay) * (by - cy) + (bx * bx + by * by) * (cy - ay)
          + (cx * cx + cy * cy) * (ay - by)) / d
    uy = ((ax * ax + ay * ay) * (cx - bx) + (bx * bx + by * by) * (ax - cx)
          + (cx * cx + cy * cy) * (bx - ax)) / d
    center = z1 + complex(ux, uy)
    return center, abs(complex(ux, uy))


def image_disc(m: MobiusMap, d: Disc) -> Disc:
    """Exact image of a disc under a Mobius map (circles map to circles)."""
    pole = m.pole()
    if not is_inf(pole):
        if abs(abs(pole - d.center) - d.radius) < 1e-9:
            raise DegenerateImageError("boundary circle passes through the pole")
    pts = [m(z) for z in d.boundary_points(3)]
    if any(is_inf(w) for w in pts):
        raise DegenerateImageError("boundary circle passes through the pole")
    center, radius = circumcircle(*pts)
    # the image contains infinity exactly when the source contains the pole
    bounded = not d.contains(pole)
    return Disc(center=center, radius=radius, bounded_side=bounded)


@dataclass(frozen=True)
class Separation:
    distance: float                 # chordal infimum between the closed discs
    relation: str                   # "disjoint" | "overlap" | "nested"

    @property
    def disjoint(self) -> bool:
        return self.relation == "disjoint"


def disc_separation(d1: Disc, d2: Disc) -> Separation:
    c1, c2 = d1.cap(), d2.cap()
    psi = angle_between(c1.axis_vec(), c2.axis_vec())
    gap = psi - c1.theta - c2.theta
    if gap > 0.0:
        return Separation(distance=2.0 * math.sin(gap / 2.0), relation="disjoint")
    if psi + c1.theta <= c2.theta or psi + c2.theta <= c1.theta:
        return Separation(distance=0.0, relation="nested")
    return Separation(distance=0.0, relation="overlap")


def _rotate_from_pole(axis: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Rotate a point given in the +z frame so that +z goes to ``axis``."""
    z = np.array([0.0, 0.0, 1.0])
    v = np.cross(z, axis)
    s = np.linalg.norm(v)
    c = float(np.dot(z, axis))
    if s < 1e-15:
        return x if c > 0 else np.array([x[0], -x[1], -x[2]])
    vx = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
    rot = np.eye(3) + vx + vx @ vx * ((1 - c) / (s * s))
    return rot @ x


def sample_cap(cap: Cap, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform sample of n chart points from a spherical cap."""
    cos_t = math.cos(cap.theta)
    u = rng.uniform(cos_t, 1.0, size=n)
    phi = rng.uniform(0.0, 2.0 * math.pi, size=n)
    s = np.sqrt(np.maximum(0.0, 1.0 - u * u))
    pts = np.stack([s * np.cos(phi), s * np.sin(phi), u], axis=1)
    z = np.array([0.0, 0.0, 1.0])
    axis = cap.axis_vec()
    v = np.cross(z, axis)
    sv = np.linalg.norm(v)
    c = float(np.dot(z, axis))
    if sv < 1e-15:
        rot = np.eye(3) if c > 0 else np.diag([1.0, -1.0, -1.0])
    else:
        vx = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
        rot = np.eye(3) + vx + vx @ vx * ((1 - c) / (sv * sv))
    pts = pts @ rot.T
    denom = 1.0 - pts[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        zs = (pts[:, 0] + 1j * pts[:, 1]) / denom
    zs = np.where(denom < 1e-14, np.inf + 0j, zs)
    zs = np.where(np.abs(zs) > INFINITY_CUTOFF, np.inf + 0j, zs)
    return zs


def random_sphere_points(n: int, rng: np.random.Generator) -> np.ndarray:
    """n chart points uniformly distributed over the whole sphere."""
    return sample_cap(Cap(axis=(0.0, 0.0, 1.0), theta=math.pi), n, rng)


def contraction_factor(m: MobiusMap, d: Disc, samples: int = 2000,
                       seed: int = 0) -> float:
    """Upper estimate of the chordal Lipschitz factor of m restricted to d.

    Combines the sup over sampled point pairs with a grid maximization of the
    local chordal derivative over the cap.
    """
    if samples < 2:
        raise ValueError("need at least two samples")
    rng = np.random.default_rng(seed)
    zs = d.sample(samples, rng)
    ws = m.apply_many(zs)
    half = samples // 2
    num = chordal_distance_many(ws[:half], ws[half:2 * half])
    den = chordal_distance_many(zs[:half], zs[half:2 * half])
    ok = den > 1e-12
    pair_sup = float(np.max(num[ok] / den[ok])) if np.any(ok) else 0.0
    deriv_sup = max(m.chordal_derivative(complex(z)) if np.isfinite(z)
                    else m.chordal_derivative(INF) for z in zs)
    return max(pair_sup, deriv_sup)


def cap_to_disc(cap: Cap) -> Disc:
    """Chart disc with the same boundary circle and interior as the cap."""
    u = cap.axis_vec()
    ref = np.array([0.0, 0.0, 1.0])
    if abs(float(np.dot(u, ref))) > 1.0 - 1e-12:
        e = np.array([1.0, 0.0, 0.0])
    else:
        e = ref - float(np.dot(ref, u)) * u
        e /= np.linalg.norm(e)
    # the two meridian boundary points are chart-diameter endpoints
    p1 = unlift(math.cos(cap.theta) * u + math.sin(cap.theta) * e)
    p2 = unlift(math.cos(cap.theta) * u - math.sin(cap.theta) * e)
    if is_inf(p1) or is_inf(p2):
        # boundary grazes infinity; nudge the cap inward a hair
        return cap_to_disc(Cap(axis=cap.axis, theta=cap.theta * (1.0 - 1e-12)))
    center = (p1 + p2) / 2.0
    radius = abs(p1 - p2) / 2.0
    bounded = angle_between(u, np.array([0.0, 0.0, 1.0])) > cap.theta
    return Disc(center=center, radius=radius, bounded_side=bounded)


def rotate_toward(u: np.ndarray, v: np.ndarray, angle: float) -> np.ndarray:
    """Rotate unit vector u toward unit vector v by the given angle."""
    axis = np.cross(u, v)
    n = np.linalg.norm(axis)
    if n < 1e-300:
        return u.copy()
    axis /= n
    c, s = math.cos(angle), math.sin(angle)
    return u * c + np.cross(axis, u) * s + axis * float(np.dot(axis, u)) * (1.0 - c)


def inscribed_cap(c1: Cap, c2: Cap) -> Cap | None:
    """A cap inside the intersection of two caps, or None if they are disjoint.

    Exact when one cap contains the other; otherwise the largest cap centered
    on the axis arc (inscribed in the lens).
    """
    u1, u2 = c1.axis_vec(), c2.axis_vec()
    psi = angle_between(u1, u2)
    if psi + c1.theta <= c2.theta:
        return c1
    if psi + c2.theta <= c1.theta:
        return c2
    r = (c1.theta + c2.theta - psi) / 2.0
    if r <= 0.0:
        return None
    t = c1.theta - r
    axis = rotate_toward(u1, u2, t)
    return Cap(axis=tuple(axis), theta=r)


def tangent_offsets_many(zs: np.ndarray, directions: np.ndarray,
                         distances: np.ndarray) -> np.ndarray:
    """Vectorized geodesic offsets by chordal distances (see tangent_offset)."""
    zs = np.asarray(zs, dtype=complex)
    finite = np.isfinite(zs)
    z = np.where(finite, zs, 0.0)
    m2 = z.real ** 2 + z.imag ** 2
    w = 1.0 / (1.0 + m2)
    x = np.stack([2.0 * z.real * w, 2.0 * z.imag * w, (m2 - 1.0) * w], axis=1)
    x[~finite] = (0.0, 0.0, 1.0)
    ref = np.where(np.abs(x[:, 0:1]) < 0.9,
                   np.array([[1.0, 0.0, 0.0]]), np.array([[0.0, 1.0, 0.0]]))
    t1 = np.cross(x, ref)
    t1 /= np.linalg.norm(t1, axis=1, keepdims=True)
    t2 = np.cross(x, t1)
    ang = 2.0 * np.arcsin(np.clip(distances / 2.0, -1.0, 1.0))
    u = np.cos(directions)[:, None] * t1 + np.sin(directions)[:, None] * t2
    y = np.cos(ang)[:, None] * x + np.sin(ang)[:, None] * u
    denom = 1.0 - y[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (y[:, 0] + 1j * y[:, 1]) / denom
    out = np.where(denom < 1e-14, np.inf + 0j, out)
    return np.where(np.abs(out) > INFINITY_CUTOFF, np.inf + 0j, out)


def tangent_offset(z: complex, direction: float, distance: float) -> complex:
    """Move a chart point along the sphere by a chordal offset.

    ``direction`` is an angle in the tangent plane; the step is geodesic with
    chord length ``distance``.
    """
    x = lift(z)
    # orthonormal tangent frame at x
    ref = np.array([1.0, 0.0, 0.0]) if abs(x[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    t1 = np.cross(x, ref)
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(x, t1)
    ang = 2.0 * math.asin(max(-1.0, min(1.0, distance / 2.0)))
    u = math.cos(direction) * t1 + math.sin(direction) * t2
    y = math.cos(ang) * x + math.sin(ang) * u
    return unlift(y)
