"""Perturbations of the model action.

Three constructions:

* ``mobius_jitter`` — generators stay Mobius, so inverses remain exact;
* ``build_interpolating_diffeo`` + ``perturb_action`` — a sphere
  diffeomorphism pinning finitely many points to prescribed targets, built
  as a chain of compactly supported localized rotations ("bumps");
* ``radial_plateau_perturbation`` — a radial profile modification of the
  ``a`` generator that creates an annulus of fixed points near its
  repelling pole, destroying the Cantor structure of the limit set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .action import LETTERS, SchottkyAction
from .config import ActionConfig
from .sphere import (
    INF,
    Disc,
    MobiusMap,
    chordal_distance,
    chordal_distance_many,
    is_inf,
    lift,
    random_sphere_points,
    unlift,
)


class DiffeoCollisionError(Exception):
    """A bump placement would disturb an already pinned constraint."""

    def __init__(self, index: int, message: str):
        super().__init__(message)
        self.index = index


class PlateauPlacementError(Exception):
    pass


class InversionError(Exception):
    pass


# ---------------------------------------------------------------------------
# vector helpers (unit sphere in R^3; chordal distance = Euclidean distance)


def _lift_many(zs: np.ndarray) -> np.ndarray:
    zs = np.asarray(zs, dtype=complex)
    finite = np.isfinite(zs)
    z = np.where(finite, zs, 0.0)
    m2 = z.real ** 2 + z.imag ** 2
    w = 1.0 / (1.0 + m2)
    out = np.stack([2.0 * z.real * w, 2.0 * z.imag * w, (m2 - 1.0) * w], axis=-1)
    out[~finite] = (0.0, 0.0, 1.0)
    return out


def _unlift_many(xs: np.ndarray) -> np.ndarray:
    denom = 1.0 - xs[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        zs = (xs[..., 0] + 1j * xs[..., 1]) / denom
    return np.where(denom < 1e-14, np.inf + 0j, zs)


def _rotate(xs: np.ndarray, axis: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """Rodrigues rotation of rows of xs about a single axis by per-row angles."""
    c = np.cos(angles)[..., None]
    s = np.sin(angles)[..., None]
    k = axis
    kx = np.cross(np.broadcast_to(k, xs.shape), xs)
    kdot = xs @ k
    return xs * c + kx * s + np.outer(kdot, k) * (1.0 - c)


def _smooth_cutoff(t: np.ndarray) -> np.ndarray:
    """1 at t=0 falling C1-smoothly to 0 at t>=1 (reversed cubic smoothstep)."""
    t = np.clip(t, 0.0, 1.0)
    return 1.0 - t * t * (3.0 - 2.0 * t)


@dataclass
class _Bump:
    center: np.ndarray   # unit 3-vector, support center
    axis: np.ndarray     # unit 3-vector, rotation axis
    angle: float         # geodesic rotation angle at the support center
    radius: float        # chordal support radius

    def apply(self, xs: np.ndarray) -> np.ndarray:
        d = np.linalg.norm(xs - self.center, axis=-1)
        mask = d < self.radius
        if not np.any(mask):
            return xs
        out = xs.copy()
        s = _smooth_cutoff(d[mask] / self.radius)
        out[mask] = _rotate(xs[mask], self.axis, self.angle * s)
        # renormalize against drift
        out[mask] /= np.linalg.norm(out[mask], axis=-1, keepdims=True)
        return out

    def apply_inverse(self, xs: np.ndarray, tol: float = 1e-14,
                      max_iter: int = 80) -> np.ndarray:
        d = np.linalg.norm(xs - self.center, axis=-1)
        mask = d < self.radius + abs(self.angle)
        if not np.any(mask):
            return xs
        out = xs.copy()
        target = xs[mask]
        v = target.copy()
        for _ in range(max_iter):
            dv = np.linalg.norm(v - self.center, axis=-1)
            s = _smooth_cutoff(dv / self.radius)
            nxt = _rotate(target, self.axis, -self.angle * s)
            nxt /= np.linalg.norm(nxt, axis=-1, keepdims=True)
            delta = np.max(np.linalg.norm(nxt - v, axis=-1))
            v = nxt
            if delta < tol:
                break
        else:
            raise InversionError("bump inversion did not converge")
        out[mask] = v
        return out


class InterpolatingDiffeo:
    """Chain of localized rotations with f(p_i) = q_i for all constraints."""

    def __init__(self, bumps: list[_Bump], pairs: list[tuple[complex, complex]],
                 lam: float):
        self.bumps = bumps
        self.pairs = pairs
        self.lam = lam

    def apply_vec(self, xs: np.ndarray) -> np.ndarray:
        for b in self.bumps:
            xs = b.apply(xs)
        return xs

    def apply_inverse_vec(self, xs: np.ndarray) -> np.ndarray:
        for b in reversed(self.bumps):
            xs = b.apply_inverse(xs)
        return xs

    def apply_many(self, zs: np.ndarray) -> np.ndarray:
        return _unlift_many(self.apply_vec(_lift_many(zs)))

    def apply_inverse_many(self, zs: np.ndarray) -> np.ndarray:
        return _unlift_many(self.apply_inverse_vec(_lift_many(zs)))

    def __call__(self, z: complex) -> complex:
        return complex(self.apply_many(np.array([z if not is_inf(z) else np.inf + 0j]))[0])

    def inverse(self, z: complex) -> complex:
        return complex(self.apply_inverse_many(
            np.array([z if not is_inf(z) else np.inf + 0j]))[0])

    def sup_distance(self, samples: int = 4000, seed: int = 0) -> float:
        """Sampled sup of d(f, id), always including the constraint points."""
        rng = np.random.default_rng(seed)
        zs = random_sphere_points(samples, rng)
        xs = _lift_many(zs)
        if self.pairs:
            xs = np.vstack([xs, _lift_many(np.array([p for p, _ in self.pairs]))])
        moved = self.apply_vec(xs)
        return float(np.max(np.linalg.norm(moved - xs, axis=-1)))


def _slerp(x: np.ndarray, y: np.ndarray, step_chord: float) -> np.ndarray:
    """Point on the geodesic from x toward y at chordal distance step_chord."""
    total = np.linalg.norm(y - x)
    if step_chord >= total:
        return y
    ang_total = 2.0 * math.asin(min(1.0, total / 2.0))
    ang_step = 2.0 * math.asin(min(1.0, step_chord / 2.0))
    axis = np.cross(x, y)
    n = np.linalg.norm(axis)
    if n < 1e-300:
        return y
    axis /= n
    return _rotate(x[None, :], axis, np.array([ang_step]))[0]


#: a bump moving its center by chordal e needs support radius >= RATIO_MIN * e
#: to stay a diffeomorphism; we build with RATIO_BUILD for margin.
_RATIO_MIN = 3.2
_RATIO_BUILD = 8.0


def build_interpolating_diffeo(pairs, lam: float, tol: float = 1e-12,
                               min_gap: float | None = None
                               ) -> InterpolatingDiffeo:
    """Diffeomorphism f with f(p_i) = q_i and d(f, id) < 2*pi*lam.

    Greedy construction: repeatedly pick the constraint with the largest
    residual and append a localized rotation carrying its current image
    toward its target.  Supports never contain targets that are already
    pinned, so pinned constraints stay exact; partial steps are taken when
    a pinned target sits too close for a full move.

    min_gap overrides the default cluster-spacing check (10*lam*1e-3);
    pass 0 to attempt a build on tightly clustered data, relying on the
    stall and residual checks to reject genuinely unsolvable inputs.
    """
    pairs = [(complex(p), complex(q)) for p, q in pairs]
    n = len(pairs)
    if n == 0:
        return InterpolatingDiffeo([], [], lam)
    for i, (p, q) in enumerate(pairs):
        if chordal_distance(p, q) >= lam:
            raise ValueError(f"pair {i}: move {chordal_distance(p, q):.3e} "
                             f"is not below lambda={lam:.3e}")
    gap_floor = 10.0 * lam * 1e-3 if min_gap is None else min_gap
    P = _lift_many(np.array([p if not is_inf(p) else np.inf + 0j for p, _ in pairs]))
    Q = _lift_many(np.array([q if not is_inf(q) else np.inf + 0j for _, q in pairs]))
    for pts, name in ((P, "source"), (Q, "target")):
        if n > 1:
            dmat = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
            np.fill_diagonal(dmat, np.inf)
            if gap_floor > 0.0 and float(dmat.min()) <= gap_floor:
                i, j = np.unravel_index(int(dmat.argmin()), dmat.shape)
                raise DiffeoCollisionError(
                    int(i), f"{name} points {i} and {j} are closer than the "
                    f"minimum gap {gap_floor:.3e}")

    bumps: list[_Bump] = []
    pos = P.copy()
    pinned = np.zeros(n, dtype=bool)
    max_bumps = 80 * n + 200
    stall = 0
    for _ in range(max_bumps):
        err = np.linalg.norm(pos - Q, axis=-1)
        pinned = err < tol
        i = int(np.argmax(err))
        if err[i] < tol:
            break
        # keep pinned targets strictly outside the new support
        others = pinned.copy()
        others[i] = False
        if np.any(others):
            r_allow = 0.9 * float(np.min(
                np.linalg.norm(Q[others] - pos[i], axis=-1)))
        else:
            r_allow = 1.0
        step = min(err[i], 0.28 * r_allow)
        if step < 1e-15:
            stall += 1
            if stall > 8:
                raise DiffeoCollisionError(
                    i, f"constraint {i} stalled next to a pinned target")
            continue
        stall = 0
        tgt = _slerp(pos[i], Q[i], step)
        axis = np.cross(pos[i], tgt)
        norm = np.linalg.norm(axis)
        if norm < 1e-300:
            continue
        axis /= norm
        # chord-based angle stays accurate for tiny steps where acos(dot) dies
        ang = 2.0 * math.asin(min(1.0, float(np.linalg.norm(tgt - pos[i])) / 2.0))
        radius = min(_RATIO_BUILD * step, 0.9 * r_allow, 1.0)
        radius = max(radius, _RATIO_MIN * step)
        bump = _Bump(center=pos[i].copy(), axis=axis, angle=ang, radius=radius)
        bumps.append(bump)
        pos = bump.apply(pos)
    else:
        raise DiffeoCollisionError(int(np.argmax(np.linalg.norm(pos - Q, axis=-1))),
                                   "bump budget exhausted before convergence")

    f = InterpolatingDiffeo(bumps, pairs, lam)
    # final exactness check from scratch
    check = f.apply_vec(P.copy())
    worst = float(np.max(np.linalg.norm(check - Q, axis=-1)))
    if worst > 1e-10:
        raise DiffeoCollisionError(int(np.argmax(np.linalg.norm(check - Q, axis=-1))),
                                   f"constraint residual {worst:.3e} after build")
    return f


# ---------------------------------------------------------------------------
# Perturbed actions


class PerturbedAction:
    """An action C0-close to the model, with numerically inverted generators."""

    def __init__(self, base: SchottkyAction, kind: str, fwd_many: dict,
                 payload=None):
        self.base = base
        self.kind = kind
        self._fwd = fwd_many          # letter -> vectorized evaluator
        self.payload = payload        # the diffeo / jitter maps / profile
        self.discs = {"a": base.discs["a"], "b": base.discs["b"]}
        self.alpha = base.alpha

    def apply_letter_many(self, letter: str, zs: np.ndarray) -> np.ndarray:
        return self._fwd[letter](np.asarray(zs, dtype=complex))

    def apply_letter(self, letter: str, z: complex) -> complex:
        arr = np.array([np.inf + 0j if is_inf(z) else z])
        return complex(self._fwd[letter](arr)[0])

    def evaluate(self, g: str, z: complex) -> complex:
        for s in reversed(g):
            z = self.apply_letter(s, z)
        return z

    def evaluate_many(self, g: str, zs: np.ndarray) -> np.ndarray:
        zs = np.asarray(zs, dtype=complex)
        for s in reversed(g):
            zs = self.apply_letter_many(s, zs)
        return zs

    def region_contains(self, letter: str, z: complex) -> bool:
        """Membership in the perturbed disc region I~_letter.

        The inverse-generator regions are defined dynamically:
        x in I~_{s^-1}  iff  Phi~_s(x) lies outside the closed disc I~_s.
        """
        if letter in ("a", "b"):
            return self.discs[letter].contains(z)
        fwd = "a" if letter == "A" else "b"
        return not self.discs[fwd].contains(self.apply_letter(fwd, z))

    def fundamental_domain_contains(self, z: complex) -> bool:
        return not any(self.region_contains(s, z) for s in LETTERS)

    def boundary_polygon(self, letter: str, n: int = 256) -> np.ndarray:
        """Chart vertices of the boundary of I~_letter."""
        if letter in ("a", "b"):
            d = self.discs[letter]
            ang = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
            return d.center + d.radius * np.exp(1j * ang)
        fwd = "a" if letter == "A" else "b"
        inv = "A" if letter == "A" else "B"
        circle = self.boundary_polygon(fwd, n)
        return self.apply_letter_many(inv, circle)


def identity_perturbation(base: SchottkyAction) -> PerturbedAction:
    fwd = {s: (lambda zs, m=base.maps[s]: m.apply_many(zs)) for s in LETTERS}
    return PerturbedAction(base, "identity", fwd)


def perturb_action(base: SchottkyAction, f: InterpolatingDiffeo) -> PerturbedAction:
    """The action generated by f o Phi_a and f o Phi_b."""
    def fwd(letter):
        if letter in ("a", "b"):
            m = base.maps[letter]
            return lambda zs: f.apply_many(m.apply_many(zs))
        m_inv = base.maps[letter]          # already the inverse Mobius map
        return lambda zs: m_inv.apply_many(f.apply_inverse_many(zs))

    return PerturbedAction(base, "interpolating_diffeo",
                           {s: fwd(s) for s in LETTERS}, payload=f)


def mobius_jitter(base: SchottkyAction, scale: float,
                  seed: int = 0) -> PerturbedAction:
    """Mobius perturbation: multipliers and attracting points moved by O(scale)."""
    rng = np.random.default_rng(seed)
    cfg = base.config
    sh = rng.uniform(-1.0, 1.0, size=6)
    m_a = MobiusMap.loxodromic(cfg.attracting_a + scale * (sh[0] + 1j * sh[1]),
                               cfg.repelling_a,
                               cfg.multiplier_a * (1.0 + 0.5 * scale * sh[2]))
    m_b = MobiusMap.loxodromic(cfg.attracting_b + scale * (sh[3] + 1j * sh[4]),
                               cfg.repelling_b,
                               cfg.multiplier_b * (1.0 + 0.5 * scale * sh[5]))
    maps = {"a": m_a, "A": m_a.inv(), "b": m_b, "B": m_b.inv()}
    fwd = {s: (lambda zs, m=maps[s]: m.apply_many(zs)) for s in LETTERS}
    act = PerturbedAction(base, "mobius_jitter", fwd, payload=maps)
    return act


# ---------------------------------------------------------------------------
# Radial plateau


class _PlateauProfile:
    """Monotone C1 radial profile with an exact identity plateau.

    Works in the polar angle sigma measured from the repelling pole of the
    ``a`` generator (sigma = 0 at the pole).  The base map sends
    sigma -> B(sigma) = 2*atan(tan(sigma/2) / lambda).  The profile is
    piecewise analytic: the identity from the pole through the plateau, a
    C1 Hermite blend on [s2, s2 + bu], and the base map beyond.
    """

    def __init__(self, lam: float, sigma_lo: float, sigma_hi: float,
                 sigma_max: float):
        self.lam = lam
        self.sigma_lo = sigma_lo
        self.sigma_hi = sigma_hi
        margin = 0.02 * (sigma_hi - sigma_lo)
        s2 = sigma_hi + margin
        if s2 >= sigma_max:
            raise PlateauPlacementError(
                f"plateau (up to angle {s2:.4f}) does not fit below the "
                f"support bound {sigma_max:.4f}")
        self.s2 = s2
        # short blend keeps the C0 displacement near its unavoidable floor
        # B(s2) - s2; monotonicity needs B' >= 1 throughout the window
        self.bu = min(max(s2, 4.0 * margin), 0.8 * (sigma_max - s2))
        self.sigma_support_end = s2 + self.bu
        grid = np.unique(np.concatenate([
            np.linspace(0.0, math.pi, 4097),
            np.linspace(0.0, min(math.pi, 1.1 * self.sigma_support_end), 8193),
        ]))
        gv = self.forward(grid)
        if np.any(np.diff(gv) <= 0.0):
            raise PlateauPlacementError("blended profile is not monotone")
        self._grid = grid
        self._grid_vals = gv

    def base(self, sigma):
        return 2.0 * np.arctan(np.tan(np.asarray(sigma) / 2.0) / self.lam)

    def base_inverse(self, val):
        return 2.0 * np.arctan(self.lam * np.tan(np.asarray(val) / 2.0))

    def forward(self, sigma: np.ndarray) -> np.ndarray:
        sigma = np.clip(np.asarray(sigma, dtype=float), 0.0, math.pi)
        frac = np.clip((sigma - self.s2) / self.bu, 0.0, 1.0)
        sm = frac * frac * (3.0 - 2.0 * frac)
        out = sigma + (self.base(sigma) - sigma) * sm
        return np.where(sigma >= self.sigma_support_end,
                        self.base(sigma), out)

    def inverse(self, val: np.ndarray) -> np.ndarray:
        val = np.clip(np.asarray(val, dtype=float), 0.0, math.pi)
        end_val = float(self.base(self.sigma_support_end))
        # bisection on the blend window (monotone), exact branches elsewhere
        lo = np.full_like(val, self.s2)
        hi = np.full_like(val, self.sigma_support_end)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            too_low = self.forward(mid) < val
            lo = np.where(too_low, mid, lo)
            hi = np.where(too_low, hi, mid)
        sig = 0.5 * (lo + hi)
        sig = np.where(val <= self.s2, val, sig)
        return np.where(val >= end_val, self.base_inverse(val), sig)

    def sup_displacement(self) -> float:
        """Chordal sup distance between the perturbed and base radial maps."""
        gap = np.abs(self._grid_vals - self.base(self._grid))
        return float(np.max(2.0 * np.sin(gap / 2.0)))


def radial_plateau_perturbation(base: SchottkyAction, interval_center: float,
                                width: float, amplitude: float) -> PerturbedAction:
    """Perturb Phi_a so the annulus at chordal distance ``interval_center``
    (+- width/2) from its repelling pole consists of fixed points.

    ``amplitude`` is the C0 budget: the implied sup displacement of the
    perturbed generator must fit below it.  ``amplitude == 0`` returns the
    unperturbed action.
    """
    if amplitude == 0.0:
        return identity_perturbation(base)
    cfg = base.config
    if is_inf(cfg.repelling_a):
        conj = MobiusMap([[1.0, cfg.attracting_a], [0.0, 1.0]])
    elif is_inf(cfg.attracting_a):
        conj = MobiusMap([[cfg.repelling_a, 1.0], [1.0, 0.0]])
    else:
        conj = MobiusMap([[cfg.repelling_a, cfg.attracting_a], [1.0, 1.0]])
    conj_inv = conj.inv()

    d_lo = interval_center - width / 2.0
    d_hi = interval_center + width / 2.0
    if d_lo <= 0.0:
        raise PlateauPlacementError("plateau interval must stay off the pole")
    sigma_lo = 2.0 * math.asin(min(1.0, d_lo / 2.0))
    sigma_hi = 2.0 * math.asin(min(1.0, d_hi / 2.0))
    # the whole modified region must stay inside I_{a^-1}; the cap angular
    # radius of I_{a^-1} is measured from the repelling pole, like sigma
    theta_inv = base.discs["A"].cap().theta
    profile = _PlateauProfile(cfg.multiplier_a, sigma_lo, sigma_hi,
                              sigma_max=0.98 * theta_inv)
    if profile.sigma_support_end >= theta_inv:
        raise PlateauPlacementError(
            f"modified radial region (angle {profile.sigma_support_end:.4f}) "
            f"leaves I_a^-1 (angular radius {theta_inv:.4f})")
    disp = profile.sup_displacement()
    if disp > amplitude * (1.0 + 1e-9):
        raise PlateauPlacementError(
            f"implied C0 displacement {disp:.3e} exceeds amplitude budget "
            f"{amplitude:.3e}")

    def _radial(zs: np.ndarray, fwd: bool) -> np.ndarray:
        us = conj_inv.apply_many(zs)
        finite = np.isfinite(us)
        u = np.where(finite, us, 1.0)
        mag = np.abs(u)
        sigma = 2.0 * np.arctan2(1.0, mag)          # angle from the pole u=inf
        sigma = np.where(finite, sigma, 0.0)
        new_sigma = profile.forward(sigma) if fwd else profile.inverse(sigma)
        half = np.clip(new_sigma / 2.0, 1e-300, math.pi / 2.0)
        new_mag = np.cos(half) / np.sin(half)
        with np.errstate(divide="ignore", invalid="ignore"):
            phase = np.where(mag > 0.0, u / mag, 1.0)
        out = np.where(new_mag > 1e12, np.inf + 0j, new_mag * phase)
        out = np.where(sigma <= 0.0, np.inf + 0j, out)
        out = np.where(new_sigma >= math.pi - 1e-15, 0.0 + 0j, out)
        return conj.apply_many(out)

    fwd = {
        "a": lambda zs: _radial(zs, fwd=True),
        "A": lambda zs: _radial(zs, fwd=False),
        "b": lambda zs, m=base.maps["b"]: m.apply_many(zs),
        "B": lambda zs, m=base.maps["B"]: m.apply_many(zs),
    }
    act = PerturbedAction(base, "radial_plateau", fwd, payload=profile)
    act.plateau_interval = (d_lo, d_hi)
    act.plateau_width = width
    return act


def round_trip_error(act: PerturbedAction, samples: int = 1000,
                     seed: int = 0) -> float:
    """Max forward-then-inverse error over sampled points, all generators."""
    rng = np.random.default_rng(seed)
    zs = random_sphere_points(samples, rng)
    worst = 0.0
    for s, sinv in (("a", "A"), ("A", "a"), ("b", "B"), ("B", "b")):
        back = act.apply_letter_many(sinv, act.apply_letter_many(s, zs))
        worst = max(worst, float(np.max(chordal_distance_many(back, zs))))
    return worst
