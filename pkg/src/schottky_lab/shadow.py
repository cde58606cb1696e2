"""Group-indexed pseudotrajectories, shadowing search, and orbit realization.

A pseudotrajectory assigns a sphere point to every word in the ball B(n) of
the free group, with every generator edge approximately equivariant.  The
ball decomposes into left cosets of the cyclic subgroup generated by
t = b^-1 a; along each coset the points form an ordinary pseudo-orbit of the
loxodromic composite map Phi_t, which is shadowed by an exact Phi_t-orbit via
backward cap chasing plus a Nelder-Mead polish.  Stitching the per-coset
exact orbits back together with an interpolating diffeomorphism produces a
nearby action for which the given data is (close to) an exact orbit piece.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import words
from .action import SchottkyAction
from .perturb import (
    DiffeoCollisionError,
    PerturbedAction,
    build_interpolating_diffeo,
    perturb_action,
)
from .sphere import (
    Cap,
    cap_to_disc,
    chordal_distance,
    chordal_distance_many,
    image_disc,
    inscribed_cap,
    lift,
    tangent_offset,
    tangent_offsets_many,
)

#: left multiplier generating the coset chains: t = b^-1 a
CHAIN_TOKEN = "Ba"
CHAIN_TOKEN_INV = "Ab"


class ShadowingFailedError(Exception):
    pass


class RealizationFailedError(Exception):
    pass


# ---------------------------------------------------------------------------
# Pseudotrajectories


@dataclass
class GSequence:
    """Sphere point for every reduced word in the radius-n ball."""

    radius: int
    points: dict[str, complex]

    def __post_init__(self):
        expected = set(words.ball(self.radius))
        if set(self.points) != expected:
            raise ValueError("points must be indexed by the full ball")

    def point(self, g: str) -> complex:
        return self.points[g]


def orbit_sequence(act, y: complex, n: int) -> GSequence:
    """Exact orbit piece: g -> Phi_g(y) over the radius-n ball."""
    pts = {"": complex(y)}
    for g in words.ball(n):
        if g and g not in pts:
            pts[g] = act.apply_letter(g[0], pts[g[1:]])
    return GSequence(radius=n, points=pts)


def noisy_pseudotrajectory(act, y: complex, n: int, delta: float,
                           seed: int = 0) -> GSequence:
    """Exact orbit with independent per-edge noise, defect strictly below delta.

    Noise at each tree edge is scaled down by the chordal derivative of the
    reverse letter so that the defect stays below delta in both directions.
    """
    rng = np.random.default_rng(seed)
    pts = {"": complex(y)}
    for g in sorted(words.ball(n), key=words.word_key):
        if not g or g in pts:
            continue
        s, parent = g[0], g[1:]
        base = act.apply_letter(s, pts[parent])
        back = act.generator(words.inverse_letter(s)) if isinstance(
            act, SchottkyAction) else None
        if back is not None:
            amp = back.chordal_derivative(base)
        else:
            eps = 1e-6
            moved = act.apply_letter(words.inverse_letter(s),
                                     tangent_offset(base, 0.0, eps))
            amp = chordal_distance(moved, pts[parent]) / eps
        scale = 0.9 * delta / max(1.0, amp)
        pts[g] = tangent_offset(base, rng.uniform(0.0, 2.0 * math.pi),
                                rng.uniform(0.0, scale))
    return GSequence(radius=n, points=pts)


@dataclass
class DefectReport:
    max_defect: float
    worst_word: str
    worst_letter: str
    edge_count: int


def pseudo_defect(act, seq: GSequence) -> DefectReport:
    """Worst generator-edge error max d(Phi_s(x_g), x_{sg}) over the ball."""
    ball = words.ball(seq.radius)
    worst, w_word, w_letter, edges = 0.0, "", "", 0
    for s in "aAbB":
        pairs = [(g, words.multiply(s, g)) for g in ball]
        pairs = [(g, sg) for g, sg in pairs if len(sg) <= seq.radius]
        edges += len(pairs)
        xs = np.array([seq.points[g] for g, _ in pairs], dtype=complex)
        tgt = np.array([seq.points[sg] for _, sg in pairs], dtype=complex)
        d = chordal_distance_many(act.apply_letter_many(s, xs), tgt)
        i = int(np.argmax(d))
        if d[i] > worst:
            worst, w_word, w_letter = float(d[i]), pairs[i][0], s
    return DefectReport(max_defect=worst, worst_word=w_word,
                        worst_letter=w_letter, edge_count=edges)


# ---------------------------------------------------------------------------
# Coset chains of <t>, t = b^-1 a


@dataclass(frozen=True)
class OrbitClass:
    """Maximal chain {t^m g0 : m_lo <= m <= m_hi} inside the ball."""

    representative: str
    members: tuple[str, ...]     # ordered by increasing power of t
    offsets: tuple[int, ...]     # power of t relative to the representative

    def __len__(self) -> int:
        return len(self.members)


@functools.lru_cache(maxsize=None)
def class_decomposition(n: int) -> tuple[OrbitClass, ...]:
    """Partition of the radius-n ball into maximal t-chains.

    Each chain is a contiguous interval of powers; the representative is the
    shortest member (ties broken lexicographically).
    """
    ball = words.ball(n)
    seen = set()
    classes = []
    for g in sorted(ball, key=words.word_key):
        if g in seen:
            continue
        chain = [g]
        w = g
        while True:
            w = words.multiply(CHAIN_TOKEN_INV, w)
            if len(w) > n:
                break
            chain.insert(0, w)
        w = g
        while True:
            w = words.multiply(CHAIN_TOKEN, w)
            if len(w) > n:
                break
            chain.append(w)
        seen.update(chain)
        rep = min(chain, key=words.word_key)
        base = chain.index(rep)
        classes.append(OrbitClass(
            representative=rep,
            members=tuple(chain),
            offsets=tuple(m - base for m in range(len(chain)))))
    return tuple(classes)


def z_sequence(seq: GSequence, cls: OrbitClass) -> np.ndarray:
    """The chain's points in increasing-power order: a Phi_t pseudo-orbit."""
    return np.array([seq.points[g] for g in cls.members], dtype=complex)


def composite_map(act: SchottkyAction):
    return act.word_map(CHAIN_TOKEN)


def composite_defect(act: SchottkyAction, zs: np.ndarray) -> float:
    if len(zs) < 2:
        return 0.0
    imgs = composite_map(act).apply_many(zs[:-1])
    return float(np.max(chordal_distance_many(imgs, zs[1:])))


def delta1_modulus(act: SchottkyAction, delta: float, samples: int = 100_000,
                   seed: int = 0) -> float:
    """Sampled modulus of continuity of Phi_{b^-1} at scale delta."""
    rng = np.random.default_rng(seed)
    from .sphere import random_sphere_points
    zs = random_sphere_points(samples, rng)
    ws = tangent_offsets_many(zs, rng.uniform(0.0, 2.0 * math.pi, samples),
                              rng.uniform(0.0, delta, samples))
    m = act.generator("B")
    return float(np.max(chordal_distance_many(m.apply_many(zs),
                                              m.apply_many(ws))))


# ---------------------------------------------------------------------------
# Shadowing a single chain


def _orbit_errors(cmap, y: complex, zs: np.ndarray) -> np.ndarray:
    out = np.empty(len(zs))
    w = complex(y)
    for m in range(len(zs)):
        if m > 0:
            w = cmap(w)
        out[m] = chordal_distance(w, zs[m])
    return out


def _cap_chase(cmap, zs: np.ndarray, eta: float) -> complex | None:
    """Backward intersection of pulled-back eta-caps around the chain points."""
    theta = 2.0 * math.asin(min(1.0, 0.45 * eta))
    cap = Cap(axis=tuple(lift(zs[-1])), theta=theta)
    inv = cmap.inv()
    for m in range(len(zs) - 2, -1, -1):
        pulled = image_disc(inv, cap_to_disc(cap)).cap()
        cap = inscribed_cap(pulled, Cap(axis=tuple(lift(zs[m])), theta=theta))
        if cap is None:
            return None
    return cap.center_point()


def z_shadow(cmap, zs: np.ndarray, eta: float,
             budget: int = 400) -> tuple[complex, float]:
    """Exact Phi_t-orbit start y with max_m d(Phi_t^m(y), z_m) <= eta.

    Cap chasing supplies the initial guess (falling back to z_0 when the
    chase pinches off); a chart-space Nelder-Mead polish then balances the
    worst-point error.  Raises ShadowingFailedError if the bound fails.
    """
    if len(zs) == 1:
        return complex(zs[0]), 0.0
    y0 = _cap_chase(cmap, zs, eta)
    if y0 is None or not np.isfinite(y0):
        y0 = complex(zs[0])

    def objective(p):
        return float(np.max(_orbit_errors(cmap, complex(p[0], p[1]), zs)))

    best_y, best = y0, objective([y0.real, y0.imag])
    if best > 1e-15:
        res = minimize(objective, [y0.real, y0.imag], method="Nelder-Mead",
                       options={"maxfev": budget, "xatol": 1e-14,
                                "fatol": 1e-15,
                                "initial_simplex": _simplex(y0, 0.25 * eta)})
        if res.fun < best:
            best_y, best = complex(res.x[0], res.x[1]), float(res.fun)
    if best > eta:
        raise ShadowingFailedError(
            f"chain of length {len(zs)}: residual {best:.3e} exceeds {eta:.3e}")
    return best_y, best


def _simplex(y0: complex, h: float) -> np.ndarray:
    h = max(h, 1e-12) * max(1.0, abs(y0))
    return np.array([[y0.real, y0.imag],
                     [y0.real + h, y0.imag],
                     [y0.real, y0.imag + h]])


# ---------------------------------------------------------------------------
# Realization: perturb the action so the shadowed points become an exact orbit


@dataclass
class RealizationResult:
    sequence: GSequence            # the realized (exact-orbit) points
    action: PerturbedAction
    diffeo: object
    max_displacement: float        # d(x_g, realized x_g) over the ball
    exact_defect: float            # defect of the realized points under action
    constraint_count: int
    compat_residual: float         # a/b source agreement before deduping
    lam: float
    retries: int
    chain_residuals: list = field(default_factory=list)


def _realized_points(act: SchottkyAction, seq: GSequence, eta: float,
                     rng: np.random.Generator, jitter: float):
    cmap = composite_map(act)
    pts = {}
    residuals = []
    for cls in class_decomposition(seq.radius):
        zs = z_sequence(seq, cls)
        if len(zs) == 1:
            y = complex(zs[0])
            residuals.append(0.0)
        else:
            y, r = z_shadow(cmap, zs, eta)
            residuals.append(r)
        if jitter > 0.0:
            # shrink by the worst forward amplification along the chain so
            # the jittered orbit stays within the eta displacement budget
            amp, prod, w = 1.0, 1.0, y
            for m in range(len(cls.members) - 1):
                prod *= max(cmap.chordal_derivative(w), 1e-12)
                amp = max(amp, prod)
                w = cmap(w)
            y = tangent_offset(y, rng.uniform(0.0, 2.0 * math.pi),
                               rng.uniform(0.2, 1.0) * jitter / amp)
        w = y
        for m, g in enumerate(cls.members):
            if m > 0:
                w = cmap(w)
            pts[g] = w
    return pts, residuals


def _constraint_pairs(act: SchottkyAction, pts: dict, n: int):
    """One (source, target) pair per non-identity coset step.

    For each g with a ball predecessor s^-1 g, the source is
    Phi_s(x~_{s^-1 g}) and the target x~_g.  When both letters apply, their
    sources agree because the chain points already form exact Phi_t-orbits.
    """
    pairs, compat = [], 0.0
    for g in words.ball(n):
        cands = []
        for s in "ab":
            prev = words.multiply(words.inverse_letter(s), g)
            if len(prev) <= n:
                cands.append(act.apply_letter(s, pts[prev]))
        if not cands:
            continue
        if len(cands) == 2:
            compat = max(compat, chordal_distance(cands[0], cands[1]))
        pairs.append((cands[0], pts[g]))
    # drop exact duplicates; conflicting duplicates are a collision for retry
    out, seen = [], []
    for src, tgt in pairs:
        dup = False
        for s2, t2 in seen:
            if chordal_distance(src, s2) < 1e-13:
                if chordal_distance(tgt, t2) < 1e-13:
                    dup = True
                    break
                raise DiffeoCollisionError(
                    len(out), "coincident sources with distinct targets")
        if not dup:
            seen.append((src, tgt))
            out.append((src, tgt))
    return out, compat


def realize_pseudotrajectory(act: SchottkyAction, seq: GSequence, eta: float,
                             seed: int = 0,
                             max_retries: int = 5) -> RealizationResult:
    """Perturbed action for which the shadowed points are an exact orbit piece.

    Per-chain shadow points stay within eta of the input; the interpolating
    diffeomorphism moves each Phi-image of a realized point onto its chain
    successor.  Collisions trigger a retry with per-chain micro-jitter below
    eta/100 (rigid within each chain, so exactness is preserved).
    """
    rng = np.random.default_rng(seed)
    last_exc = None
    for attempt in range(max_retries + 1):
        jitter = 0.0 if attempt == 0 else rng.uniform(0.3, 1.0) * eta / 100.0
        pts, residuals = _realized_points(act, seq, eta, rng, jitter)
        disp = max(chordal_distance(pts[g], seq.points[g])
                   for g in seq.points)
        if disp >= eta:
            raise ShadowingFailedError(
                f"realized points drifted {disp:.3e} >= eta {eta:.3e}")
        try:
            pairs, compat = _constraint_pairs(act, pts, seq.radius)
            moves = [chordal_distance(s, t) for s, t in pairs]
            lam = 1.05 * max(max(moves), 1e-12)
            # deep-word orbit points cluster at the contraction scale, so
            # skip the default spacing check; stall detection still guards
            f = build_interpolating_diffeo(pairs, lam, min_gap=0.0)
        except DiffeoCollisionError as exc:
            last_exc = exc
            continue
        pact = perturb_action(act, f)
        realized = GSequence(radius=seq.radius, points=pts)
        defect = pseudo_defect(pact, realized).max_defect
        return RealizationResult(
            sequence=realized, action=pact, diffeo=f,
            max_displacement=disp, exact_defect=defect,
            constraint_count=len(pairs), compat_residual=compat,
            lam=lam, retries=attempt, chain_residuals=residuals)
    raise RealizationFailedError(
        f"constraint collisions persisted through {max_retries} retries: "
        f"{last_exc}")


# ---------------------------------------------------------------------------
# Global shadowing-point search


@dataclass
class ShadowReport:
    point: complex
    quality: float          # max_g d(Phi_g(y), x_g)
    mode: str
    realization: RealizationResult | None = None


def _ball_matrices(act: SchottkyAction, n: int) -> tuple[list, np.ndarray]:
    ball = words.ball(n)
    mats = {"": np.eye(2, dtype=complex)}
    for g in sorted(ball, key=words.word_key):
        if g and g not in mats:
            mats[g] = act.generator(g[0]).mat @ mats[g[1:]]
    stack = np.stack([mats[g] for g in ball])
    return ball, stack


def orbit_quality(act: SchottkyAction, seq: GSequence, y: complex) -> float:
    ball, stack = _ball_matrices(act, seq.radius)
    num = stack[:, 0, 0] * y + stack[:, 0, 1]
    den = stack[:, 1, 0] * y + stack[:, 1, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        imgs = num / den
    imgs = np.where(np.abs(den) < 1e-300, np.inf + 0j, imgs)
    targets = np.array([seq.points[g] for g in ball], dtype=complex)
    return float(np.max(chordal_distance_many(imgs, targets)))


def shadow_search(act: SchottkyAction, seq: GSequence, epsilon: float,
                  mode: str = "direct", seed: int = 0,
                  restarts: int = 8, budget: int = 10_000) -> ShadowReport:
    """Point y with max_g d(Phi_g(y), x_g) < epsilon, or ShadowingFailedError.

    Direct mode runs a multi-start Nelder-Mead on the worst-word error;
    via-realization builds the perturbed action and pushes its base point
    through the semiconjugacy.
    """
    if mode == "via_realization":
        res = realize_pseudotrajectory(act, seq, eta=epsilon / 4.0, seed=seed)
        from .semiconj import build_semiconjugacy, evaluate_h
        sc = build_semiconjugacy(res.action, seed=seed)
        y = evaluate_h(sc, res.sequence.points[""])
        q = orbit_quality(act, seq, y)
        if q >= epsilon:
            raise ShadowingFailedError(
                f"realized shadow quality {q:.3e} exceeds {epsilon:.3e}")
        return ShadowReport(point=y, quality=q, mode=mode, realization=res)

    if mode != "direct":
        raise ValueError(f"unknown mode {mode!r}")
    ball, stack = _ball_matrices(act, seq.radius)
    targets = np.array([seq.points[g] for g in ball], dtype=complex)

    def objective(p):
        y = complex(p[0], p[1])
        num = stack[:, 0, 0] * y + stack[:, 0, 1]
        den = stack[:, 1, 0] * y + stack[:, 1, 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            imgs = num / den
        imgs = np.where(np.abs(den) < 1e-300, np.inf + 0j, imgs)
        return float(np.max(chordal_distance_many(imgs, targets)))

    rng = np.random.default_rng(seed)
    x_e = seq.points[""]
    starts = [x_e]
    for _ in range(restarts - 1):
        starts.append(tangent_offset(x_e, rng.uniform(0.0, 2.0 * math.pi),
                                     rng.uniform(0.0, epsilon)))
    best_y, best = x_e, objective([x_e.real, x_e.imag])
    per_start = max(budget // max(1, len(starts)), 100)
    for y0 in starts:
        res = minimize(objective, [y0.real, y0.imag], method="Nelder-Mead",
                       options={"maxfev": per_start, "xatol": 1e-14,
                                "fatol": 1e-15,
                                "initial_simplex": _simplex(y0, epsilon / 4.0)})
        if res.fun < best:
            best_y, best = complex(res.x[0], res.x[1]), float(res.fun)
    if best >= epsilon:
        raise ShadowingFailedError(
            f"best direct-search quality {best:.3e} exceeds {epsilon:.3e}")
    return ShadowReport(point=best_y, quality=best, mode="direct")


def calibrate_delta0(act: SchottkyAction, n: int, eta: float,
                     probes: int = 20, seed: int = 0,
                     iters: int = 12) -> float:
    """Largest delta (binary search) at which all probe realizations succeed."""
    rng = np.random.default_rng(seed)
    starts = [complex(c) for c in
              (rng.uniform(-2, 2, probes) + 1j * rng.uniform(-2, 2, probes))]

    def ok(delta: float) -> bool:
        for i, y in enumerate(starts):
            seq = noisy_pseudotrajectory(act, y, n, delta, seed=seed + 7 * i)
            try:
                realize_pseudotrajectory(act, seq, eta, seed=seed + 13 * i,
                                         max_retries=2)
            except (ShadowingFailedError, RealizationFailedError):
                return False
        return True

    lo, hi = 0.0, eta
    if ok(hi):
        return hi
    for _ in range(iters):
        mid = (lo + hi) / 2.0
        if mid <= 0.0:
            break
        if ok(mid):
            lo = mid
        else:
            hi = mid
    if lo == 0.0:
        raise RealizationFailedError(
            f"no usable noise level below eta={eta:.3e}")
    return lo
