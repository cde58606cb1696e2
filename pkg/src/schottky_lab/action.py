"""The model F2 action: two loxodromic generators in ping-pong position.

``build_model_action`` constructs the action from a configuration and runs
the full verification suite (disjoint discs, certified disc inclusions,
half-contraction on the cross discs); it refuses to return an action that
fails any property.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import words
from .config import ActionConfig
from .sphere import (
    Disc,
    MobiusMap,
    chordal_distance,
    chordal_distance_many,
    contraction_factor,
    disc_separation,
    image_disc,
    random_sphere_points,
)

LETTERS = "aAbB"

#: safety multiplier applied to sampled contraction estimates in gates
CONTRACTION_SAFETY = 1.05


class ConstructionRejectedError(Exception):
    def __init__(self, prop: str, margin: float):
        super().__init__(f"model property {prop!r} failed (margin {margin:.3e})")
        self.prop = prop
        self.margin = margin


@dataclass
class PropertyCheck:
    name: str
    margin: float
    samples: int
    passed: bool

    def as_dict(self) -> dict:
        return {"property": self.name, "margin": self.margin,
                "samples": self.samples, "pass": self.passed}


class SchottkyAction:
    """The model action: generator Mobius maps plus the four ping-pong discs."""

    kind = "model"

    def __init__(self, m_a: MobiusMap, m_b: MobiusMap, discs: dict[str, Disc],
                 alpha: float, config: ActionConfig,
                 checks: list[PropertyCheck] | None = None):
        self.maps = {"a": m_a, "A": m_a.inv(), "b": m_b, "B": m_b.inv()}
        self.discs = discs
        self.alpha = alpha
        self.config = config
        self.checks = checks or []

    def generator(self, letter: str) -> MobiusMap:
        return self.maps[letter]

    def apply_letter(self, letter: str, z: complex) -> complex:
        return self.maps[letter](z)

    def apply_letter_many(self, letter: str, zs: np.ndarray) -> np.ndarray:
        return self.maps[letter].apply_many(zs)

    def word_map(self, g: str) -> MobiusMap:
        """Composed Mobius map of a reduced word (rightmost letter first)."""
        m = MobiusMap.identity()
        for s in g:
            m = m @ self.maps[s]
        return m

    def evaluate(self, g: str, z: complex) -> complex:
        for s in reversed(g):
            z = self.maps[s](z)
        return z

    def evaluate_many(self, g: str, zs: np.ndarray) -> np.ndarray:
        return self.word_map(g).apply_many(zs)

    def region_contains(self, letter: str, z: complex, closed: bool = True) -> bool:
        return self.discs[letter].contains(z)

    def fundamental_domain_contains(self, z: complex) -> bool:
        return not any(self.discs[s].contains(z) for s in LETTERS)


def derived_inverse_disc(m: MobiusMap, disc: Disc) -> Disc:
    """I_{s^-1} = complement of the closure of the generator preimage of I_s."""
    pre = image_disc(m.inv(), disc)
    return Disc(center=pre.center, radius=pre.radius,
                bounded_side=not pre.bounded_side)


def build_model_action(cfg: ActionConfig | None = None) -> SchottkyAction:
    cfg = cfg or ActionConfig()
    cfg.validate()
    m_a = MobiusMap.loxodromic(cfg.attracting_a, cfg.repelling_a, cfg.multiplier_a)
    m_b = MobiusMap.loxodromic(cfg.attracting_b, cfg.repelling_b, cfg.multiplier_b)
    discs = {
        "a": Disc(cfg.disc_a[0], cfg.disc_a[1], bounded_side=True),
        "b": Disc(cfg.disc_b[0], cfg.disc_b[1], bounded_side=True),
    }
    discs["A"] = derived_inverse_disc(m_a, discs["a"])
    discs["B"] = derived_inverse_disc(m_b, discs["b"])
    maps = {"a": m_a, "A": m_a.inv(), "b": m_b, "B": m_b.inv()}

    checks: list[PropertyCheck] = []

    def record(name: str, margin: float, samples: int = 0):
        check = PropertyCheck(name=name, margin=margin, samples=samples,
                              passed=margin > 0.0)
        checks.append(check)
        if not check.passed:
            raise ConstructionRejectedError(name, margin)

    # fixed points sit in the right discs
    for s, fp in (("a", cfg.attracting_a), ("A", cfg.repelling_a),
                  ("b", cfg.attracting_b), ("B", cfg.repelling_b)):
        record(f"fixed_point_in_I_{s}", discs[s].cap().point_margin(fp))

    # pairwise disjoint closed discs
    alpha = math.inf
    for i, s in enumerate(LETTERS):
        for t in LETTERS[i + 1:]:
            sep = disc_separation(discs[s], discs[t])
            record(f"disjoint_I_{s}_I_{t}",
                   sep.distance if sep.disjoint else -1.0)
            alpha = min(alpha, sep.distance)

    # Remark-style certified inclusions: image of I_{s'} under Phi_s inside I_s
    for s in LETTERS:
        for t in LETTERS:
            if t == words.inverse_letter(s):
                continue
            img = image_disc(maps[s], discs[t])
            record(f"inclusion_Phi_{s}(I_{t})_in_I_{s}",
                   discs[s].cap().containment_margin(img.cap()))

    # images of I_s avoid I_{s^-1}
    for s in LETTERS:
        img = image_disc(maps[s], discs[s])
        sep = disc_separation(img, discs[words.inverse_letter(s)])
        record(f"avoid_Phi_{s}(I_{s})_I_{words.inverse_letter(s)}",
               sep.distance if sep.disjoint else -1.0)

    # half-contraction of Phi_s on I_{s'}, s' != s^-1
    pair_samples = max(2, cfg.samples // 8)
    for s in LETTERS:
        for t in LETTERS:
            if t == words.inverse_letter(s):
                continue
            est = contraction_factor(maps[s], discs[t], samples=pair_samples,
                                     seed=cfg.seed)
            record(f"half_contraction_Phi_{s}_on_I_{t}",
                   0.5 - est * CONTRACTION_SAFETY, samples=pair_samples)

    # derived-disc consistency: preimage boundary matches I_{s^-1} boundary
    for s, inv in (("a", "A"), ("b", "B")):
        pre = image_disc(maps[s].inv(), discs[s])
        err = abs(pre.center - discs[inv].center) + abs(pre.radius - discs[inv].radius)
        record(f"inverse_disc_consistency_{inv}", 1e-9 - err)

    return SchottkyAction(m_a, m_b, discs, alpha, cfg, checks)


# ---------------------------------------------------------------------------
# Distances between actions


def c0_distance(act_a, act_b, samples: int = 10_000, seed: int = 0) -> float:
    """Sampled sup over generators of the chordal distance between images."""
    rng = np.random.default_rng(seed)
    zs = random_sphere_points(samples, rng)
    worst = 0.0
    for s in LETTERS:
        wa = act_a.apply_letter_many(s, zs)
        wb = act_b.apply_letter_many(s, zs)
        worst = max(worst, float(np.max(chordal_distance_many(wa, wb))))
    return worst


def c1_distance_estimate(act_a, act_b, samples: int = 2000,
                         h_step: float = 1e-4, seed: int = 0) -> float:
    """C0 distance plus a finite-difference bound on differential discrepancy."""
    if not 1e-6 <= h_step <= 1e-3:
        raise ValueError("h_step must lie in [1e-6, 1e-3]")
    from .sphere import lift, tangent_offset

    rng = np.random.default_rng(seed)
    zs = random_sphere_points(samples, rng)
    worst = c0_distance(act_a, act_b, samples=samples, seed=seed)
    for s in LETTERS:
        for z in zs:
            z = complex(z) if np.isfinite(z) else None
            if z is None:
                continue
            for direction in (0.0, math.pi / 2.0):
                zp = tangent_offset(z, direction, h_step)
                va = (lift(act_a.apply_letter(s, zp))
                      - lift(act_a.apply_letter(s, z))) / h_step
                vb = (lift(act_b.apply_letter(s, zp))
                      - lift(act_b.apply_letter(s, z))) / h_step
                worst = max(worst, float(np.linalg.norm(va - vb)))
    return worst
