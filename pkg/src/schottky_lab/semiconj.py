"""Constructive semiconjugacy between a perturbed action and the model.

Workflow: verify the five-item stability checklist for the perturbation
budget, build the chart h on the fundamental domain (identity on the
boundaries of the a/b discs, boundary-rule transport on the boundaries of
the inverse discs, collar blend in between), extend h dynamically through
minimal escape words, and collapse limit-set components symbolically via
the code table.  The defining identity h o Phi~_g = Phi_g o h then holds by
construction wherever classification succeeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import words
from .action import LETTERS, SchottkyAction
from .cantor import (
    Collar,
    NonCantorStructureError,
    _check_cantor_structure,
    max_component_diameter,
    point_from_code,
    sample_collar,
)
from .perturb import PerturbedAction
from .sphere import (
    chordal_distance,
    chordal_distance_many,
    lift,
    random_sphere_points,
    unlift,
)


class BudgetError(Exception):
    pass


class GeometryInconsistencyError(Exception):
    pass


class DepthCapError(Exception):
    pass


@dataclass(frozen=True)
class StabilityBudget:
    epsilon: float
    delta: float
    alpha: float

    def __post_init__(self):
        if not 0.0 < self.epsilon < self.alpha / 8.0:
            raise BudgetError(
                f"epsilon {self.epsilon:.3e} must lie in (0, alpha/8 = "
                f"{self.alpha / 8.0:.3e})")
        if not 0.0 < self.delta < self.epsilon:
            raise BudgetError(
                f"delta {self.delta:.3e} must lie in (0, epsilon)")

    @classmethod
    def for_action(cls, act: SchottkyAction, epsilon: float | None = None,
                   delta: float | None = None) -> "StabilityBudget":
        # 5% safety margin under the alpha/8 ceiling
        eps = 0.95 * act.alpha / 8.0 if epsilon is None else epsilon
        return cls(epsilon=eps, delta=eps / 2.0 if delta is None else delta,
                   alpha=act.alpha)


# ---------------------------------------------------------------------------
# Stability checklist


@dataclass
class ChecklistItem:
    name: str
    passed: bool
    margin: float


@dataclass
class StabilityReport:
    items: list[ChecklistItem]

    @property
    def passed(self) -> bool:
        return all(i.passed for i in self.items)


def _boundary_sets(pert: PerturbedAction, n: int = 256) -> dict[str, np.ndarray]:
    return {s: pert.boundary_polygon(s, n) for s in LETTERS}


def _min_set_distance(p: np.ndarray, q: np.ndarray) -> float:
    xp = np.stack([lift(z) for z in p])
    xq = np.stack([lift(z) for z in q])
    d = np.linalg.norm(xp[:, None, :] - xq[None, :, :], axis=-1)
    return float(d.min())


def _in_region_many(pert: PerturbedAction, letter: str,
                    zs: np.ndarray) -> np.ndarray:
    """Vectorized membership in the (possibly dynamic) region of a letter."""
    if letter in "ab":
        disc = pert.base.discs[letter]
        finite = np.isfinite(zs)
        inside = np.abs(np.where(finite, zs, 0.0) - disc.center) < disc.radius
        return inside & finite if disc.bounded_side else ~(inside & finite)
    inv = words.inverse_letter(letter)
    imgs = pert.apply_letter_many(inv, zs)
    return ~_in_region_many(pert, inv, imgs)


def verify_stability_neighborhood(act: SchottkyAction, pert: PerturbedAction,
                                  budget: StabilityBudget,
                                  samples: int = 100_000, seed: int = 0,
                                  depth: int | None = None,
                                  mode: str = "measure") -> StabilityReport:
    """Five-item checklist: disjoint closures, ping-pong nesting, small
    limit-set components, inverse-compatibility with the model, and uniform
    1/2-contraction off the repelling disc.  Report-only."""
    rng = np.random.default_rng(seed)
    eps = budget.epsilon
    items = []
    polys = _boundary_sets(pert)

    # 1: closures of the four regions pairwise disjoint
    m1 = math.inf
    for i, s in enumerate(LETTERS):
        for s2 in LETTERS[i + 1:]:
            m1 = min(m1, _min_set_distance(polys[s], polys[s2]))
            if np.any(_in_region_many(pert, s2, polys[s])):
                m1 = -abs(m1)
    items.append(ChecklistItem("disjoint_closures", m1 > 0.0, m1))

    # 2: Phi~_s maps every other region strictly inside its own region
    m2 = math.inf
    for s in LETTERS:
        for s2 in LETTERS:
            if s2 == s or s2 == words.inverse_letter(s):
                continue
            imgs = pert.apply_letter_many(s, polys[s2])
            if not np.all(_in_region_many(pert, s, imgs)):
                m2 = -1.0
                break
            m2 = min(m2, _min_set_distance(imgs, polys[s]))
    items.append(ChecklistItem("pingpong_nesting", m2 > 0.0, m2))

    # 3: limit-set components below eps/2 at the depth cap
    d3 = pert.base.config.depth_cap_perturbed if depth is None else depth
    if mode == "bound":
        # cheap bound: model component diameter plus the C0 budget spillover
        dia = max_component_diameter(act, min(d3, act.config.depth_cap_model))
        dia += 4.0 * budget.delta
    else:
        try:
            dia = max_component_diameter(pert, d3)
        except Exception:
            dia = math.inf
    items.append(ChecklistItem("component_diameter", dia < eps / 2.0,
                               eps / 2.0 - dia))

    # 4: d(Phi~_s^-1 Phi_s(x), x) < eps/2 over random samples
    n4 = samples if mode == "measure" else max(samples // 10, 1000)
    zs = random_sphere_points(n4, rng)
    worst4 = 0.0
    for s in LETTERS:
        back = pert.apply_letter_many(words.inverse_letter(s),
                                      act.apply_letter_many(s, zs))
        worst4 = max(worst4, float(np.max(chordal_distance_many(back, zs))))
    items.append(ChecklistItem("inverse_compatibility", worst4 < eps / 2.0,
                               eps / 2.0 - worst4))

    # 5: 1/2-contraction of the model Phi_s on I_{s'} union its perturbed
    # counterpart, for every other disc s' != s^-1
    worst5 = 0.0
    n5 = max(n4 // 8, 500)
    for s2 in LETTERS:
        cap2 = act.discs[s2].cap()
        from .sphere import Cap, sample_cap
        inflated = Cap(axis=cap2.axis,
                       theta=min(cap2.theta + 2.0 * eps, math.pi * 0.49))
        cands = sample_cap(inflated, 4 * n5, rng)
        keep = np.array([act.discs[s2].contains(z)
                         or pert.region_contains(s2, z) for z in cands])
        pts = cands[keep]
        if len(pts) < 4:
            continue
        half = len(pts) // 2
        x, y = pts[:half], pts[half:2 * half]
        base = chordal_distance_many(x, y)
        good = base > 1e-9
        for s in LETTERS:
            if s == words.inverse_letter(s2):
                continue
            img = chordal_distance_many(act.apply_letter_many(s, x[good]),
                                        act.apply_letter_many(s, y[good]))
            worst5 = max(worst5, float(np.max(img / base[good])))
    items.append(ChecklistItem("half_contraction", worst5 < 0.5,
                               0.5 - worst5))
    return StabilityReport(items=items)


# ---------------------------------------------------------------------------
# Escape words


def minimal_escape_word(pert: PerturbedAction, collar: Collar,
                        samples: int = 12, seed: int = 0) -> str:
    """Shortest word pushing the collar into the fundamental domain.

    This is the inverse of the collar's parent code; sampled collar points
    confirm the geometry numerically.
    """
    g = words.inverse(collar.parent)
    rng = np.random.default_rng(seed)
    pts = sample_collar(pert, collar, samples, rng)
    for z in pts:
        if not pert.fundamental_domain_contains(pert.evaluate(g, complex(z))):
            raise GeometryInconsistencyError(
                f"escape word {words.to_ascii(g)!r} fails to clear collar "
                f"{words.to_ascii(collar.parent)!r}")
    return g


# ---------------------------------------------------------------------------
# The fundamental chart


def _slerp_points(p: complex, q: complex, t: float) -> complex:
    if t <= 0.0:
        return p
    if t >= 1.0:
        return q
    x, y = lift(p), lift(q)
    dot = float(np.clip(np.dot(x, y), -1.0, 1.0))
    ang = math.acos(dot)
    if ang < 1e-12:
        return q
    s = math.sin(ang)
    v = (math.sin((1.0 - t) * ang) / s) * x + (math.sin(t * ang) / s) * y
    return unlift(v / np.linalg.norm(v))


@dataclass
class FundamentalChart:
    """h on the closed complement of the four perturbed regions."""

    act: SchottkyAction
    pert: PerturbedAction
    polys: dict[str, np.ndarray] = field(repr=False)
    width: float
    budget: StabilityBudget

    def boundary_rule(self, letter_inv: str, z: complex) -> complex:
        # h on the inverse-disc boundary: y = Phi~_{s^-1}(x), x on the model
        # boundary, maps to Phi_{s^-1}(x)
        s = words.inverse_letter(letter_inv)
        return self.act.apply_letter(letter_inv, self.pert.apply_letter(s, z))

    def evaluate(self, z: complex) -> complex:
        for letter_inv in "AB":
            poly = self.polys[letter_inv]
            d = float(np.min(chordal_distance_many(
                poly, np.full(len(poly), z, dtype=complex))))
            if d < self.width:
                t = d / self.width
                target = self.boundary_rule(letter_inv, z)
                blend = 1.0 - (3.0 * t * t - 2.0 * t ** 3)
                return _slerp_points(z, target, blend)
        return z


def build_fundamental_h(pert: PerturbedAction,
                        budget: StabilityBudget | None = None,
                        check_samples: int = 2000,
                        seed: int = 0) -> FundamentalChart:
    act = pert.base
    if budget is None:
        budget = StabilityBudget.for_action(act)
    polys = {s: pert.boundary_polygon(s, 256) for s in "AB"}
    all_sets = [polys["A"], polys["B"],
                np.array(act.discs["a"].boundary_points(64)),
                np.array(act.discs["b"].boundary_points(64))]
    thickness = math.inf
    for i in range(len(all_sets)):
        for j in range(i + 1, len(all_sets)):
            thickness = min(thickness,
                            _min_set_distance(all_sets[i], all_sets[j]))
    chart = FundamentalChart(act=act, pert=pert, polys=polys,
                             width=0.1 * thickness, budget=budget)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for z in random_sphere_points(check_samples, rng):
        if pert.fundamental_domain_contains(z):
            worst = max(worst, chordal_distance(chart.evaluate(z), z))
    if worst >= budget.epsilon:
        raise BudgetError(f"chart moves points by {worst:.3e}, above the "
                          f"epsilon budget {budget.epsilon:.3e}")
    return chart


@dataclass
class Semiconjugacy:
    chart: FundamentalChart
    budget: StabilityBudget
    depth_cap: int

    @property
    def act(self) -> SchottkyAction:
        return self.chart.act

    @property
    def pert(self) -> PerturbedAction:
        return self.chart.pert


def build_semiconjugacy(pert: PerturbedAction,
                        budget: StabilityBudget | None = None,
                        seed: int = 0,
                        check_samples: int = 2000) -> Semiconjugacy:
    chart = build_fundamental_h(pert, budget, check_samples=check_samples,
                                seed=seed)
    return Semiconjugacy(chart=chart, budget=chart.budget,
                         depth_cap=pert.base.config.depth_cap_perturbed)


def _containing_letter(pert: PerturbedAction, z: complex,
                       skip: str | None = None) -> str | None:
    for s in LETTERS:
        if s == skip:
            continue
        if pert.region_contains(s, z):
            return s
    return None


def evaluate_h(sc: Semiconjugacy, x: complex) -> complex:
    """h(x): chart value after descending through escape letters; points
    still inside a region at the depth cap collapse to the coded K point."""
    code, y = "", complex(x)
    skip = None
    while True:
        letter = _containing_letter(sc.pert, y, skip)
        if letter is None:
            val = sc.chart.evaluate(y)
            return sc.act.evaluate(code, val) if code else val
        if len(code) >= sc.depth_cap:
            return point_from_code(sc.act, code + letter)
        code += letter
        y = sc.pert.apply_letter(words.inverse_letter(letter), y)
        skip = words.inverse_letter(letter)


def evaluate_h_alias(sc: Semiconjugacy, x: complex) -> complex:
    return evaluate_h(sc, x)


# ---------------------------------------------------------------------------
# Verification


@dataclass
class SemiconjugacyReport:
    equivariance: float
    identity_distance: float
    surjectivity_gap: float
    samples: int
    mesh_probes: int

    def passes(self, budget: StabilityBudget,
               equivariance_tol: float = 1e-6) -> bool:
        return (self.equivariance < equivariance_tol
                and self.identity_distance < budget.epsilon
                and self.surjectivity_gap < budget.epsilon / 2.0)


def _stratified_samples(sc: Semiconjugacy, n: int, max_depth: int,
                        rng: np.random.Generator) -> list[complex]:
    """Half fundamental-domain points, half collar points at depths <= cap."""
    out = []
    target_fund = n // 2
    while len(out) < target_fund:
        for z in random_sphere_points(256, rng):
            if sc.pert.fundamental_domain_contains(z):
                out.append(complex(z))
                if len(out) >= target_fund:
                    break
    depths = list(range(1, max_depth + 1))
    per = max((n - len(out)) // len(depths), 1)
    for d in depths:
        for _ in range(max(per // 4, 1)):
            code = ""
            for _ in range(d):
                choices = [s for s in LETTERS
                           if not code or s != words.inverse_letter(code[-1])]
                code += choices[rng.integers(len(choices))]
            try:
                pts = sample_collar(sc.pert, Collar(code), 4, rng)
            except RuntimeError:
                continue
            out.extend(complex(z) for z in pts)
            if len(out) >= n:
                return out[:n]
    return out


def verify_semiconjugacy(sc: Semiconjugacy, samples: int = 10_000,
                         seed: int = 0, max_depth: int = 6,
                         mesh_probes: int = 500) -> SemiconjugacyReport:
    """Equivariance and near-identity residuals plus a surjectivity probe.

    Probe: for randomly placed mesh cells of scale eps/2, some evaluated
    image lands inside the cell (h is near the identity, so probing h at
    the cell centers suffices).
    """
    rng = np.random.default_rng(seed)
    pts = _stratified_samples(sc, samples, max_depth, rng)
    equi, ident = 0.0, 0.0
    for x in pts:
        hx = evaluate_h(sc, x)
        ident = max(ident, chordal_distance(hx, x))
        for s in LETTERS:
            lhs = evaluate_h(sc, sc.pert.apply_letter(s, x))
            rhs = sc.act.apply_letter(s, hx)
            equi = max(equi, chordal_distance(lhs, rhs))
    gap = 0.0
    for c in random_sphere_points(mesh_probes, rng):
        gap = max(gap, chordal_distance(evaluate_h(sc, complex(c)), c))
    return SemiconjugacyReport(equivariance=equi, identity_distance=ident,
                               surjectivity_gap=gap, samples=len(pts),
                               mesh_probes=mesh_probes)


@dataclass
class InjectivityVerdict:
    status: str                  # "injective-on-probes" or "collapsing"
    witness: str | None = None
    min_image_separation: float = math.inf


def extension_injectivity_probe(sc: Semiconjugacy, pairs: int = 40,
                                depth: int = 6,
                                seed: int = 0) -> InjectivityVerdict:
    """Distinct depth-cap codes map to distinct K points unless a component
    refuses to shrink, in which case the collapse witness is reported."""
    try:
        _check_cantor_structure(sc.pert)
    except NonCantorStructureError as exc:
        return InjectivityVerdict(status="collapsing", witness=exc.code)
    rng = np.random.default_rng(seed)
    sep = math.inf
    for _ in range(pairs):
        codes = []
        while len(codes) < 2:
            code = ""
            for _ in range(depth):
                choices = [s for s in LETTERS
                           if not code or s != words.inverse_letter(code[-1])]
                code += choices[rng.integers(len(choices))]
            if code not in codes:
                codes.append(code)
        d = chordal_distance(point_from_code(sc.act, codes[0]),
                             point_from_code(sc.act, codes[1]))
        if d <= 0.0:
            return InjectivityVerdict(status="collapsing", witness=codes[0])
        sep = min(sep, d)
    return InjectivityVerdict(status="injective-on-probes",
                              min_image_separation=sep)
