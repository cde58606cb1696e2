"""Nested approximants, symbolic component coding, and the Cantor limit set.

The depth-n approximant is the union of 4*3^n regions, one per reduced word
of length n+1: the component coded by w = s_1 s_2 ... s_{n+1} is

    C_w = Phi_{s_1} o ... o Phi_{s_n} (I_{s_{n+1}}).

Left extension C_{sw} = Phi_s(C_w) (for sw reduced) grows the tree one map
application at a time.  Model-action components are exact discs; perturbed
components are boundary polygons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import words
from .action import LETTERS, SchottkyAction
from .perturb import PerturbedAction
from .sphere import (
    Disc,
    chordal_distance,
    chordal_distance_many,
    image_disc,
    is_inf,
)

#: point codes are truncated here; deeper digits fall below double precision
TRUNCATION_DEPTH = 40

#: vertices per boundary polygon for perturbed-action components
POLYGON_POINTS = 64


class DepthCapError(Exception):
    pass


class IndistinguishableCodesError(Exception):
    pass


class NonCantorStructureError(Exception):
    """A component fails to shrink; the approximants are not Cantor-like."""

    def __init__(self, code: str, diameter: float):
        super().__init__(f"component {words.to_ascii(code)!r} has diameter "
                         f"{diameter:.4f}, far above the contraction schedule")
        self.code = code
        self.diameter = diameter


@dataclass
class Component:
    code: str
    region: object          # Disc for the model action, ndarray of vertices else

    def diameter(self) -> float:
        return region_diameter(self.region)

    def center(self) -> complex:
        return region_center(self.region)


def region_diameter(region) -> float:
    if isinstance(region, Disc):
        return region.cap().chordal_diameter()
    v = np.asarray(region)
    n = len(v)
    best = 0.0
    # near-antipodal index offsets suffice for these near-circular curves
    for off in (n // 2 - 2, n // 2, n // 2 + 2):
        d = chordal_distance_many(v, np.roll(v, off))
        best = max(best, float(np.max(d)))
    return best


def region_center(region) -> complex:
    if isinstance(region, Disc):
        return region.cap().center_point()
    v = np.asarray(region)
    finite = np.isfinite(v)
    vv = np.where(finite, v, 0.0)
    m2 = vv.real ** 2 + vv.imag ** 2
    w = 1.0 / (1.0 + m2)
    xs = np.stack([2.0 * vv.real * w, 2.0 * vv.imag * w, (m2 - 1.0) * w], axis=1)
    xs[~finite] = (0.0, 0.0, 1.0)
    mean = xs.mean(axis=0)
    norm = np.linalg.norm(mean)
    if norm < 1e-12:
        return 0.0
    mean /= norm
    denom = 1.0 - mean[2]
    if denom < 1e-14:
        return complex(np.inf, 0.0)
    return complex(mean[0] / denom, mean[1] / denom)


def _depth_cap(act) -> int:
    cfg = act.config if isinstance(act, SchottkyAction) else act.base.config
    if isinstance(act, SchottkyAction):
        return cfg.depth_cap_model
    return cfg.depth_cap_perturbed


def _base_components(act) -> list[Component]:
    if isinstance(act, SchottkyAction):
        return [Component(s, act.discs[s]) for s in LETTERS]
    return [Component(s, act.boundary_polygon(s, POLYGON_POINTS))
            for s in LETTERS]


def _extend_component(act, letter: str, comp: Component) -> Component:
    code = letter + comp.code
    if isinstance(comp.region, Disc):
        return Component(code, image_disc(act.generator(letter), comp.region))
    return Component(code, act.apply_letter_many(letter, comp.region))


def approximant_levels(act, n: int) -> list[list[Component]]:
    """Component lists for depths 0..n (4*3^k components at depth k)."""
    cap = _depth_cap(act)
    if n > cap:
        raise DepthCapError(f"depth {n} exceeds the cap {cap}")
    levels = [_base_components(act)]
    for _ in range(n):
        nxt = []
        for comp in levels[-1]:
            first = comp.code[0]
            for s in LETTERS:
                if s != words.inverse_letter(first):
                    nxt.append(_extend_component(act, s, comp))
        levels.append(nxt)
    return levels


def approximant(act, n: int) -> list[Component]:
    return approximant_levels(act, n)[-1]


def max_component_diameter(act, n: int) -> float:
    return max(c.diameter() for c in approximant(act, n))


def nesting_margins(act: SchottkyAction, n: int) -> list[tuple[str, float]]:
    """Certified angular margin of each depth-k component inside its parent,
    for k = 1..n.  Exact cap arithmetic; model action only."""
    if not isinstance(act, SchottkyAction):
        raise TypeError("certified nesting margins need exact discs")
    levels = approximant_levels(act, n)
    out = []
    for depth in range(1, n + 1):
        parents = {c.code: c for c in levels[depth - 1]}
        for child in levels[depth]:
            parent = parents[child.code[: depth]]
            margin = parent.region.cap().containment_margin(child.region.cap())
            out.append((child.code, margin))
    return out


# ---------------------------------------------------------------------------
# Points of the limit set


def validate_point_code(code: str) -> str:
    if not code:
        raise ValueError("point code must be nonempty")
    if len(code) > TRUNCATION_DEPTH:
        raise ValueError(f"point code exceeds truncation depth {TRUNCATION_DEPTH}")
    if words.reduce(code) != code:
        raise ValueError("point code must be a reduced word")
    return code


def component_region(act, code: str):
    """Region of the component coded by ``code`` (built innermost-first)."""
    if isinstance(act, SchottkyAction):
        region = act.discs[code[-1]]
        for s in reversed(code[:-1]):
            region = image_disc(act.generator(s), region)
        return region
    region = act.boundary_polygon(code[-1], POLYGON_POINTS)
    for s in reversed(code[:-1]):
        region = act.apply_letter_many(s, region)
    return region


def point_from_code(act, code: str, depth: int | None = None) -> complex:
    """Representative center of the component coded by the truncated code.

    For the model action the innermost disc center is pushed through the
    composed word map; this stays stable at depths where the component
    radius is far below machine epsilon relative to its position.
    """
    validate_point_code(code)
    if depth is None:
        depth = len(code) - 1
    if depth > len(code) - 1:
        raise ValueError("depth exceeds the code's truncation length")
    prefix, last = code[:depth], code[depth]
    if isinstance(act, SchottkyAction):
        # pointwise letter application is stable at any depth; matrix
        # composition is not (condition grows like multiplier^-depth)
        seed = act.discs[last].cap().center_point()
        return act.evaluate(prefix, seed)
    return region_center(component_region(act, code[: depth + 1]))


def expansivity_separation(act, c1: str, c2: str) -> tuple[str, float]:
    """Word g with d(Phi_g(x1), Phi_g(x2)) >= alpha for the coded points.

    g is the inverse of the longest common prefix: it peels the shared
    letters away, leaving images in two different discs.
    """
    validate_point_code(c1)
    validate_point_code(c2)
    k = 0
    while k < min(len(c1), len(c2)) and c1[k] == c2[k]:
        k += 1
    if k == min(len(c1), len(c2)):
        raise IndistinguishableCodesError(
            "codes agree to full truncation depth")
    g = words.inverse(c1[:k])
    y1 = point_from_code(act, c1[k:])
    y2 = point_from_code(act, c2[k:])
    return g, chordal_distance(y1, y2)


# ---------------------------------------------------------------------------
# Minimality probe


@dataclass
class MinimalityReport:
    visited_all: bool
    targets: int
    orbit_radius: int
    spot_check_margins: list


def _check_cantor_structure(act, max_depth: int = 5) -> None:
    """Flag any component whose diameter defies the contraction schedule."""
    depth = min(max_depth, _depth_cap(act))
    levels = approximant_levels(act, depth)
    diam0 = max(c.diameter() for c in levels[0])
    for d, level in enumerate(levels):
        if d == 0:
            continue
        bound = max(diam0 * 0.55 ** d, 1e-6)
        for comp in level:
            dia = comp.diameter()
            if dia > bound:
                raise NonCantorStructureError(comp.code, dia)


def minimality_probe(act, code: str, n: int, spot_checks: int = 10,
                     seed: int = 0) -> MinimalityReport:
    """Check that the coded point's orbit reaches every depth-n component.

    Symbolic: for each target component code w there is g = w + spacer with
    g * code reduced and prefixed by w, so Phi_g(x) lies in C_w.  Numeric
    spot checks confirm containment for a sample of targets.
    """
    if n > 6:
        raise DepthCapError("minimality probe capped at depth 6")
    validate_point_code(code)
    if isinstance(act, PerturbedAction):
        _check_cantor_structure(act)

    targets = [c.code for c in approximant(act, n)]
    head_inv = words.inverse_letter(code[0])
    visited = 0
    probes = []
    for w in targets:
        spacer = next(s for s in LETTERS
                      if s != words.inverse_letter(w[-1]) and s != head_inv)
        g = w + spacer
        if words.multiply(g, code).startswith(w):
            visited += 1
            probes.append((w, g))

    rng = np.random.default_rng(seed)
    picks = rng.choice(len(probes), size=min(spot_checks, len(probes)),
                       replace=False)
    margins = []
    x = point_from_code(act, code)
    for i in picks:
        w, g = probes[int(i)]
        y = act.evaluate(g, x)
        region = component_region(act, w)
        if isinstance(region, Disc):
            margins.append(region.cap().point_margin(y))
        else:
            center = region_center(region)
            margins.append(region_diameter(region) / 2.0
                           - chordal_distance(y, center))
    return MinimalityReport(visited_all=(visited == len(targets)),
                            targets=len(targets),
                            orbit_radius=n + 2,
                            spot_check_margins=margins)


# ---------------------------------------------------------------------------
# Collars (components of A_n minus A_{n+1})


@dataclass(frozen=True)
class Collar:
    """Collar of the component coded ``parent``: parent minus its children."""

    parent: str

    @property
    def children(self) -> tuple[str, ...]:
        last = self.parent[-1]
        return tuple(self.parent + t for t in LETTERS
                     if t != words.inverse_letter(last))

    @property
    def depth(self) -> int:
        return len(self.parent) - 1


def _region_test(region):
    """Membership predicate over a chart-point array, precomputed once."""
    if isinstance(region, Disc):
        return lambda zs: np.array([region.contains(z) for z in zs])
    center = region_center(region)
    if is_inf(center):
        return lambda zs: np.zeros(len(zs), dtype=bool)
    v = np.asarray(region)
    inradius = float(np.min(chordal_distance_many(
        v, np.full(len(v), center, dtype=complex))))
    return lambda zs: chordal_distance_many(
        zs, np.full(len(zs), center, dtype=complex)) < inradius


def sample_collar(act, collar: Collar, n: int,
                  rng: np.random.Generator) -> np.ndarray:
    """Chart points inside the collar region (parent minus children)."""
    parent_region = component_region(act, collar.parent)
    child_tests = [_region_test(component_region(act, c))
                   for c in collar.children]
    if isinstance(parent_region, Disc):
        def draw(k):
            return parent_region.sample(k, rng)
        parent_test = None
    else:
        center = region_center(parent_region)
        rad = region_diameter(parent_region) / 2.0

        def draw(k):
            return center + (rng.uniform(-rad, rad, k)
                             + 1j * rng.uniform(-rad, rad, k))
        parent_test = _region_test(parent_region)
    out = np.empty(0, dtype=complex)
    for _ in range(60):
        zs = np.asarray(draw(4 * n), dtype=complex)
        ok = np.ones(len(zs), dtype=bool) if parent_test is None \
            else parent_test(zs)
        for test in child_tests:
            ok &= ~test(zs)
        out = np.concatenate([out, zs[ok]])
        if len(out) >= n:
            return out[:n]
    raise RuntimeError("collar sampling starved; region nearly filled")


def _region_contains_point(region, z: complex) -> bool:
    return bool(_region_test(region)(np.array([z], dtype=complex))[0])
