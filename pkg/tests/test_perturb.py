"""Perturbation constructions: interpolating diffeos, jitter, radial plateau."""

import math

import numpy as np
import pytest

from schottky_lab import words
from schottky_lab.action import LETTERS, c0_distance, c1_distance_estimate
from schottky_lab.perturb import (
    DiffeoCollisionError,
    PlateauPlacementError,
    build_interpolating_diffeo,
    identity_perturbation,
    mobius_jitter,
    perturb_action,
    radial_plateau_perturbation,
    round_trip_error,
)
from schottky_lab.sphere import (
    INF,
    chordal_distance,
    random_sphere_points,
    tangent_offset,
)


def random_pairs(rng, n, lam):
    pts = random_sphere_points(8 * n, rng)
    # keep a well-spread subset so sources are distinct
    srcs = []
    for z in pts:
        if all(chordal_distance(z, s) > 0.2 for s in srcs):
            srcs.append(complex(z))
        if len(srcs) == n:
            break
    return [(s, tangent_offset(s, rng.uniform(0, 2 * math.pi),
                               rng.uniform(0, 0.8 * lam))) for s in srcs]


def test_diffeo_interpolates_exactly(rng):
    lam = 0.02
    pairs = random_pairs(rng, 12, lam)
    f = build_interpolating_diffeo(pairs, lam)
    for p, q in pairs:
        assert chordal_distance(f(p), q) < 1e-10
        assert chordal_distance(f.inverse(q), p) < 1e-9


def test_diffeo_stays_near_identity(rng):
    lam = 0.02
    f = build_interpolating_diffeo(random_pairs(rng, 10, lam), lam)
    assert f.sup_distance(samples=3000) < 2.0 * math.pi * lam


def test_diffeo_inverse_round_trip(rng):
    lam = 0.015
    f = build_interpolating_diffeo(random_pairs(rng, 8, lam), lam)
    zs = random_sphere_points(300, rng)
    back = f.apply_inverse_many(f.apply_many(zs))
    from schottky_lab.sphere import chordal_distance_many
    assert float(np.max(chordal_distance_many(zs, back))) < 1e-9


def test_diffeo_rejects_moves_at_or_above_lambda():
    lam = 0.01
    pairs = [(0.5 + 0j, 0.5 + 2 * lam + 0j)]
    with pytest.raises(ValueError):
        build_interpolating_diffeo(pairs, lam)


def test_diffeo_rejects_clustered_targets_by_default():
    lam = 0.01
    gap = lam * 1e-3           # below the default spacing floor
    pairs = [(0.5 + 0j, 0.5 + 0.001j),
             (0.5 + 0.004j, 0.5 + 0.001j + gap)]
    with pytest.raises(DiffeoCollisionError):
        build_interpolating_diffeo(pairs, lam)
    # with the check disabled the same data builds fine
    f = build_interpolating_diffeo(pairs, lam, min_gap=0.0)
    for p, q in pairs:
        assert chordal_distance(f(p), q) < 1e-10


def test_identity_perturbation_is_exact(act, idp, rng):
    zs = random_sphere_points(200, rng)
    for s in LETTERS:
        a = act.apply_letter_many(s, zs)
        b = idp.apply_letter_many(s, zs)
        from schottky_lab.sphere import chordal_distance_many
        assert float(np.max(chordal_distance_many(a, b))) == 0.0


def test_perturbed_action_word_evaluation(act, rng):
    lam = 0.01
    f = build_interpolating_diffeo(random_pairs(rng, 6, lam), lam)
    pa = perturb_action(act, f)
    z = 0.4 + 0.3j
    w = z
    for s in reversed("aBa"):
        w = pa.apply_letter(s, w)
    assert chordal_distance(pa.evaluate("aBa", z), w) < 1e-12


def test_perturbed_inverses_are_actual_inverses(act, rng):
    lam = 0.01
    f = build_interpolating_diffeo(random_pairs(rng, 6, lam), lam)
    pa = perturb_action(act, f)
    assert round_trip_error(pa, samples=300) < 1e-9


def test_jitter_c0_scales_with_parameter(act, idp):
    d1 = c0_distance(idp, mobius_jitter(act, 1e-5, seed=2), samples=4000)
    d2 = c0_distance(idp, mobius_jitter(act, 1e-4, seed=2), samples=4000)
    assert 0.0 < d1 < d2
    assert 3.0 < d2 / d1 < 30.0


def test_jitter_c1_within_factor_of_c0(act, idp):
    pj = mobius_jitter(act, 1e-4, seed=2)
    c0 = c0_distance(idp, pj, samples=300)
    c1 = c1_distance_estimate(idp, pj, samples=60)
    assert c0 <= c1 <= 10.0 * c0


def test_plateau_fixes_the_plateau_annulus(act):
    pp = radial_plateau_perturbation(act, interval_center=0.02, width=0.004,
                                     amplitude=0.6)
    # points at the plateau's chordal distance from the repelling pole (inf)
    for ang in np.linspace(0, 2 * math.pi, 16, endpoint=False):
        z = tangent_offset(INF, float(ang), 0.02)
        assert chordal_distance(pp.apply_letter("a", z), z) < 1e-12


def test_plateau_agrees_with_base_off_support(act):
    pp = radial_plateau_perturbation(act, interval_center=0.02, width=0.004,
                                     amplitude=0.6)
    # far from the pole the perturbed generator equals the model exactly
    for z in (0.3 + 0.4j, 1.5 - 0.2j, 0.0j):
        assert chordal_distance(pp.apply_letter("a", z),
                                act.apply_letter("a", z)) < 1e-12
    # generator b untouched
    assert chordal_distance(pp.apply_letter("b", 2.0 + 1j),
                            act.apply_letter("b", 2.0 + 1j)) == 0.0


def test_plateau_rejects_insufficient_amplitude(act):
    # the displacement needed to flatten the map grows with the plateau
    # location; a tiny amplitude budget cannot fit it
    with pytest.raises(PlateauPlacementError):
        radial_plateau_perturbation(act, interval_center=0.02, width=0.004,
                                    amplitude=1e-4)


def test_plateau_zero_amplitude_is_identity(act, rng):
    pp = radial_plateau_perturbation(act, interval_center=0.02, width=0.004,
                                     amplitude=0.0)
    zs = random_sphere_points(100, rng)
    a = pp.apply_letter_many("a", zs)
    b = act.apply_letter_many("a", zs)
    from schottky_lab.sphere import chordal_distance_many
    assert float(np.max(chordal_distance_many(a, b))) == 0.0


def test_plateau_inverse_round_trip(act):
    pp = radial_plateau_perturbation(act, interval_center=0.02, width=0.004,
                                     amplitude=0.6)
    assert round_trip_error(pp, samples=400) < 1e-9


def test_boundary_polygon_on_perturbed_inverse_disc(act, idp):
    poly = idp.boundary_polygon("A", 256)
    assert len(poly) == 256
    # for the identity perturbation it matches the exact disc boundary
    d = act.discs["A"]
    assert float(np.max(np.abs(np.abs(poly - d.center) - d.radius))) < 1e-9
