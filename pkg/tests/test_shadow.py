"""Pseudotrajectories, coset chains, shadowing, and realization."""

import math

import numpy as np
import pytest

from schottky_lab import words
from schottky_lab.shadow import (
    CHAIN_TOKEN,
    GSequence,
    ShadowingFailedError,
    class_decomposition,
    composite_defect,
    composite_map,
    delta1_modulus,
    noisy_pseudotrajectory,
    orbit_quality,
    orbit_sequence,
    pseudo_defect,
    realize_pseudotrajectory,
    shadow_search,
    z_sequence,
    z_shadow,
)
from schottky_lab.sphere import chordal_distance, tangent_offset


def test_gsequence_requires_full_ball(act):
    seq = orbit_sequence(act, 0.4 + 0.2j, 2)
    with pytest.raises(ValueError):
        GSequence(radius=2, points={"": 0.0 + 0.0j})
    assert seq.point("") == 0.4 + 0.2j


def test_exact_orbit_has_zero_defect(act):
    seq = orbit_sequence(act, 0.4 + 0.2j, 3)
    rep = pseudo_defect(act, seq)
    assert rep.max_defect < 1e-12
    # edges (g, s) with both endpoints in the ball, counted directionally
    n_edges = sum(1 for g in words.ball(3) for s in "aAbB"
                  if len(words.multiply(s, g)) <= 3)
    assert rep.edge_count == n_edges


def test_noisy_defect_below_delta_both_directions(act):
    delta = 1e-3
    seq = noisy_pseudotrajectory(act, 0.4 + 0.2j, 4, delta, seed=5)
    assert 0.0 < pseudo_defect(act, seq).max_defect < delta


def test_single_moved_point_defect_bracket(act):
    seq = orbit_sequence(act, 0.4 + 0.2j, 3)
    bump = 1e-2
    seq.points["ab"] = tangent_offset(seq.points["ab"], 0.3, bump)
    d = pseudo_defect(act, seq).max_defect
    # bi-Lipschitz constants of the generators bound the edge defect
    assert 0.02 * bump < d < 50.0 * bump


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_class_decomposition_partitions_ball(n):
    classes = class_decomposition(n)
    members = [w for c in classes for w in c.members]
    assert len(members) == 2 * 3 ** n - 1
    assert set(members) == set(words.ball(n))


def test_class_chain_structure():
    classes = class_decomposition(2)
    by_rep = {c.representative: c for c in classes}
    cls_e = by_rep[""]
    assert cls_e.members == ("Ab", "", "Ba")
    assert cls_e.offsets == (-1, 0, 1)
    # members really are consecutive left multiplications by the token
    for c in classes:
        for w1, w2 in zip(c.members, c.members[1:]):
            assert words.multiply(CHAIN_TOKEN, w1) == w2


def test_composite_map_matches_word_map(act):
    m = composite_map(act)
    for z in (0.2 + 0.1j, 2.0 - 1j):
        assert chordal_distance(m(z), act.evaluate("Ba", z)) < 1e-12


def test_composite_defect_bounded_by_modulus(act):
    delta = 1e-4
    seq = noisy_pseudotrajectory(act, 0.3 + 0.4j, 4, delta, seed=2)
    d1 = delta1_modulus(act, delta, samples=20_000, seed=3)
    worst = max(composite_defect(act, z_sequence(seq, c))
                for c in class_decomposition(4))
    assert worst <= delta + d1


def test_z_shadow_tracks_noisy_chain(act, rng):
    cmap = composite_map(act)
    z0 = 0.5 + 0.3j
    zs = [z0]
    for _ in range(8):
        zs.append(cmap(zs[-1]))
    noisy = np.array([tangent_offset(z, rng.uniform(0, 2 * math.pi), 1e-5)
                      for z in zs])
    y, resid = z_shadow(cmap, noisy, eta=1e-3)
    assert resid < 1e-3
    w = y
    for m in range(len(noisy)):
        if m:
            w = cmap(w)
        assert chordal_distance(w, noisy[m]) <= 1e-3


def test_z_shadow_fails_on_untrackable_chain(act):
    cmap = composite_map(act)
    # two far-apart points cannot be a piece of one exact orbit at this eta
    with pytest.raises(ShadowingFailedError):
        z_shadow(cmap, np.array([0.5 + 0j, 0.5 + 1j]), eta=1e-4)


def test_realization_makes_the_data_an_exact_orbit(act):
    seq = noisy_pseudotrajectory(act, 0.3 + 0.4j, 3, 1e-4, seed=7)
    res = realize_pseudotrajectory(act, seq, eta=1e-3, seed=7)
    assert res.exact_defect < 1e-8
    assert res.max_displacement < 1e-3
    assert res.compat_residual < 1e-9
    rep = pseudo_defect(res.action, res.sequence)
    assert rep.max_defect < 1e-8


def test_realized_action_is_c0_close(act, idp):
    from schottky_lab.action import c0_distance
    seq = noisy_pseudotrajectory(act, 0.3 + 0.4j, 3, 1e-4, seed=7)
    res = realize_pseudotrajectory(act, seq, eta=1e-3, seed=7)
    assert c0_distance(idp, res.action, samples=5000) < \
        2.0 * math.pi * (1e-3 + 1e-4)


def test_shadow_search_direct_recovers_orbit_start(act):
    y_true = 0.31 + 0.42j
    seq = noisy_pseudotrajectory(act, y_true, 4, 1e-5, seed=11)
    rep = shadow_search(act, seq, epsilon=1e-3, mode="direct", seed=11)
    assert rep.quality < 1e-3
    assert orbit_quality(act, seq, rep.point) == pytest.approx(rep.quality)
    assert chordal_distance(rep.point, y_true) < 1e-3


def test_shadow_search_reports_not_found(act):
    seq = noisy_pseudotrajectory(act, 0.3 + 0.4j, 3, 1e-2, seed=1)
    # noise floor far above the requested quality
    with pytest.raises(ShadowingFailedError):
        shadow_search(act, seq, epsilon=1e-9, mode="direct", seed=1)


def test_shadow_modes_agree(act):
    seq = noisy_pseudotrajectory(act, 0.3 + 0.4j, 3, 1e-4, seed=13)
    direct = shadow_search(act, seq, epsilon=1e-2, mode="direct", seed=13)
    via = shadow_search(act, seq, epsilon=1e-2, mode="via_realization",
                        seed=13)
    assert via.quality < 1e-2
    assert chordal_distance(direct.point, via.point) < 2e-2
