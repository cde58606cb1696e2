"""Acceptance gate: eleven criteria, one printed verdict line each.

Each test prints "CRITERION k: PASS/FAIL (...)" regardless of capture so the
final run log doubles as the acceptance report.
"""

import itertools
import math
import time

import numpy as np
import pytest

from schottky_lab import words
from schottky_lab.action import LETTERS, c0_distance
from schottky_lab.cantor import (
    Collar,
    approximant_levels,
    component_region,
    expansivity_separation,
    nesting_margins,
    sample_collar,
)
from schottky_lab.perturb import mobius_jitter, radial_plateau_perturbation
from schottky_lab.semiconj import (
    StabilityBudget,
    build_semiconjugacy,
    evaluate_h,
    extension_injectivity_probe,
    verify_semiconjugacy,
    verify_stability_neighborhood,
)
from schottky_lab.shadow import (
    class_decomposition,
    composite_defect,
    delta1_modulus,
    noisy_pseudotrajectory,
    orbit_quality,
    realize_pseudotrajectory,
    shadow_search,
    z_sequence,
    GSequence,
)
from schottky_lab.sphere import (
    INF,
    chordal_distance,
    contraction_factor,
    lift,
    random_sphere_points,
    tangent_offsets_many,
)


@pytest.fixture
def verdict(capsys):
    def _verdict(k, ok, details=""):
        line = f"CRITERION {k}: {'PASS' if ok else 'FAIL'}"
        if details:
            line += f" ({details})"
        with capsys.disabled():
            print(line, flush=True)
        assert ok, line
    return _verdict


def _fund_start(act, k):
    rng = np.random.default_rng(1000 + k)
    while True:
        for z in random_sphere_points(64, rng):
            if act.fundamental_domain_contains(complex(z)):
                return complex(z)


def _in_fund_many(act, zs):
    zs = np.asarray(zs, dtype=complex)
    finite = np.isfinite(zs)
    safe = np.where(finite, zs, 0.0)
    ok = np.ones(zs.shape, dtype=bool)
    for d in act.discs.values():
        inside = np.abs(safe - d.center) < d.radius
        member = (inside & finite) if d.bounded_side else ~(inside & finite)
        ok &= ~member
    return ok


def _cloud_diameter(zs):
    xs = np.stack([lift(complex(z)) for z in zs])
    d = np.linalg.norm(xs[:, None, :] - xs[None, :, :], axis=-1)
    return float(d.max())


N_TRAJ = 100
TRAJ_N = 5
TRAJ_DELTA = 1e-4
TRAJ_ETA = 1e-3


@pytest.fixture(scope="session")
def trajectories(act):
    return [noisy_pseudotrajectory(act, _fund_start(act, k), TRAJ_N,
                                   TRAJ_DELTA, seed=k)
            for k in range(N_TRAJ)]


@pytest.fixture(scope="session")
def realizations(act, trajectories):
    t0 = time.time()
    out = [realize_pseudotrajectory(act, seq, eta=TRAJ_ETA, seed=k)
           for k, seq in enumerate(trajectories)]
    return out, time.time() - t0


def test_criterion_1_word_algebra(verdict, rng):
    t0 = time.time()
    sizes_ok = all(len(words.ball(n)) == 2 * 3 ** n - 1 for n in range(9))
    pool = [w for w in words.ball(4) if w]
    laws_ok = True
    for _ in range(500):
        g1, g2, g3 = (pool[rng.integers(len(pool))] for _ in range(3))
        if words.multiply(words.multiply(g1, g2), g3) != \
                words.multiply(g1, words.multiply(g2, g3)):
            laws_ok = False
        if words.multiply(g1, words.inverse(g1)) != "":
            laws_ok = False
    elapsed = time.time() - t0
    verdict(1, sizes_ok and laws_ok and elapsed < 5.0,
            f"ball sizes n<=8, 500 law checks, {elapsed:.2f}s")


def test_criterion_2_model_verification(act, verdict):
    t0 = time.time()
    checks_ok = all(c.passed and c.margin > 0.0 for c in act.checks)
    worst_margin = math.inf
    for s in LETTERS:
        for t in LETTERS:
            if t == words.inverse_letter(s):
                continue
            f = contraction_factor(act.generator(s), act.discs[t],
                                   samples=100_000, seed=11)
            worst_margin = min(worst_margin, 0.5 - f)
    elapsed = time.time() - t0
    verdict(2, checks_ok and worst_margin >= 0.02 and elapsed < 30.0,
            f"{len(act.checks)} checks, half-contraction margin "
            f"{worst_margin:.4f}, {elapsed:.1f}s")


def test_criterion_3_approximants(act, verdict):
    t0 = time.time()
    levels = approximant_levels(act, 8)
    counts_ok = all(len(lvl) == 4 * 3 ** k for k, lvl in enumerate(levels))
    dias = [max(c.diameter() for c in lvl) for lvl in levels]
    ratios = [b / a for a, b in zip(dias, dias[1:])]
    shrink_ok = all(r <= 0.55 for r in ratios) and \
        all(b < a for a, b in zip(dias, dias[1:]))
    min_margin = min(m for _, m in nesting_margins(act, 8))
    elapsed = time.time() - t0
    verdict(3, counts_ok and shrink_ok and min_margin > 0.0
            and elapsed < 60.0,
            f"max ratio {max(ratios):.3f}, min nesting margin "
            f"{min_margin:.2e}, {elapsed:.1f}s")


def test_criterion_4_image_component_containment(act, verdict, rng):
    codes = [c.code for lvl in approximant_levels(act, 4) for c in lvl]
    gs = [g for g in words.ball(4) if g]
    symbolic_bad = 0
    compatible = []
    for w in codes:
        for g in gs:
            additive = len(words.multiply(g, w)) == len(g) + len(w)
            no_cancel = g[-1] != words.inverse_letter(w[0])
            if additive != no_cancel or \
                    (no_cancel and words.multiply(g, w) != g + w):
                symbolic_bad += 1
            if no_cancel:
                compatible.append((g, w))
    numeric_bad = 0
    picks = rng.choice(len(compatible), size=300, replace=False)
    for idx in picks:
        g, w = compatible[idx]
        target = component_region(act, g + w)
        src = component_region(act, w)
        for z in src.sample(10, rng):
            if not target.contains(act.evaluate(g, complex(z))):
                numeric_bad += 1
    verdict(4, symbolic_bad == 0 and numeric_bad == 0,
            f"{len(codes) * len(gs)} symbolic cases, 300x10 numeric, "
            f"{symbolic_bad + numeric_bad} violations")


def test_criterion_5_minimal_escape_words(act, verdict, rng):
    violations = 0
    total = 0
    for depth in (1, 2, 3):
        collars = [c.code for lvl in approximant_levels(act, depth)
                   for c in lvl if len(c.code) == depth + 1]
        pts = np.stack([sample_collar(act, Collar(code), 6, rng)
                        for code in collars])
        flat = pts.reshape(-1)
        success = {}
        for h in words.ball(depth + 2):
            if not h:
                continue
            imgs = act.word_map(h).apply_many(flat)
            ok = _in_fund_many(act, imgs).reshape(len(collars), 6).all(axis=1)
            success[h] = ok
        for i, code in enumerate(collars):
            total += 1
            g_star = words.inverse(code)
            if not success[g_star][i]:
                violations += 1
                continue
            for h, ok in success.items():
                if h != g_star and len(h) <= len(g_star) and ok[i]:
                    violations += 1
                    break
    verdict(5, violations == 0,
            f"{total} collars, depths 1-3, {violations} violations")


def test_criterion_6_expansivity(act, verdict, rng):
    codes = [c.code for lvl in approximant_levels(act, 4) for c in lvl]
    bad = 0
    checked = 0
    for c1, c2 in itertools.combinations(codes, 2):
        if c1 == c2[: len(c1)] or c2 == c1[: len(c2)]:
            continue
        checked += 1
        if expansivity_separation(act, c1, c2)[1] < act.alpha:
            bad += 1
    for _ in range(10_000):
        pair = []
        while len(pair) < 2:
            code = ""
            for _ in range(int(rng.integers(6, 9))):
                choices = [s for s in LETTERS if not code
                           or s != words.inverse_letter(code[-1])]
                code += choices[rng.integers(len(choices))]
            if code not in pair:
                pair.append(code)
        c1, c2 = pair
        if c1 == c2[: len(c1)] or c2 == c1[: len(c2)]:
            continue
        checked += 1
        if expansivity_separation(act, c1, c2)[1] < act.alpha:
            bad += 1
    verdict(6, bad == 0, f"{checked} code pairs, {bad} below alpha")


def test_criterion_7_calibrated_semiconjugacy(act, verdict):
    t0 = time.time()
    budget = StabilityBudget(epsilon=act.alpha / 10.0,
                             delta=act.alpha / 20.0, alpha=act.alpha)

    def passes(log_scale):
        pert = mobius_jitter(act, 10.0 ** log_scale, seed=17)
        return verify_stability_neighborhood(act, pert, budget,
                                             samples=20_000, seed=3).passed

    lo, hi = -7.0, -1.0
    assert passes(lo)
    for _ in range(8):
        mid = 0.5 * (lo + hi)
        if passes(mid):
            lo = mid
        else:
            hi = mid
    scale = 10.0 ** lo
    pert = mobius_jitter(act, scale, seed=17)
    sc = build_semiconjugacy(pert, budget, seed=7)
    rep = verify_semiconjugacy(sc, samples=10_000, seed=7, max_depth=6,
                               mesh_probes=300)
    injective = extension_injectivity_probe(sc, pairs=30, depth=6, seed=7)
    elapsed = time.time() - t0
    verdict(7, rep.equivariance < 1e-6
            and rep.identity_distance < budget.epsilon
            and injective.status == "injective-on-probes"
            and elapsed < 120.0,
            f"scale {scale:.2e}, equivariance {rep.equivariance:.2e}, "
            f"d(h,id) {rep.identity_distance:.2e}, {elapsed:.1f}s")


def test_criterion_8_plateau_collapse(act, verdict):
    width = 0.04
    pp = radial_plateau_perturbation(act, interval_center=0.1, width=width,
                                     amplitude=2.5)
    rng = np.random.default_rng(8)
    n = 64
    pts = tangent_offsets_many(np.full(n, INF), rng.uniform(0, 2 * np.pi, n),
                               rng.uniform(0.081, 0.119, n))
    pts = np.array([z for z in pts if pp.region_contains("A", complex(z))])
    cloud = pts
    for _ in range(8):
        cloud = pp.apply_letter_many("A", cloud)
    dia = _cloud_diameter(cloud)
    sc = build_semiconjugacy(pp, seed=8)
    images = [evaluate_h(sc, complex(z)) for z in cloud[:20]]
    cluster = _cloud_diameter(images)
    verdict(8, len(pts) > 30 and dia > 0.4 * width and cluster < 1e-6,
            f"depth-8 component diameter {dia:.3f} > {0.4 * width:.3f}, "
            f"h-image cluster {cluster:.2e}")


def test_criterion_9_class_reduction(act, trajectories, realizations,
                                     verdict):
    d1 = delta1_modulus(act, TRAJ_DELTA, samples=50_000, seed=0)
    bound = TRAJ_DELTA + d1
    classes = class_decomposition(TRAJ_N)
    worst = 0.0
    for seq in trajectories:
        for cls in classes:
            worst = max(worst, composite_defect(act, z_sequence(seq, cls)))
    results, _ = realizations
    compat = max(r.compat_residual for r in results)
    verdict(9, worst <= bound and compat <= 1e-9,
            f"{N_TRAJ} trajectories, worst composite defect {worst:.2e} "
            f"<= {bound:.2e}, compat {compat:.2e}")


def test_criterion_10_realization_pipeline(act, idp, trajectories,
                                           realizations, verdict):
    results, realize_time = realizations
    t0 = time.time()
    eps = 1e-2
    c0_bound = 2.0 * math.pi * (TRAJ_ETA + TRAJ_DELTA)
    worst_defect = worst_c0 = worst_quality = worst_agree = 0.0
    for k, (seq, res) in enumerate(zip(trajectories, results)):
        worst_defect = max(worst_defect, res.exact_defect)
        worst_c0 = max(worst_c0,
                       c0_distance(idp, res.action, samples=1000))
        sc = build_semiconjugacy(res.action, seed=k, check_samples=100)
        h_pt = evaluate_h(sc, res.sequence.point(""))
        worst_quality = max(worst_quality, orbit_quality(act, seq, h_pt))
        direct = shadow_search(act, seq, epsilon=eps, mode="direct", seed=k)
        worst_agree = max(worst_agree,
                          chordal_distance(direct.point, h_pt))
    elapsed = realize_time + (time.time() - t0)
    verdict(10, worst_defect < 1e-8 and worst_c0 < c0_bound
            and worst_quality < eps and worst_agree < 2.0 * eps
            and elapsed < 600.0,
            f"{N_TRAJ} runs: defect {worst_defect:.2e}, c0 {worst_c0:.2e} < "
            f"{c0_bound:.2e}, shadow quality {worst_quality:.2e}, mode "
            f"agreement {worst_agree:.2e}, {elapsed:.0f}s")


def test_criterion_11_restriction_consistency(act, verdict):
    eps = 1e-3
    violations = 0
    for k in range(20):
        seq = noisy_pseudotrajectory(act, _fund_start(act, 500 + k), 6,
                                     1e-5, seed=k)
        rep = shadow_search(act, seq, epsilon=eps, mode="direct", seed=k)
        for r in (4, 5):
            sub = GSequence(radius=r, points={g: seq.points[g]
                                              for g in words.ball(r)})
            q = orbit_quality(act, sub, rep.point)
            if q > rep.quality + 1e-12 or q >= eps:
                violations += 1
    verdict(11, violations == 0,
            f"20 trials at n=6, radius-4/5 restrictions, "
            f"{violations} violations")
