"""Command-line pipelines: model verification, approximants, group-indexed
pseudotrajectories, shadowing search, orbit realization, and semiconjugacy.

Every run writes a manifest (inputs, versions, wall time) plus a JSON report
with stable key order; some pipelines add CSV tables and an SVG figure.
Exit status: 0 all gates pass, 1 a gate fails (report still written),
2 invalid invocation.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, words
from .action import build_model_action, c0_distance
from .cantor import approximant_levels, nesting_margins
from .config import DEFAULT_CONFIG, load_config
from .perturb import identity_perturbation, mobius_jitter
from .semiconj import (
    StabilityBudget,
    build_semiconjugacy,
    extension_injectivity_probe,
    verify_semiconjugacy,
    verify_stability_neighborhood,
)
from .shadow import (
    ShadowingFailedError,
    RealizationFailedError,
    class_decomposition,
    composite_defect,
    delta1_modulus,
    noisy_pseudotrajectory,
    pseudo_defect,
    realize_pseudotrajectory,
    shadow_search,
    z_sequence,
)
from .sphere import random_sphere_points


def _sanitize(obj):
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_sanitize(obj), sort_keys=True, indent=2)
                    + "\n", encoding="utf-8")


def _write_manifest(out: Path, args: argparse.Namespace,
                    wall_time: float) -> None:
    import scipy
    _write_json(out / "manifest.json", {
        "inputs": {k: v for k, v in sorted(vars(args).items())
                   if k != "func"},
        "versions": {
            "schottky_lab": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "wall_time_seconds": wall_time,
        "finished_at_unix": time.time(),
    })


def _load(args) -> "ActionConfig":
    return load_config(args.config) if args.config else DEFAULT_CONFIG


def _start_point(act, seed: int) -> complex:
    rng = np.random.default_rng(seed)
    for z in random_sphere_points(256, rng):
        if act.fundamental_domain_contains(z):
            return complex(z)
    return complex(random_sphere_points(1, rng)[0])


# ---------------------------------------------------------------------------
# Pipelines (each returns (report dict, gate bool, extra file writers))


def run_verify_model(args, out: Path):
    act = build_model_action(_load(args))
    checks = [c.as_dict() for c in act.checks]
    passed = all(c["margin"] > 0.0 for c in checks)
    return {"alpha": act.alpha, "checks": checks, "passed": passed}, passed


def run_approximant(args, out: Path):
    act = build_model_action(_load(args))
    n = args.n if args.n is not None else 3
    levels = approximant_levels(act, n)
    diameters = [max(c.diameter() for c in lvl) for lvl in levels]
    ratios = [diameters[i + 1] / diameters[i] for i in range(n)]
    margins = nesting_margins(act, n) if n >= 1 else []
    min_margin = min((m for _, m in margins), default=math.inf)
    comps = levels[-1]
    passed = (len(comps) == 4 * 3 ** n
              and all(r <= 0.55 for r in ratios)
              and min_margin > 0.0)
    report = {
        "n": n,
        "component_count": len(comps),
        "expected_count": 4 * 3 ** n,
        "max_diameter_per_level": diameters,
        "diameter_ratios": ratios,
        "min_nesting_margin": min_margin,
        "passed": passed,
    }
    with open(out / "components.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["code", "center_re", "center_im", "chordal_diameter"])
        for c in comps:
            z = c.center()
            w.writerow([words.to_ascii(c.code), repr(z.real), repr(z.imag),
                        repr(c.diameter())])
    _write_svg(out / "components.svg", comps)
    return report, passed


def _write_svg(path: Path, comps) -> None:
    lines = ['<?xml version="1.0" encoding="UTF-8"?>',
             '<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
             'viewBox="-3 -3 6 6">',
             '<rect x="-3" y="-3" width="6" height="6" fill="white"/>']
    for c in comps:
        d = c.region
        lines.append(f'<circle cx="{d.center.real:.6g}" '
                     f'cy="{d.center.imag:.6g}" r="{d.radius:.6g}" '
                     'fill="none" stroke="black" stroke-width="0.004"/>')
    lines.append("</svg>")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _build_pseudo(args, act):
    n = args.n if args.n is not None else 5
    delta = args.delta if args.delta is not None else 1e-4
    seed = args.seed if args.seed is not None else 0
    y0 = _start_point(act, seed)
    return noisy_pseudotrajectory(act, y0, n, delta, seed=seed), n, delta, seed


def run_pseudo(args, out: Path):
    act = build_model_action(_load(args))
    seq, n, delta, seed = _build_pseudo(args, act)
    rep = pseudo_defect(act, seq)
    classes = class_decomposition(n)
    worst_composite = max(composite_defect(act, z_sequence(seq, c))
                          for c in classes)
    d1 = delta1_modulus(act, delta,
                        samples=args.samples or 20_000, seed=seed)
    passed = (rep.max_defect < delta
              and worst_composite <= delta + d1)
    report = {
        "n": n, "delta": delta, "seed": seed,
        "defect": rep.max_defect,
        "defect_bound": delta,
        "worst_edge": [words.to_ascii(rep.worst_word), rep.worst_letter],
        "edge_count": rep.edge_count,
        "class_count": len(classes),
        "worst_composite_defect": worst_composite,
        "composite_bound": delta + d1,
        "delta1": d1,
        "passed": passed,
    }
    with open(out / "points.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["word", "re", "im"])
        for g in sorted(seq.points, key=words.word_key):
            z = seq.points[g]
            w.writerow([words.to_ascii(g), repr(z.real), repr(z.imag)])
    return report, passed


def run_shadow(args, out: Path):
    act = build_model_action(_load(args))
    seq, n, delta, seed = _build_pseudo(args, act)
    epsilon = args.epsilon if args.epsilon is not None else 1e-2
    mode = args.mode
    try:
        rep = shadow_search(act, seq, epsilon, mode=mode, seed=seed)
        report = {
            "n": n, "delta": delta, "epsilon": epsilon, "seed": seed,
            "mode": mode, "found": True,
            "point": [rep.point.real, rep.point.imag],
            "quality": rep.quality,
            "quality_bound": epsilon,
            "passed": True,
        }
        return report, True
    except (ShadowingFailedError, RealizationFailedError) as exc:
        report = {
            "n": n, "delta": delta, "epsilon": epsilon, "seed": seed,
            "mode": mode, "found": False, "reason": str(exc),
            "passed": False,
        }
        return report, False


def run_realize(args, out: Path):
    act = build_model_action(_load(args))
    seq, n, delta, seed = _build_pseudo(args, act)
    eta = args.eta if args.eta is not None else 1e-3
    res = realize_pseudotrajectory(act, seq, eta, seed=seed)
    c0 = c0_distance(identity_perturbation(act), res.action,
                     samples=args.samples or 20_000, seed=seed)
    c0_bound = 2.0 * math.pi * (eta + delta)
    passed = (res.exact_defect < 1e-8 and res.max_displacement < eta
              and c0 < c0_bound)
    report = {
        "n": n, "delta": delta, "eta": eta, "seed": seed,
        "exact_defect": res.exact_defect,
        "exact_defect_bound": 1e-8,
        "max_displacement": res.max_displacement,
        "displacement_bound": eta,
        "c0_distance": c0,
        "c0_bound": c0_bound,
        "constraint_count": res.constraint_count,
        "compat_residual": res.compat_residual,
        "lambda": res.lam,
        "retries": res.retries,
        "passed": passed,
    }
    return report, passed


def run_semiconj(args, out: Path):
    act = build_model_action(_load(args))
    seed = args.seed if args.seed is not None else 0
    epsilon = args.epsilon if args.epsilon is not None \
        else 0.95 * act.alpha / 8.0
    delta = args.delta if args.delta is not None else epsilon / 2.0
    budget = StabilityBudget(epsilon=epsilon, delta=delta, alpha=act.alpha)
    # jitter calibrated so its measured C0 size sits at half the budget
    scale = delta / 100.0
    pert = mobius_jitter(act, scale, seed=seed)
    c0 = c0_distance(identity_perturbation(act), pert, samples=20_000,
                     seed=seed)
    if c0 > 0.0:
        scale *= 0.5 * delta / c0
        pert = mobius_jitter(act, scale, seed=seed)
        c0 = c0_distance(identity_perturbation(act), pert, samples=20_000,
                         seed=seed)
    depth = args.depth if args.depth is not None else None
    checklist = verify_stability_neighborhood(
        act, pert, budget, samples=args.samples or 20_000, seed=seed,
        depth=depth)
    sc = build_semiconjugacy(pert, budget, seed=seed)
    residuals = verify_semiconjugacy(sc, samples=min(args.samples or 2000,
                                                     4000), seed=seed)
    verdict = extension_injectivity_probe(sc, seed=seed)
    passed = (checklist.passed
              and residuals.equivariance < 1e-6
              and residuals.identity_distance < epsilon
              and verdict.status == "injective-on-probes")
    report = {
        "epsilon": epsilon, "delta": delta, "seed": seed,
        "jitter_scale": scale, "c0_distance": c0,
        "checklist": [{"name": i.name, "passed": i.passed,
                       "margin": i.margin} for i in checklist.items],
        "residuals": {
            "equivariance": residuals.equivariance,
            "equivariance_bound": 1e-6,
            "identity_distance": residuals.identity_distance,
            "identity_bound": epsilon,
            "surjectivity_gap": residuals.surjectivity_gap,
            "samples": residuals.samples,
        },
        "injectivity_verdict": verdict.status,
        "passed": passed,
    }
    rng = np.random.default_rng(seed)
    from .semiconj import evaluate_h
    with open(out / "h_samples.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["x_re", "x_im", "hx_re", "hx_im"])
        for z in random_sphere_points(200, rng):
            hz = evaluate_h(sc, complex(z))
            w.writerow([repr(z.real), repr(z.imag),
                        repr(hz.real), repr(hz.imag)])
    return report, passed


# ---------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML action config")
    common.add_argument("--n", type=int)
    common.add_argument("--delta", type=float)
    common.add_argument("--epsilon", type=float)
    common.add_argument("--eta", type=float)
    common.add_argument("--depth", type=int)
    common.add_argument("--samples", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")

    p = argparse.ArgumentParser(
        prog="schottky-lab",
        description="Numerical lab for a free-group ping-pong action")
    sub = p.add_subparsers(dest="pipeline", required=True)
    sub.add_parser("verify-model", parents=[common]).set_defaults(
        func=run_verify_model)
    sub.add_parser("approximant", parents=[common]).set_defaults(
        func=run_approximant)
    sub.add_parser("pseudo", parents=[common]).set_defaults(func=run_pseudo)
    ps = sub.add_parser("shadow", parents=[common])
    ps.add_argument("--mode", choices=["direct", "via_realization"],
                    default="direct")
    ps.set_defaults(func=run_shadow)
    sub.add_parser("realize", parents=[common]).set_defaults(func=run_realize)
    sub.add_parser("semiconj", parents=[common]).set_defaults(
        func=run_semiconj)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    out = Path(args.out) if args.out else Path("runs") / args.pipeline
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    try:
        report, passed = args.func(args, out)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _write_json(out / "report.json", report)
    _write_manifest(out, args, time.time() - t0)
    print(f"{args.pipeline}: {'pass' if passed else 'FAIL'} "
          f"(report in {out})")
    return 0 if passed else 1


if __name__ == "__main__":
    sys.exit(main())
