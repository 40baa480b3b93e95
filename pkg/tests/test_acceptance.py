"""Acceptance criteria, one test each.

Every test records a PASS/FAIL line with the measured numbers; the lines are
printed in the pytest terminal summary (and directly when this file is run as
a script).
"""
import math
import sys
import time

import numpy as np
import pytest

from etbell.analysis import chsh_from_counts, fit_fringe, fit_scan, mean_visibility, sigma_violation
from etbell.events import GeometryConfig, fringe_scan, run_chsh_experiment, simulate_chsh_runs
from etbell.lhv import (
    PostselectionRule,
    check_joint_probabilities,
    deterministic_chsh_values,
    max_postselected_chsh,
    postselected_correlators,
    reproduce_quantum_statistics,
)
from etbell.quantum import bell_phi_plus, canonical_settings, chsh_value, fidelity, random_density, werner_like
from etbell.tomography import (
    ProfileLikelihood,
    ml_reconstruction,
    simulate_tomography_counts,
    table2_settings,
    with_counts,
)

try:
    from conftest import ACCEPTANCE_LINES
except ImportError:  # run as a script from elsewhere
    ACCEPTANCE_LINES = []

SQRT2 = math.sqrt(2.0)


def report(n: int, ok: bool, detail: str, t0: float) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail} ({time.perf_counter() - t0:.1f} s)"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_criterion_1_exact_chsh():
    t0 = time.perf_counter()
    s = canonical_settings()
    errs = {"phi+": abs(chsh_value(bell_phi_plus(), s) - 2 * SQRT2)}
    for v in (0.5, 1 / SQRT2, 0.9, 1.0):
        errs[f"V={v:.4f}"] = abs(chsh_value(werner_like(v), s) - 2 * SQRT2 * v)
    worst = max(errs.values())
    at_threshold = chsh_value(werner_like(1 / SQRT2), s)
    ok = worst <= 1e-9 and abs(at_threshold - 2.0) <= 1e-9
    report(1, ok, f"max |S - 2*sqrt2*V| = {worst:.2e} (tol 1e-9); S(V=1/sqrt2) = {at_threshold:.12f}", t0)


def test_criterion_2_monte_carlo():
    t0 = time.perf_counter()
    # efficiency 1 and 2e5 emissions give about 1e5 accepted pairs per setting
    parts = []
    ok = True
    for scheme in ("franson", "hug"):
        cfg = GeometryConfig(scheme=scheme, visibility=0.9, detection_efficiency=1.0)
        runs = simulate_chsh_runs(cfg, canonical_settings(), 200_000, seed=2024)
        from etbell.events import CountRow, CountTable
        table = CountTable.from_rows(CountRow(r.label, r.phi_a, r.phi_b, tuple(r.counts), r.duration)
                                     for r in runs.values())
        s = chsh_from_counts(table).s
        rates = [r.selection_rate for r in runs.values()]
        accepted = min(int(r.counts.sum()) for r in runs.values())
        cross = sum(r.cross_class_accepted for r in runs.values())
        ok &= abs(s - 2.546) <= 0.03 and all(abs(x - 0.5) <= 0.01 for x in rates) and accepted >= 99_000
        if scheme == "hug":
            ok &= cross == 0
        parts.append(f"{scheme}: S = {s:.4f}, rate = {np.mean(rates):.4f}, min accepted = {accepted}, "
                     f"cross-class = {cross}")
    report(2, ok, "; ".join(parts), t0)


def test_criterion_3_table1_statistics():
    t0 = time.perf_counter()
    sv = sigma_violation(2.468, 0.024)
    # Embedded tomography data scale: ~6500 coincidences per setting pair (2 s at ~3300 per port pair peak)
    cfg = GeometryConfig(visibility=0.9, detection_efficiency=0.15)
    table = run_chsh_experiment(cfg, canonical_settings(), 578_000, seed=7)
    r = chsh_from_counts(table)
    n = np.mean([table[k].total for k in table.labels()])
    ok = abs(sv - 19.5) <= 0.1 and 0.015 <= r.delta_s <= 0.035
    report(3, ok, f"sigma_violation(2.468, 0.024) = {sv:.3f}; simulated S = {r.s:.3f} +/- {r.delta_s:.4f} "
                  f"at {n:.0f} coincidences per setting", t0)


def test_criterion_4_tomography_headline():
    t0 = time.perf_counter()
    r = ml_reconstruction(table2_settings())
    f, s = r.fidelity_with_phi_plus, r.predicted_s
    ok = 0.90 <= f <= 0.96 and abs(s - 2.488) <= 0.05
    report(4, ok, f"embedded-data ML fidelity = {f:.4f} (band [0.90, 0.96]), tr(S rho) = {s:.4f} "
                  f"(band 2.488 +/- 0.05), converged = {r.converged} after {r.iterations} steps", t0)


def test_criterion_5_round_trip():
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    fids = []
    # Hilbert-Schmidt random states (full-rank Gaussian factors)
    for k in range(50):
        rho = random_density(rng)
        counts = simulate_tomography_counts(rho, 1e7, seed=[5, k])
        fids.append(fidelity(ml_reconstruction(with_counts(table2_settings(), counts)).rho, rho))
    lik = ProfileLikelihood(table2_settings())
    worst_grad = 0.0
    h = 1e-6
    for _ in range(20):
        theta = rng.normal(size=16)
        g = lik.gradient(theta)
        fd = np.array([(lik.value(theta + h * e) - lik.value(theta - h * e)) / (2 * h) for e in np.eye(16)])
        worst_grad = max(worst_grad, np.linalg.norm(g - fd) / np.linalg.norm(g))
    ok = min(fids) >= 0.999 and worst_grad <= 1e-6
    report(5, ok, f"min fidelity over 50 states = {min(fids):.6f}; worst gradient rel. error = {worst_grad:.1e}", t0)


def test_criterion_6_loophole():
    t0 = time.perf_counter()
    none, tag, si = (PostselectionRule(k) for k in ("none", "tag_match", "setting_independent"))
    pure_none = max(deterministic_chsh_values(none).values())
    pure_si = max(deterministic_chsh_values(si).values())
    s_tag = max_postselected_chsh(tag).s_star
    s_none = max_postselected_chsh(none).s_star
    s_si = max_postselected_chsh(si).s_star
    rep = reproduce_quantum_statistics(canonical_settings(), 1.0, tag)
    dev = check_joint_probabilities(rep.mixture, tag, canonical_settings(), 1.0) if rep.feasible else math.inf
    cors = postselected_correlators(rep.mixture, tag) if rep.feasible else {}
    e_err = max((abs(cors[k][0] - math.cos(a + b)) for k, (a, b) in canonical_settings().pairs().items()),
                default=math.inf)
    rate_err = max((abs(v[1] - 0.5) for v in cors.values()), default=math.inf)
    hug_infeasible = not reproduce_quantum_statistics(canonical_settings(), 1.0, si).feasible
    ok = (pure_none == 2 and pure_si == 2 and abs(s_none - 2) < 1e-9 and abs(s_si - 2) < 1e-9
          and abs(s_tag - 4) < 1e-9 and rep.feasible and dev <= 1e-7 and e_err <= 1e-7 and rate_err <= 1e-7
          and hug_infeasible)
    report(6, ok, f"integer max S: none = {pure_none}, setting-independent = {pure_si}; S*: none = {s_none:.6f}, "
                  f"hug = {s_si:.6f}, tag_match = {s_tag:.6f}; Franson reproduction feasible = {rep.feasible}, "
                  f"max joint-probability deviation = {dev:.1e}; hug reproduction infeasible = {hug_infeasible}", t0)


def test_criterion_7_fringes():
    t0 = time.perf_counter()
    grid = np.linspace(-math.pi, math.pi, 16, endpoint=False)
    cfg = GeometryConfig(visibility=0.9, detection_efficiency=1.0)
    # 13 900 emissions per point put the c11 peak near 3300
    fits = {}
    peak = 0
    for k, b in enumerate((0.0, -math.pi / 2)):
        sc = fringe_scan(cfg, b, grid, 13_900, seed=[77, k])
        peak = max(peak, int(sc.counts.max()))
        fits[b] = fit_scan(sc.phi_a, sc.counts)
    mv, dmv = mean_visibility(fits)
    phi = np.linspace(0, 2 * math.pi, 12, endpoint=False)
    noiseless = fit_fringe(phi, 1000 * (1 + 0.9 * np.cos(phi))).visibility
    ok = abs(mv - 0.9) <= 0.02 and abs(noiseless - 0.9) <= 1e-9
    report(7, ok, f"mean visibility = {mv:.4f} +/- {dmv:.4f} at peak counts {peak}; "
                  f"noiseless fit error = {abs(noiseless - 0.9):.1e}", t0)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
