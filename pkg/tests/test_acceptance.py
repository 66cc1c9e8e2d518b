"""Acceptance criteria, one test per criterion, one PASS/FAIL line each.

Heavy shared artifacts (sweeps) are module-scoped fixtures.  The tuned
parameter sets live in the CLI presets; distance-specific variants used
here are derived from the same tuning runs.
"""

import math
import time

import numpy as np
import pytest

from hdqkd.channel import behaviour, monte_carlo, observed_statistics
from hdqkd.config import ProtocolConfig
from hdqkd.decoy import estimate_bounds
from hdqkd.entropy import pinch, postselect, refined_pinsker, trace_norm_sdp
from hdqkd.errors import EstimationAbortError
from hdqkd.keyrate import key_rate, optimize_params, sweep
from hdqkd.oracle import oracle_bounds, oracle_gamma, oracle_transition
from hdqkd.povm import OUTCOMES, povm_set
from hdqkd.states import virtual_source
from hdqkd.validate import _random_feasible_state

HEADLINE_RATE = 6.9e-3  # bits/pulse at 5 km, 1 GHz clock

# Tuned parameter sets (this package's optimizer; not published values).
FIG3_5KM = dict(intensities=(0.50, 0.04, 0.012, 0.0001), tau=1.62,
                distance_km=5.0, eta_det=0.72, trusted_detector=True,
                intensity_probs=(0.97, 0.01, 0.01, 0.01))
# the 15 km point sits at the edge of the protocol's reach; the margin and
# tolerance knobs are tightened so the estimation gives away less than the
# remaining headroom (see docs/config.md for the validity constraints)
FIG3_15KM = dict(intensities=(0.08, 0.04, 0.0096, 0.0001), tau=2.3,
                 distance_km=15.0, eta_det=0.72, trusted_detector=True,
                 intensity_probs=(0.97, 0.01, 0.01, 0.01),
                 quad_tol=1e-12, phase_tol=1e-12, lp_feas_margin=1e-10,
                 solver_tol=1e-9)
FIG2 = dict(intensities=(0.12, 0.06, 0.015, 0.0001), tau=1.8,
            distance_km=5.0, eta_det=1.0, trusted_detector=True,
            intensity_probs=(0.97, 0.01, 0.01, 0.01))

SWEEP_KM = (0.01, 2.5, 5.0, 7.5, 10.0, 12.5, 15.0)


def report(criterion: str, ok: bool, detail: str):
    print(f"\n[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}")
    assert ok, f"{criterion}: {detail}"


@pytest.fixture(scope="module")
def fig2_curves():
    cfg = ProtocolConfig(**FIG2)
    four = sweep(cfg, SWEEP_KM, mode="four-intensity")
    inf = sweep(cfg, SWEEP_KM, mode="infinite-decoy")
    return four, inf


def test_criterion_1_headline_rate():
    t0 = time.time()
    cfg = optimize_params(ProtocolConfig(**FIG3_5KM), sweeps=1,
                          points_per_line=4)
    rate = key_rate(cfg).rate
    elapsed = time.time() - t0
    ok = HEADLINE_RATE / 2 <= rate <= HEADLINE_RATE * 2 and elapsed < 1800
    report("criterion 1 (headline rate, 5 km, 72% trusted)", ok,
           f"R = {rate:.3e} bits/pulse vs {HEADLINE_RATE:.1e} "
           f"(window x2), optimized in {elapsed:.0f} s")


def test_criterion_2_reach():
    near = key_rate(ProtocolConfig(**FIG3_15KM)).rate
    far_cfg = ProtocolConfig(**{**FIG3_15KM, "distance_km": 40.0})
    try:
        far = key_rate(far_cfg).rate
    except EstimationAbortError:
        far = 0.0
    ok = near > 0.0 and far == 0.0
    report("criterion 2 (reach)", ok,
           f"R(15 km) = {near:.3e} > 0, R(40 km) = {far:.1e}")


def test_criterion_3_decoy_gap_shape(fig2_curves):
    four, inf = fig2_curves
    rel_gaps = []
    dominated = True
    for r4, ri in zip(four, inf):
        rate4 = 0.0 if r4 is None else r4.rate
        rate_inf = 0.0 if ri is None else ri.rate
        dominated &= rate_inf >= rate4 - 1e-9
        rel_gaps.append((rate_inf - rate4) / rate_inf if rate_inf > 0 else 1.0)
    widening = all(b >= a - 1e-6 for a, b in zip(rel_gaps, rel_gaps[1:]))
    near = [g for km, g in zip(SWEEP_KM, rel_gaps) if km < 5.0]
    coincident = all(g < 0.10 for g in near)
    ok = dominated and widening and coincident
    report("criterion 3 (estimation-gap shape, ideal detector)", ok,
           f"gaps {['%.3f' % g for g in rel_gaps]} along {SWEEP_KM} km; "
           f"dominated={dominated}, widening={widening}, "
           f"sub-5km gaps {['%.3f' % g for g in near]}")


def test_criterion_4_trusted_dominates():
    cfg = ProtocolConfig(**{**FIG3_5KM, "intensities": (0.12, 0.06, 0.015, 0.0001),
                            "tau": 1.8})
    distances = (0.01, 2.5, 5.0, 7.5, 10.0)
    trusted = sweep(cfg, distances, trust="trusted")
    untrusted = sweep(cfg, distances, trust="untrusted")
    pairs = [((0.0 if t is None else t.rate), (0.0 if u is None else u.rate))
             for t, u in zip(trusted, untrusted)]
    ok = all(t >= u - 1e-9 for t, u in pairs)
    report("criterion 4 (trusted >= untrusted)", ok,
           "; ".join(f"{km} km: {t:.2e} vs {u:.2e}"
                     for km, (t, u) in zip(distances, pairs)))


def test_criterion_5_sdp_oracle_equivalence():
    cfg = ProtocolConfig(**FIG3_5KM)
    rng = np.random.default_rng(2718)
    worst = 0.0
    for n in (0, 1, 2):
        povms = {x: povm_set(x, n, cfg.tau, cfg.analysis_eta_det,
                             cfg.quad_tol) for x in (0, 1)}
        source = virtual_source(n, 0.9)
        for _ in range(20):
            rho = _random_feasible_state(rng, n)
            value, _ = trace_norm_sdp(n, source, None, povms, fixed_rho=rho)
            sigma = postselect(rho, povms[0], n).sigma
            lam = (sigma - pinch(sigma)) / 0.9
            reference = float(np.abs(np.linalg.eigvalsh(lam)).sum())
            worst = max(worst, abs(value - reference))
    ok = worst <= 1e-6
    report("criterion 5 (SDP vs eigenvalue trace norm, 20 states per n)", ok,
           f"max deviation {worst:.2e} (limit 1e-6)")


def test_criterion_6_lp_bracketing():
    worst = -math.inf
    for distance in (2.0, 5.0, 10.0):
        for tau in (1.3, 1.7, 2.1):
            cfg = ProtocolConfig(intensities=(0.4, 0.1, 0.02, 0.001),
                                 tau=tau, distance_km=distance, eta_det=0.72,
                                 trusted_detector=True)
            stats = observed_statistics(cfg)
            bounds = estimate_bounds(cfg, stats)
            slack = 1e-7 + bounds.max_gap + cfg.lp_feas_margin
            for (n, b, a, x), (lo, hi) in bounds.gamma.items():
                truth = oracle_gamma(cfg, n, b, a, x)
                worst = max(worst, lo - truth - slack, truth - hi - slack)
            for (n, m, a, x), (lo, _) in bounds.q_mn.items():
                truth = float(oracle_transition(cfg, n)[m])
                worst = max(worst, lo - truth - slack)
    ok = worst <= 0.0
    report("criterion 6 (LP bracketing on 3x3 grid)", ok,
           f"worst slack-adjusted violation {worst:.2e} (<= 0 required)")


def test_criterion_7_statistics_validation():
    cfg = ProtocolConfig(intensities=(0.5, 0.2, 0.05, 0.0), tau=1.8,
                         intensity_probs=(0.25, 0.25, 0.25, 0.25), p_z=0.5,
                         distance_km=5.0, eta_det=0.72, trusted_detector=True)
    analytic = observed_statistics(cfg)
    empirical = monte_carlo(cfg, seed=20240, rounds=1_000_000)
    worst = 0.0
    for i in range(4):
        for a in (0, 1):
            for x in (0, 1):
                n_cell = max(int(empirical.cell_counts[i, a, x]), 1)
                for b in range(4):
                    p = analytic.g[i, a, x, b]
                    se = math.sqrt(max(p * (1 - p), 1e-12) / n_cell)
                    worst = max(worst, abs(empirical.g[i, a, x, b] - p) / se)
    # gain/QBER deviations are functions of the same counts; check anyway
    for i in range(4):
        p = analytic.q[i, 0]
        n_cell = max(int(empirical.cell_counts[i, :, 0].sum()), 1)
        se = math.sqrt(max(p * (1 - p), 1e-12) / n_cell)
        worst = max(worst, abs(empirical.q[i, 0] - p) / se)
    phase_diff = float(np.max(np.abs(behaviour(cfg, "lo")
                                     - behaviour(cfg, "source"))))
    ok = worst <= 4.0 and phase_diff < 1e-8
    report("criterion 7 (Monte-Carlo and phase-order validation)", ok,
           f"max |MC - analytic| = {worst:.2f} SE (limit 4); "
           f"phase-order diff {phase_diff:.1e} (limit 1e-8)")


def test_criterion_8_property_suites():
    failures = []

    # POVM per-block completeness and positivity
    for x in (0, 1):
        for eta in (1.0, 0.72):
            ops = povm_set(x, 2, 1.62, eta)
            for m in range(3):
                total = sum(np.asarray(ops[b].block(m)) for b in OUTCOMES)
                if np.abs(total - np.eye(m + 1)).max() >= 1e-8:
                    failures.append(f"completeness x={x} eta={eta} m={m}")
                for b in OUTCOMES:
                    if np.linalg.eigvalsh(ops[b].block(m)).min() <= -1e-9:
                        failures.append(f"psd x={x} eta={eta} m={m} b={b}")

    # Fock orthonormality
    from hdqkd.fock import FULL_LINE, cross_gram
    for k in range(13):
        for l in range(k, 13):
            err = abs(cross_gram(k, l, FULL_LINE, 1.0) - (1.0 if k == l else 0.0))
            if err >= 1e-9:
                failures.append(f"orthonormality ({k},{l}) err {err:.1e}")

    # source states
    for n in range(9):
        rho = virtual_source(n, 0.95).rho_xa
        if abs(np.trace(rho) - 1) > 1e-10 or np.linalg.eigvalsh(rho).min() < -1e-10:
            failures.append(f"rho_XA n={n}")

    # pinch idempotence and Lambda structure
    rng = np.random.default_rng(31)
    cfg = ProtocolConfig(**FIG3_5KM)
    for n in (0, 1, 2):
        povms_z = povm_set(0, n, cfg.tau, cfg.analysis_eta_det, cfg.quad_tol)
        rho = _random_feasible_state(rng, n)
        sigma = postselect(rho, povms_z, n).sigma
        if np.abs(pinch(pinch(sigma)) - pinch(sigma)).max() > 1e-14:
            failures.append(f"pinch idempotence n={n}")
        lam = sigma - pinch(sigma)
        if abs(np.trace(lam)) > 1e-12 or np.abs(lam - lam.T).max() > 1e-12:
            failures.append(f"lambda structure n={n}")

    # refined Pinsker monotonicity on a 100x100 grid
    ps = np.linspace(1e-3, 1.0, 100)
    vs = np.linspace(0.0, 1.0, 100)
    grid = np.array([[refined_pinsker((p, p), min(v, p)) for v in vs]
                     for p in ps])
    if not np.all(np.diff(grid, axis=1) >= -1e-12):
        failures.append("f not nondecreasing in v")
    # fix v, vary p (only where v <= p so no clamping)
    for j, v in enumerate(vs[: 60]):
        column = [refined_pinsker((p, p), v) for p in ps if p >= v]
        if not all(b <= a + 1e-12 for a, b in zip(column, column[1:])):
            failures.append(f"f not nonincreasing in p at v={v:.2f}")
            break

    # n = 0 exact-constraint saturation
    ob = oracle_bounds(cfg)
    povms = {x: povm_set(x, 0, cfg.tau, cfg.analysis_eta_det, cfg.quad_tol)
             for x in (0, 1)}
    v0, _ = trace_norm_sdp(0, virtual_source(0, cfg.p_z), ob, povms,
                           tol=cfg.solver_tol)
    ratio = v0 / ob.pps[0][1]
    if not 0.99 <= ratio <= 1.0 + 1e-9:
        failures.append(f"vacuum saturation ratio {ratio:.4f}")

    ok = not failures
    report("criterion 8 (property suites)", ok,
           "all properties hold" if ok else "; ".join(failures[:8]))
