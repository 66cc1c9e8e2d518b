"""Self-check suites pairing each pipeline stage with an independent oracle."""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from .channel import behaviour, monte_carlo, observed_statistics
from .config import ProtocolConfig
from .decoy import estimate_bounds
from .entropy import pinch, postselect, trace_norm_sdp
from .oracle import oracle_gamma, oracle_transition
from .povm import povm_set
from .states import sector_dim, virtual_source


def _balanced(cfg: ProtocolConfig) -> ProtocolConfig:
    # Equalise the sampling probabilities so every Monte-Carlo cell fills.
    return replace(cfg, intensity_probs=(0.25, 0.25, 0.25, 0.25), p_z=0.5)


def check_monte_carlo(cfg: ProtocolConfig, seed: int = 0,
                      rounds: int = 1_000_000) -> tuple[bool, str]:
    """Empirical G/Q/E against the analytic tables, within 4 sigma."""
    cfg = _balanced(cfg)
    analytic = observed_statistics(cfg)
    empirical = monte_carlo(cfg, seed=seed, rounds=rounds)
    cells = empirical.cell_counts
    worst = 0.0
    for i in range(4):
        for a in (0, 1):
            for x in (0, 1):
                n_cell = max(int(cells[i, a, x]), 1)
                for b in range(4):
                    p = analytic.g[i, a, x, b]
                    se = math.sqrt(max(p * (1.0 - p), 1e-12) / n_cell)
                    dev = abs(empirical.g[i, a, x, b] - p) / se
                    worst = max(worst, dev)
    ok = worst <= 4.0
    return ok, f"max |G_mc - G| = {worst:.2f} standard errors (limit 4)"


def check_phase_orders(cfg: ProtocolConfig, tol: float = 1e-8) -> tuple[bool, str]:
    """The two equivalent phase-integration orders must agree."""
    diff = float(np.max(np.abs(behaviour(cfg, "lo") - behaviour(cfg, "source"))))
    return diff < tol, f"max |G_lo - G_source| = {diff:.2e} (limit {tol:.0e})"


def check_lp_bracketing(cfg: ProtocolConfig) -> tuple[bool, str]:
    """Loss-channel truths must fall inside every LP interval."""
    stats = observed_statistics(cfg)
    bounds = estimate_bounds(cfg, stats)
    slack = 1e-7 + bounds.max_gap
    worst = -math.inf
    for (n, b, a, x), (lo, hi) in bounds.gamma.items():
        truth = oracle_gamma(cfg, n, b, a, x)
        worst = max(worst, lo - truth, truth - hi)
    for (n, m, a, x), (lo, _) in bounds.q_mn.items():
        truth = float(oracle_transition(cfg, n)[m])
        worst = max(worst, lo - truth)
    for (n, a, x), lo in bounds.q_leq.items():
        worst = max(worst, lo - 1.0)
    ok = worst <= slack
    return ok, f"max bracketing violation = {worst:.2e} (slack {slack:.2e})"


def _random_feasible_state(rng: np.random.Generator, n: int) -> np.ndarray:
    """Block-diagonal product state with the source marginal on X (x) A."""
    d_b = sector_dim(n) + 1
    sigma = np.zeros((d_b, d_b))
    for m in range(n + 1):
        raw = rng.standard_normal((m + 1, m + 1))
        lo = m * (m + 1) // 2
        sigma[lo:lo + m + 1, lo:lo + m + 1] = raw @ raw.T
    sigma[-1, -1] = rng.random() + 0.05
    sigma /= np.trace(sigma)
    rho_xa = virtual_source(n, p_z=0.9).rho_xa
    return np.kron(rho_xa, sigma)


def check_sdp_oracle(cfg: ProtocolConfig, seed: int = 0, states_per_n: int = 5,
                     tol: float = 1e-6) -> tuple[bool, str]:
    """SDP with the minimisation disabled vs the eigenvalue trace norm."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for n in cfg.n_sec:
        povms = {x: povm_set(x, n, cfg.tau, cfg.analysis_eta_det, cfg.quad_tol)
                 for x in (0, 1)}
        source = virtual_source(n, p_z=0.9)
        for _ in range(states_per_n):
            rho = _random_feasible_state(rng, n)
            value, _ = trace_norm_sdp(n, source, None, povms,
                                      tol=cfg.solver_tol, fixed_rho=rho)
            sigma = postselect(rho, povms[0], n).sigma
            lam = (sigma - pinch(sigma)) / source.p_z
            reference = float(np.sum(np.abs(np.linalg.eigvalsh(lam))))
            worst = max(worst, abs(value - reference))
    ok = worst <= tol
    return ok, f"max |SDP - eigenvalue trace norm| = {worst:.2e} (limit {tol:.0e})"


def run_validation(cfg: ProtocolConfig, seed: int = 0,
                   quick: bool = False) -> list[tuple[str, bool, str]]:
    """Run every oracle suite; returns (name, passed, detail) triples."""
    rounds = 200_000 if quick else 1_000_000
    states = 3 if quick else 10
    results = [
        ("monte-carlo-vs-analytic",
         *check_monte_carlo(cfg, seed=seed, rounds=rounds)),
        ("phase-integration-orders", *check_phase_orders(cfg)),
        ("lp-bracketing", *check_lp_bracketing(cfg)),
        ("sdp-vs-eigenvalue",
         *check_sdp_oracle(cfg, seed=seed, states_per_n=states)),
    ]
    return results
