"""Devetak-Winter key-rate assembly, distance sweeps, parameter search."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .channel import observed_statistics
from .config import ProtocolConfig, poisson_weights
from .decoy import estimate_bounds
from .entropy import binary_entropy, refined_pinsker, trace_norm_sdp
from .errors import EstimationAbortError, HdqkdError
from .oracle import oracle_bounds
from .povm import povm_set
from .states import virtual_source

MODES = ("four-intensity", "infinite-decoy")


@dataclass
class PerPhotonTerm:
    """Secrecy contribution of one emitted photon number."""

    n: int
    p_n: float                 # Poisson weight at the signal intensity
    q_leq: float               # lower bound on no-photon-gain probability
    pps: tuple[float, float]   # postselection probability interval
    v_tilde: float             # minimised distinguishability (times p_PS)
    entropy: float             # refined-Pinsker bits per signal-basis round
    contribution: float        # p_n * q_leq * entropy, clamped at 0
    sdp_status: str = "optimal"
    sdp_iterations: int = 0
    sdp_gap: float = 0.0


@dataclass
class KeyRateReport:
    """Key rate with its per-photon-number breakdown and diagnostics."""

    config: ProtocolConfig
    mode: str
    trusted: bool
    terms: list[PerPhotonTerm]
    gain: float
    qber: float
    leakage: float
    rate_raw: float
    rate: float
    lp_solves: int = 0
    lp_max_gap: float = 0.0

    @property
    def distance_km(self) -> float:
        return self.config.distance_km


def _apply_trust(cfg: ProtocolConfig, trust) -> ProtocolConfig:
    if trust is None:
        return cfg
    if trust in ("trusted", True):
        return replace(cfg, trusted_detector=True)
    if trust in ("untrusted", False):
        return replace(cfg, trusted_detector=False)
    raise ValueError(f"unknown trust setting {trust!r}")


def key_rate(cfg: ProtocolConfig, mode: str = "four-intensity",
             trust=None) -> KeyRateReport:
    """Asymptotic secret key rate in bits per pulse.

    Per photon number in the secrecy set, multiplies the Poisson weight,
    the no-photon-gain lower bound and the refined-Pinsker entropy bound,
    then subtracts the error-correction leakage Q * h2(E) at the signal
    intensity.  In infinite-decoy mode all estimation intervals are
    replaced by the loss-channel truths.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    cfg = _apply_trust(cfg, trust)
    stats = observed_statistics(cfg)
    if mode == "four-intensity":
        bounds = estimate_bounds(cfg, stats)
    else:
        bounds = oracle_bounds(cfg)
    povms = {x: povm_set(x, cfg.n_cap, cfg.tau, cfg.analysis_eta_det,
                         cfg.quad_tol) for x in (0, 1)}
    signal_weights = poisson_weights(cfg.intensities[0], max(cfg.n_sec))

    terms = []
    total = 0.0
    for n in cfg.n_sec:
        source = virtual_source(n, cfg.p_z)
        v_tilde, result = trace_norm_sdp(n, source, bounds, povms,
                                         tol=cfg.solver_tol)
        pps = bounds.pps[n]
        entropy = refined_pinsker(pps, v_tilde)
        q_leq = 0.5 * (bounds.q_leq[(n, 0, 0)] + bounds.q_leq[(n, 1, 0)])
        contribution = max(0.0, float(signal_weights[n]) * q_leq * entropy)
        total += contribution
        terms.append(PerPhotonTerm(
            n=n, p_n=float(signal_weights[n]), q_leq=q_leq, pps=pps,
            v_tilde=v_tilde, entropy=entropy, contribution=contribution,
            sdp_status=result.status, sdp_iterations=result.iterations,
            sdp_gap=result.gap))

    gain = stats.gain(0, 0)
    qber = stats.qber(0, 0)
    leakage = gain * cfg.reconciliation_efficiency * binary_entropy(qber)
    p_z_factor = 1.0 if cfg.asymptotic_prefactor else cfg.p_z
    rate_raw = cfg.intensity_probs[0] * p_z_factor * (total - leakage)
    return KeyRateReport(
        config=cfg, mode=mode, trusted=cfg.trusted_detector, terms=terms,
        gain=gain, qber=qber, leakage=leakage, rate_raw=rate_raw,
        rate=max(0.0, rate_raw),
        lp_solves=bounds.n_solves, lp_max_gap=bounds.max_gap)


def sweep(cfg: ProtocolConfig, distances, mode: str = "four-intensity",
          trust=None, reoptimize: bool = False, optimize_budget: int = 6,
          csv_path=None) -> list:
    """Evaluate the key rate over a list of distances.

    Points failing with an estimation abort are recorded as None entries
    and the sweep continues; with ``reoptimize`` the protocol parameters
    are re-tuned at every distance before evaluating.
    """
    if len(distances) == 0:
        raise ValueError("need at least one distance")
    reports = []
    for distance in distances:
        local = cfg.at_distance(float(distance))
        try:
            if reoptimize:
                local = optimize_params(local, points_per_line=optimize_budget)
            reports.append(key_rate(local, mode=mode, trust=trust))
        except EstimationAbortError:
            reports.append(None)
    if csv_path is not None:
        write_sweep_csv(reports, distances, csv_path, cfg, mode)
    return reports


def write_sweep_csv(reports, distances, path, cfg: ProtocolConfig, mode: str):
    """Sweep curve CSV: one row per distance, per-n diagnostics inline."""
    n_list = sorted(cfg.n_sec)
    header = ["L_km", "eta", "mode", "trust", "R_bits_per_pulse",
              "R_bits_per_s_at_1GHz", "abort_flag"]
    for n in n_list:
        header += [f"n{n}_term", f"n{n}_entropy", f"n{n}_vtilde",
                   f"n{n}_pps_hi", f"n{n}_qleq"]
    with open(path, "w", newline="") as handle:
        handle.write(f"# config-hash: {cfg.digest()}\n")
        writer = csv.writer(handle)
        writer.writerow(header)
        for distance, report in zip(distances, reports):
            local = cfg.at_distance(float(distance))
            if report is None:
                row = [distance, repr(local.total_eta), mode,
                       "trusted" if local.trusted_detector else "untrusted",
                       "", "", 1] + [""] * (5 * len(n_list))
            else:
                row = [distance, repr(report.config.total_eta), mode,
                       "trusted" if report.trusted else "untrusted",
                       repr(report.rate), repr(report.rate * 1e9), 0]
                by_n = {t.n: t for t in report.terms}
                for n in n_list:
                    term = by_n[n]
                    row += [repr(term.contribution), repr(term.entropy),
                            repr(term.v_tilde), repr(term.pps[1]),
                            repr(term.q_leq)]
            writer.writerow(row)


def _raw_rate(cfg: ProtocolConfig) -> float:
    # Parameter search climbs the unclamped rate so it keeps a gradient
    # inside the zero-rate region; aborting or numerically hopeless
    # points rank below everything else.  Final evaluations re-raise.
    try:
        return key_rate(cfg).rate_raw
    except HdqkdError:
        return -math.inf


def _golden_section(objective, lo: float, hi: float, points: int) -> tuple[float, float]:
    """Deterministic golden-section maximisation on [lo, hi]."""
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = objective(c), objective(d)
    for _ in range(points):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = objective(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = objective(d)
    return (c, fc) if fc >= fd else (d, fd)


def optimize_params(cfg: ProtocolConfig, distance_km: float | None = None,
                    sweeps: int = 2, points_per_line: int = 6,
                    tau_range: tuple[float, float] = (0.8, 3.5),
                    mu0_range: tuple[float, float] = (0.05, 1.5)) -> ProtocolConfig:
    """Coordinate descent over (mu_0..mu_3, tau) maximising the key rate.

    Each coordinate is line-searched by golden section inside bounds that
    respect the strict intensity ordering; deterministic for fixed ranges
    and budgets, and never returns a configuration worse than the input
    (``distance_km`` overrides the template's distance before tuning).
    """
    if distance_km is not None:
        cfg = cfg.at_distance(distance_km)
    margin = 1e-3
    best_cfg = cfg
    best_rate = _raw_rate(cfg)

    def with_mu(cfg_in, idx, value):
        mus = list(cfg_in.intensities)
        mus[idx] = value
        return replace(cfg_in, intensities=tuple(mus))

    for _ in range(sweeps):
        current = best_cfg
        for idx in range(4):
            mus = current.intensities
            if idx == 0:
                lo, hi = mus[1] + margin, mu0_range[1]
            elif idx < 3:
                lo, hi = mus[idx + 1] + margin, mus[idx - 1] - margin
            else:
                lo, hi = 0.0, mus[2] - margin
            if hi <= lo:
                continue
            value, rate = _golden_section(
                lambda v: _raw_rate(with_mu(current, idx, v)),
                lo, hi, points_per_line)
            if rate > best_rate:
                best_rate = rate
                current = with_mu(current, idx, value)
        value, rate = _golden_section(
            lambda v: _raw_rate(replace(current, tau=v)),
            tau_range[0], tau_range[1], points_per_line)
        if rate > best_rate:
            best_rate = rate
            current = replace(current, tau=value)
        best_cfg = current
    return best_cfg
