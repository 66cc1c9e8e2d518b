"""Decoy-state linear programs.

Two LP families over the observed tables: bounds on the n-photon
behaviours Gamma_n from the intensity-resolved G table, and lower bounds
on the photon-number transition probabilities q_{m|n} from the binned
quadrature table W plus the mean-photon-number constraint.  Both are
photon-number-cutoff relaxations whose feasible sets contain the true
channel, so optima are valid one-sided bounds.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .channel import ObservedStatistics
from .config import ProtocolConfig, poisson_weights
from .conic import ConicProblem, SolveResult, solve
from .errors import EstimationAbortError, NumericalToleranceError
from .fock import bin_prob_table
from .povm import OUTCOMES
from .states import BETAS

Key = tuple  # index tuples documented per field below


@dataclass
class DecoyBounds:
    """Interval bounds produced by the estimation stage.

    gamma / gamma_leq are keyed (n, b, a, x); q_mn is keyed (n, m, a, x)
    with the trivial upper bound 1; q_leq is keyed (n, a, x); pps is
    keyed by n.  All values are already widened by the solver gap.
    """

    gamma: dict[Key, tuple[float, float]] = field(default_factory=dict)
    gamma_leq: dict[Key, tuple[float, float]] = field(default_factory=dict)
    q_mn: dict[Key, tuple[float, float]] = field(default_factory=dict)
    q_leq: dict[Key, float] = field(default_factory=dict)
    pps: dict[int, tuple[float, float]] = field(default_factory=dict)
    n_solves: int = 0
    max_gap: float = 0.0

    def record(self, result: SolveResult):
        self.n_solves += 1
        self.max_gap = max(self.max_gap, result.gap)


def matched_beta(a: int, x: int) -> int:
    """Binned mode whose population tracks the sent mode for (a, x)."""
    return 2 * x + a


def _check(problem, result: SolveResult, tol: float) -> SolveResult:
    what = problem.name
    if result.status == "infeasible":
        # Cross-examine with the interior-point engine before aborting:
        # thin-feasible instances near the honest boundary can trip the
        # simplex presolve, and a false abort is worse than a re-solve.
        from .conic import _solve_clarabel

        retry = _solve_clarabel(problem, tol, 400)
        if retry.status == "infeasible" or retry.value is None:
            raise EstimationAbortError(
                f"estimation LP infeasible ({what}); statistics admit no channel")
        return retry
    if result.status == "unbounded":
        raise NumericalToleranceError(f"estimation LP unbounded ({what})")
    if result.value is None or not np.isfinite(result.gap):
        raise NumericalToleranceError(f"no certified value for {what}")
    return result


def bound_gamma(stats: ObservedStatistics, n_prime: int, b: int, a: int,
                x: int, n_max: int, direction: str, tol: float = 1e-8,
                margin: float = 0.0) -> tuple[float, SolveResult]:
    """One-sided bound on the n'-photon behaviour Gamma_{n'}^{(b|a,x)}.

    Per intensity the Poisson mixture of the retained Gamma_n must fall
    below the observed G and above G minus the truncated Poisson tail;
    the box 0 <= Gamma_n <= 1 absorbs everything beyond the cutoff.
    ``margin`` slackens the data rows by the numerical tolerance of the
    observed tables.
    """
    if direction not in ("min", "max"):
        raise ValueError("direction must be 'min' or 'max'")
    problem = ConicProblem(name=f"gamma[n={n_prime},b={b},a={a},x={x}] {direction}")
    problem.add_free("gam", n_max + 1)
    for i, mu in enumerate(stats.intensities):
        weights = poisson_weights(mu, n_max)
        tail = 1.0 - float(weights.sum())
        terms = [("gam", n, 0, float(weights[n])) for n in range(n_max + 1)]
        g_obs = float(stats.g[i, a, x, b])
        problem.add_row(terms, "<=", g_obs + margin)
        problem.add_row(terms, ">=", g_obs - tail - margin)
    for n in range(n_max + 1):
        problem.add_row([("gam", n, 0, 1.0)], ">=", 0.0)
        problem.add_row([("gam", n, 0, 1.0)], "<=", 1.0)
    problem.set_objective([("gam", n_prime, 0, 1.0)], direction)
    result = _check(problem, solve(problem, tol), tol)
    return result.value, result


def _q_lp(stats: ObservedStatistics, beta: int, a: int, x: int, n_max: int,
          m_max: int, c_table: np.ndarray, margin: float = 0.0) -> ConicProblem:
    problem = ConicProblem(name=f"q-lp[beta={beta},a={a},x={x}]")
    problem.add_free("q", (n_max + 1) * (m_max + 1))

    def var(m: int, n: int) -> int:
        return n * (m_max + 1) + m

    weights = [poisson_weights(mu, n_max) for mu in stats.intensities]
    n_bins = stats.grid.n_bins
    for i in range(len(stats.intensities)):
        p = weights[i]
        # One inequality per bin, tails included (their rows are sums of
        # the out-of-range per-bin inequalities, hence still valid).
        for pos in range(n_bins):
            terms = [("q", var(m, n), 0, float(p[n] * c_table[m, pos]))
                     for n in range(n_max + 1) for m in range(m_max + 1)
                     if p[n] * c_table[m, pos] != 0.0]
            problem.add_row(terms, "<=",
                            float(stats.w[i, a, x, beta, pos]) + margin)
        # Mean photon number, rearranged so the cutoff tail only slackens it.
        terms = [("q", var(m, n), 0, float(p[n] * (m_max + 1 - m)))
                 for n in range(n_max + 1) for m in range(m_max + 1)
                 if p[n] != 0.0]
        rhs = (m_max + 1) * float(p.sum()) - float(stats.omega[i, a, x, beta])
        problem.add_row(terms, ">=", rhs - margin)
    for n in range(n_max + 1):
        for m in range(m_max + 1):
            problem.add_row([("q", var(m, n), 0, 1.0)], ">=", 0.0)
            problem.add_row([("q", var(m, n), 0, 1.0)], "<=", 1.0)
        problem.add_row([("q", var(m, n), 0, 1.0) for m in range(m_max + 1)],
                        "<=", 1.0)
    return problem


def bound_q(stats: ObservedStatistics, m_prime: int, n_prime: int, beta: int,
            a: int, x: int, n_max: int, m_max: int, c_table: np.ndarray,
            tol: float = 1e-8, margin: float = 0.0) -> tuple[float, SolveResult]:
    """Lower bound on q_{m'|n'} via the mode-resolved transition LP.

    The optimum bounds the mode-beta transition probability, which in
    turn lower-bounds the full q_{m'|n'}^{(a,x)}; the matching upper
    bound is the trivial 1.
    """
    if m_prime > m_max or n_prime > n_max:
        raise ValueError("target indices above the LP cutoffs")
    problem = _q_lp(stats, beta, a, x, n_max, m_max, c_table, margin)
    problem.set_objective([("q", n_prime * (m_max + 1) + m_prime, 0, 1.0)], "min")
    problem.name += f" q[{m_prime}|{n_prime}]"
    result = _check(problem, solve(problem, tol), tol)
    return result.value, result


def bound_q_leq(stats: ObservedStatistics, n: int, beta: int, a: int, x: int,
                n_max: int, m_max: int, c_table: np.ndarray,
                tol: float = 1e-8, margin: float = 0.0) -> tuple[float, SolveResult]:
    """Lower bound on the no-photon-gain probability q_{m<=n|n}."""
    problem = _q_lp(stats, beta, a, x, n_max, m_max, c_table, margin)
    problem.set_objective([("q", n * (m_max + 1) + m, 0, 1.0)
                           for m in range(n + 1)], "min")
    problem.name += f" q[m<={n}|{n}]"
    result = _check(problem, solve(problem, tol), tol)
    return result.value, result


def sandwich_gamma(gamma: tuple[float, float],
                   q_leq_lo: float) -> tuple[float, float]:
    """Interval for Gamma_{m<=n} from the Gamma_n interval and q_{m<=n|n}.

    Dropping the m > n contribution can only lower the behaviour, and by
    at most the probability 1 - q_{m<=n|n} of that event.
    """
    lo, hi = gamma
    return max(0.0, lo - (1.0 - q_leq_lo)), hi


def pps_bounds(bounds: DecoyBounds, n: int) -> tuple[float, float]:
    """Postselection-probability interval, conditioned on the Z basis.

    p_PS is the probability of a conclusive outcome with no photon gain,
    averaged over Alice's uniform bit.
    """
    lo = hi = 0.0
    for a in (0, 1):
        for b in (0, 1):
            glo, ghi = bounds.gamma_leq[(n, b, a, 0)]
            lo += 0.5 * glo
            hi += 0.5 * ghi
    return min(lo, 1.0), min(hi, 1.0)


def _widen(lo: float, hi: float, gap: float) -> tuple[float, float]:
    return max(0.0, lo - gap), min(1.0, hi + gap)


def estimate_bounds(cfg: ProtocolConfig, stats: ObservedStatistics) -> DecoyBounds:
    """Run both LP families for every quantity the SDP stage consumes."""
    bounds = DecoyBounds()
    c_table = bin_prob_table(cfg.m_max, cfg.grid, cfg.analysis_eta_det,
                             cfg.quad_tol)
    tol = cfg.solver_tol
    margin = cfg.lp_feas_margin
    for n in cfg.n_sec:
        for b in range(4):
            for a in (0, 1):
                for x in (0, 1):
                    lo, res_lo = bound_gamma(stats, n, b, a, x, cfg.n_max,
                                             "min", tol, margin)
                    bounds.record(res_lo)
                    hi, res_hi = bound_gamma(stats, n, b, a, x, cfg.n_max,
                                             "max", tol, margin)
                    bounds.record(res_hi)
                    gap = max(res_lo.gap, res_hi.gap)
                    bounds.gamma[(n, b, a, x)] = _widen(lo, hi, gap)
        for a in (0, 1):
            for x in (0, 1):
                beta = matched_beta(a, x)
                for m in range(n + 1):
                    lo, res = bound_q(stats, m, n, beta, a, x, cfg.n_max,
                                      cfg.m_max, c_table, tol, margin)
                    bounds.record(res)
                    bounds.q_mn[(n, m, a, x)] = (max(0.0, lo - res.gap), 1.0)
                lo, res = bound_q_leq(stats, n, beta, a, x, cfg.n_max,
                                      cfg.m_max, c_table, tol, margin)
                bounds.record(res)
                bounds.q_leq[(n, a, x)] = max(0.0, min(1.0, lo) - res.gap)
        for b in range(4):
            for a in (0, 1):
                for x in (0, 1):
                    bounds.gamma_leq[(n, b, a, x)] = sandwich_gamma(
                        bounds.gamma[(n, b, a, x)], bounds.q_leq[(n, a, x)])
        bounds.pps[n] = pps_bounds(bounds, n)
    return bounds


def write_bounds_csv(bounds, path, config_digest: str = ""):
    """DecoyBounds CSV with the fixed header quantity,n,m,a,x,b,beta,lo,hi."""
    bases = ("Z", "X")
    with open(path, "w", newline="") as handle:
        if config_digest:
            handle.write(f"# config-hash: {config_digest}\n")
        writer = csv.writer(handle)
        writer.writerow(["quantity", "n", "m", "a", "x", "b", "beta", "lo", "hi"])
        for (n, b, a, x), (lo, hi) in sorted(bounds.gamma.items()):
            writer.writerow(["Gamma_n", n, "", a, bases[x], OUTCOMES[b], "",
                             repr(lo), repr(hi)])
        for (n, b, a, x), (lo, hi) in sorted(bounds.gamma_leq.items()):
            writer.writerow(["Gamma_mleqn", n, "", a, bases[x], OUTCOMES[b], "",
                             repr(lo), repr(hi)])
        for (n, m, a, x), (lo, hi) in sorted(bounds.q_mn.items()):
            writer.writerow(["q_mn", n, m, a, bases[x], "",
                             BETAS[2 * x + a], repr(lo), repr(hi)])
        for (n, a, x), lo in sorted(bounds.q_leq.items()):
            writer.writerow(["q_mleqn", n, "", a, bases[x], "",
                             BETAS[2 * x + a], repr(lo), repr(1.0)])
        for n, (lo, hi) in sorted(bounds.pps.items()):
            writer.writerow(["p_PS", n, "", "", "Z", "", "", repr(lo), repr(hi)])
