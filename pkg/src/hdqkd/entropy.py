"""Postselection machinery and the trace-norm SDP.

Builds the Naimark-dilated postselected state sigma on A (x) B (x) R,
its pinched version (outcome-register coherences removed), and minimises
the trace-norm distance between the two over every channel state
compatible with the estimated bounds.  The optimal value, combined with
the postselection probability through the refined Pinsker bound, lower
bounds Eve's uncertainty per conclusive round.

All trace norms here are sub-normalised but conditioned on the Z-basis
choice, i.e. the basis probability p_Z is divided out, so the SDP value
equals p_PS times the normalised distinguishability V_n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .conic import ConicProblem, SolveResult, solve
from .decoy import DecoyBounds
from .errors import EstimationAbortError, NumericalToleranceError
from .povm import OUTCOMES, FockOperator
from .states import SourceState, sector_dim, two_mode_index

PSD_CLIP = 1e-10


def binary_entropy(p: float) -> float:
    """h2(p) in bits, with the continuous extension at the endpoints."""
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def _sqrt_psd(mat: np.ndarray, clip: float = PSD_CLIP) -> np.ndarray:
    vals, vecs = np.linalg.eigh(mat)
    if vals.min() < -100.0 * clip:
        raise NumericalToleranceError(
            f"matrix square root of an indefinite block (min eig {vals.min():.2e})",
            achieved=float(vals.min()))
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


@dataclass
class PostselectedState:
    """Sub-normalised dilated state on A (x) B_{m<=n} (x) R."""

    n: int
    sigma: np.ndarray

    @property
    def trace(self) -> float:
        return float(np.trace(self.sigma))


def _sigma_index(n: int):
    """Index helpers for the A (x) B-sector (x) R ordering."""
    d_sec = sector_dim(n)
    s = 2 * d_sec * 2

    def idx(alpha: int, i: int, r: int) -> int:
        return (alpha * d_sec + i) * 2 + r

    return d_sec, s, idx


def _rho_block_index(m: int):
    """Row index of (x, a, k0) inside the 4(m+1)-dim photon-number block."""

    def idx(x: int, a: int, k: int) -> int:
        return (2 * x + a) * (m + 1) + k

    return idx


def postselect(rho: np.ndarray, povms_z: dict, n: int) -> PostselectedState:
    """Apply the keep-conclusive-Z postselection map to a channel state.

    ``rho`` lives on X (x) A (x) B with Bob truncated to the m <= n
    sectors plus overflow slots (any overflow dimension); the output
    collects, per sector, sqrt(M_b) rho_Z sqrt(M_b') tagged by the
    outcome register R, with the overflow annihilated.
    """
    d_sec = sector_dim(n)
    d_b = rho.shape[0] // 4
    if rho.shape != (4 * d_b, 4 * d_b) or d_b < d_sec + 1:
        raise ValueError("state has the wrong shape for the truncated space")
    _, s, sidx = _sigma_index(n)
    sigma = np.zeros((s, s))
    roots = [[_sqrt_psd(povms_z[str(b)].block(m)) for m in range(n + 1)]
             for b in (0, 1)]
    for m in range(n + 1):
        off = two_mode_index(m, 0)
        # Z-projected block of rho in the m-photon sector, on A (x) B_m.
        blk = np.zeros((2 * (m + 1), 2 * (m + 1)))
        for a in (0, 1):
            for a2 in (0, 1):
                rows = slice((0 * 2 + a) * d_b + off, (0 * 2 + a) * d_b + off + m + 1)
                cols = slice((0 * 2 + a2) * d_b + off, (0 * 2 + a2) * d_b + off + m + 1)
                blk[a * (m + 1):(a + 1) * (m + 1),
                    a2 * (m + 1):(a2 + 1) * (m + 1)] = rho[rows, cols]
        for b in (0, 1):
            for b2 in (0, 1):
                left = np.kron(np.eye(2), roots[b][m])
                right = np.kron(np.eye(2), roots[b2][m])
                term = left @ blk @ right
                for a in (0, 1):
                    for a2 in (0, 1):
                        for k in range(m + 1):
                            for l in range(m + 1):
                                sigma[sidx(a, off + k, b),
                                      sidx(a2, off + l, b2)] += term[
                                    a * (m + 1) + k, a2 * (m + 1) + l]
    return PostselectedState(n=n, sigma=sigma)


def pinch(sigma):
    """Remove coherences across the outcome register R.

    Accepts either the raw matrix or a PostselectedState and returns the
    same type; idempotent and trace preserving by construction.
    """
    if isinstance(sigma, PostselectedState):
        return PostselectedState(n=sigma.n, sigma=pinch(sigma.sigma))
    size = sigma.shape[0]
    r = np.arange(size) % 2
    mask = (r[:, None] == r[None, :])
    return np.where(mask, sigma, 0.0)


def refined_pinsker(pps: tuple[float, float], v_tilde: float) -> float:
    """Entropy lower bound (bits) from the distinguishability.

    Evaluates p * (1 - h2((1 - v/p)/2)) at the upper postselection
    probability and the minimised sub-normalised distinguishability; the
    perspective form is nondecreasing in v and nonincreasing in p, so the
    pair (p upper, v minimum) yields a simultaneous lower bound.
    """
    p = float(pps[1])
    if v_tilde < -1e-9:
        raise ValueError("distinguishability must be non-negative")
    if p <= 0.0:
        return 0.0
    v = min(max(float(v_tilde), 0.0), p)
    return p * (1.0 - binary_entropy(0.5 * (1.0 - v / p)))


def _behaviour_operator(povms: dict, b: int, n: int) -> FockOperator:
    op = povms[OUTCOMES[b]]
    if op.n_cap < n:
        raise ValueError("POVM truncated below the requested sector")
    return op


def trace_norm_sdp(n: int, source: SourceState, bounds: DecoyBounds,
                   povms: dict, tol: float = 1e-8, overflow_dim: int = 1,
                   fixed_rho: np.ndarray | None = None,
                   ) -> tuple[float, SolveResult]:
    """Minimised distinguishability of the postselected state.

    Solves the nuclear-norm SDP for || sigma - T[sigma] ||_1 / p_Z over
    channel states rho on X (x) A (x) B that are block diagonal in Bob's
    photon number, have the source marginal on X (x) A, and reproduce the
    estimated behaviour and photon-number intervals.  ``povms`` maps the
    basis index (0 = Z, 1 = X) to its outcome-operator dict.

    With ``fixed_rho`` the minimisation over the state is disabled and
    only the trace-norm epigraph is solved, which must agree with the
    eigenvalue trace norm of the fixed state's distinguishability.
    """
    p_z = source.p_z
    probs = (p_z, 1.0 - p_z)
    d_sec = sector_dim(n)
    sec_of = [m for m in range(n + 1) for _ in range(m + 1)]
    loc_of = [k for m in range(n + 1) for k in range(m + 1)]

    # The pinching only cancels the R-diagonal of sigma, so Lambda is the
    # off-diagonal pair (X, X^T) in the outcome register and its trace
    # norm is twice the nuclear norm of X = sqrt(M_0) rho_Z sqrt(M_1)
    # (summed over sectors, divided by p_Z).  The epigraph below is built
    # on X directly, which halves the semidefinite block size; the
    # objective Tr[Y1 + Y2] = 2 * ||X||_* then equals ||Lambda||_1.
    half = 2 * d_sec
    problem = ConicProblem(name=f"trace-norm n={n}" + (" fixed" if fixed_rho is not None else ""))
    problem.add_psd("T", 2 * half)

    if fixed_rho is not None:
        sigma = postselect(fixed_rho, povms[0], n).sigma
        lam = (sigma - pinch(sigma)) / p_z
        corner = lam[0::2, 1::2]  # A (x) B entries at (r=0, r'=1)
        for r in range(half):
            for c in range(half):
                problem.add_row([("T", r, half + c, 1.0)], "==",
                                float(corner[r, c]))
    else:
        roots = [[_sqrt_psd(povms[0][str(b)].block(m)) for m in range(n + 1)]
                 for b in (0, 1)]
        for m in range(n + 1):
            problem.add_psd(f"rho{m}", 4 * (m + 1))
        problem.add_psd("rho_ov", 4 * overflow_dim)

        # Normalisation and the source marginal on X (x) A.
        trace_terms = []
        for m in range(n + 1):
            bidx = _rho_block_index(m)
            trace_terms += [(f"rho{m}", bidx(x, a, k), bidx(x, a, k), 1.0)
                            for x in (0, 1) for a in (0, 1)
                            for k in range(m + 1)]
        trace_terms += [("rho_ov", 4 * j + xa, 4 * j + xa, 1.0)
                        for j in range(overflow_dim) for xa in range(4)]
        problem.add_row(trace_terms, "==", 1.0)

        for p in range(4):
            for q in range(p, 4):
                terms = []
                for m in range(n + 1):
                    terms += [(f"rho{m}", p * (m + 1) + k, q * (m + 1) + k, 1.0)
                              for k in range(m + 1)]
                terms += [("rho_ov", 4 * j + p, 4 * j + q, 1.0)
                          for j in range(overflow_dim)]
                problem.add_row(terms, "==", float(source.rho_xa[p, q]))

        # Behaviour intervals: p_x/2 * Gamma_{m<=n} brackets per (b, a, x).
        for x in (0, 1):
            for a in (0, 1):
                for b in range(4):
                    op = _behaviour_operator(povms[x], b, n)
                    terms = []
                    for m in range(n + 1):
                        bidx = _rho_block_index(m)
                        mat = op.block(m)
                        terms += [(f"rho{m}", bidx(x, a, k), bidx(x, a, l),
                                   float(mat[k, l]))
                                  for k in range(m + 1) for l in range(m + 1)
                                  if mat[k, l] != 0.0]
                    lo, hi = bounds.gamma_leq[(n, b, a, x)]
                    scale = 0.5 * probs[x]
                    problem.add_row(terms, ">=", scale * lo)
                    problem.add_row(terms, "<=", scale * hi)

        # Photon-number sector intervals per (a, x) and m <= n.
        for x in (0, 1):
            for a in (0, 1):
                for m in range(n + 1):
                    bidx = _rho_block_index(m)
                    terms = [(f"rho{m}", bidx(x, a, k), bidx(x, a, k), 1.0)
                             for k in range(m + 1)]
                    lo, hi = bounds.q_mn[(n, m, a, x)]
                    scale = 0.5 * probs[x]
                    problem.add_row(terms, ">=", scale * lo)
                    problem.add_row(terms, "<=", scale * hi)

        # Tie the epigraph corner to X(rho), entry by entry: the (alpha, i)
        # row and (alpha', j) column only couple inside one photon sector.
        for r in range(half):
            alpha, i = r // d_sec, r % d_sec
            m_i, k_i = sec_of[i], loc_of[i]
            for c in range(half):
                alpha2, j = c // d_sec, c % d_sec
                m_j, k_j = sec_of[j], loc_of[j]
                tie = [("T", r, half + c, 1.0)]
                if m_i == m_j:
                    m = m_i
                    bidx = _rho_block_index(m)
                    left = roots[0][m]
                    right = roots[1][m]
                    for k in range(m + 1):
                        for l in range(m + 1):
                            coeff = -left[k_i, k] * right[l, k_j] / p_z
                            if coeff != 0.0:
                                tie.append((f"rho{m}", bidx(0, alpha, k),
                                            bidx(0, alpha2, l), coeff))
                problem.add_row(tie, "==", 0.0)

    problem.set_objective([("T", d, d, 1.0) for d in range(2 * half)], "min")
    result = solve(problem, tol)
    if result.status == "infeasible":
        raise EstimationAbortError(
            f"trace-norm SDP infeasible for n={n}; bounds admit no state")
    if result.value is None:
        raise NumericalToleranceError(f"trace-norm SDP failed for n={n}")
    return max(0.0, result.value - result.gap), result
