"""Ground-truth channel quantities for the pure-loss model.

Used for the infinitely-many-decoy-states comparison mode, where the
estimation intervals collapse to the exact values, and as the
independent reference the LP bounds are validated against.
"""

from __future__ import annotations

import numpy as np

from .channel import true_photon_transition
from .config import ProtocolConfig
from .decoy import DecoyBounds, pps_bounds
from .povm import povm_set
from .states import nphoton_bb84_vector


def oracle_transition(cfg: ProtocolConfig, n: int) -> np.ndarray:
    """Exact q_{m|n} under the trust convention (binomial thinning)."""
    return true_photon_transition(n, cfg.analysis_eta)


def oracle_gamma(cfg: ProtocolConfig, n: int, b, a: int, x: int) -> float:
    """Exact n-photon behaviour Gamma_n^{(b|a,x)} for the loss channel.

    Loss thins the photon number binomially while leaving the surviving
    photons in the sent mode, so the behaviour is the transition-weighted
    POVM expectation over the m-photon BB84 states.
    """
    povms = povm_set(x, max(cfg.n_sec), cfg.tau, cfg.analysis_eta_det,
                     cfg.quad_tol)
    op = povms[b if isinstance(b, str) else ("0", "1", "?", "nc")[b]]
    if n > op.n_cap:
        povms = povm_set(x, n, cfg.tau, cfg.analysis_eta_det, cfg.quad_tol)
        op = povms[b if isinstance(b, str) else ("0", "1", "?", "nc")[b]]
    transition = oracle_transition(cfg, n)
    total = 0.0
    for m in range(n + 1):
        vec = nphoton_bb84_vector(a, x, m)
        total += transition[m] * op.expectation(m, vec)
    return total


def oracle_bounds(cfg: ProtocolConfig) -> DecoyBounds:
    """Degenerate intervals carrying the exact channel quantities.

    Feeding these to the SDP stage realises the infinitely-many-decoy
    comparison: every estimated interval is replaced by the truth, and
    q_{m<=n|n} = 1 because loss never adds photons.
    """
    bounds = DecoyBounds()
    for n in cfg.n_sec:
        transition = oracle_transition(cfg, n)
        for b in range(4):
            for a in (0, 1):
                for x in (0, 1):
                    value = oracle_gamma(cfg, n, b, a, x)
                    bounds.gamma[(n, b, a, x)] = (value, value)
                    bounds.gamma_leq[(n, b, a, x)] = (value, value)
        for a in (0, 1):
            for x in (0, 1):
                for m in range(n + 1):
                    q = float(transition[m])
                    bounds.q_mn[(n, m, a, x)] = (q, q)
                bounds.q_leq[(n, a, x)] = 1.0
        bounds.pps[n] = pps_bounds(bounds, n)
    return bounds
