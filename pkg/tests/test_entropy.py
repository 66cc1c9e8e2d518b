"""Postselection map, pinching, trace-norm SDP, refined Pinsker bound."""

import numpy as np
import pytest

from hdqkd.channel import observed_statistics
from hdqkd.config import ProtocolConfig
from hdqkd.decoy import DecoyBounds, estimate_bounds
from hdqkd.entropy import (PostselectedState, binary_entropy, pinch,
                           postselect, refined_pinsker, trace_norm_sdp)
from hdqkd.povm import FockOperator, povm_set
from hdqkd.states import sector_dim, virtual_source
from hdqkd.validate import _random_feasible_state

CFG = ProtocolConfig(intensities=(0.5, 0.1, 0.02, 0.001), tau=1.8,
                     distance_km=5.0, eta_det=0.72, trusted_detector=True)


def povms_for(n):
    return {x: povm_set(x, n, CFG.tau, CFG.analysis_eta_det, CFG.quad_tol)
            for x in (0, 1)}


def test_binary_entropy():
    assert binary_entropy(0.0) == 0.0
    assert binary_entropy(1.0) == 0.0
    assert binary_entropy(0.5) == 1.0
    assert binary_entropy(0.11) == pytest.approx(0.4999, abs=5e-4)


def test_pinch_properties():
    rng = np.random.default_rng(0)
    raw = rng.normal(size=(12, 12))
    sigma = raw @ raw.T
    pinched = pinch(sigma)
    assert np.trace(pinched) == pytest.approx(np.trace(sigma))
    assert np.allclose(pinch(pinched), pinched)
    # R-diagonal entries untouched
    assert np.allclose(np.diag(pinched), np.diag(sigma))
    wrapped = pinch(PostselectedState(n=1, sigma=sigma))
    assert isinstance(wrapped, PostselectedState)
    assert np.allclose(wrapped.sigma, pinched)


def test_postselect_zero_z_block():
    n = 1
    d_b = sector_dim(n) + 1
    rho = np.zeros((4 * d_b, 4 * d_b))
    # put all the weight in the X-basis block of the X register
    rho[2 * d_b, 2 * d_b] = 1.0
    out = postselect(rho, povms_for(n)[0], n)
    assert np.abs(out.sigma).max() == 0.0


def test_postselect_toy_povm_closed_form():
    n = 1
    d_b = sector_dim(n) + 1
    rng = np.random.default_rng(1)
    rho = _random_feasible_state(rng, n)
    half = FockOperator(blocks=tuple(0.5 * np.eye(m + 1) for m in range(n + 1)),
                        overflow=0.25)
    toy = {"0": half, "1": half, "?": half, "nc": half}
    out = postselect(rho, toy, n)
    # sqrt(I/2) = I/sqrt2, so sigma = rho_Z (x) (all-half matrix on R)
    d_sec = sector_dim(n)
    rho_z = np.zeros((2 * d_sec, 2 * d_sec))
    for a in (0, 1):
        for a2 in (0, 1):
            rho_z[a * d_sec:(a + 1) * d_sec, a2 * d_sec:(a2 + 1) * d_sec] = \
                rho[a * d_b:a * d_b + d_sec, a2 * d_b:a2 * d_b + d_sec]
    expect = np.kron(rho_z, 0.5 * np.ones((2, 2)))
    assert np.abs(out.sigma - expect).max() < 1e-12


def test_postselect_trace_bookkeeping():
    n = 2
    rng = np.random.default_rng(2)
    rho = _random_feasible_state(rng, n)
    povms = povms_for(n)[0]
    out = postselect(rho, povms, n)
    d_b = sector_dim(n) + 1
    expect = 0.0
    for m in range(n + 1):
        lo = m * (m + 1) // 2
        for b in ("0", "1"):
            blk = povms[b].block(m)
            for a in (0, 1):
                rows = slice(a * d_b + lo, a * d_b + lo + m + 1)
                expect += float(np.trace(blk @ rho[rows, rows]))
    assert out.trace == pytest.approx(expect, abs=1e-10)


def test_lambda_traceless_hermitian():
    rng = np.random.default_rng(3)
    for n in (0, 1, 2):
        rho = _random_feasible_state(rng, n)
        sigma = postselect(rho, povms_for(n)[0], n).sigma
        lam = sigma - pinch(sigma)
        assert abs(np.trace(lam)) < 1e-12
        assert np.abs(lam - lam.T).max() < 1e-12


@pytest.mark.parametrize("n", [0, 1, 2])
def test_fixed_state_matches_eigenvalue_norm(n):
    rng = np.random.default_rng(10 + n)
    povms = povms_for(n)
    source = virtual_source(n, 0.9)
    for _ in range(3):
        rho = _random_feasible_state(rng, n)
        value, result = trace_norm_sdp(n, source, None, povms, fixed_rho=rho)
        sigma = postselect(rho, povms[0], n).sigma
        lam = (sigma - pinch(sigma)) / 0.9
        expect = float(np.abs(np.linalg.eigvalsh(lam)).sum())
        assert value == pytest.approx(expect, abs=1e-6)


def test_refined_pinsker_values():
    assert refined_pinsker((1.0, 1.0), 1.0) == pytest.approx(1.0)
    assert refined_pinsker((0.9, 1.0), 0.0) == 0.0
    assert refined_pinsker((0.5, 0.5), 0.5) == pytest.approx(0.5)
    # clamping: v above p is capped
    assert refined_pinsker((0.5, 0.5), 0.7) == pytest.approx(0.5)
    assert refined_pinsker((0.0, 0.0), 0.3) == 0.0
    with pytest.raises(ValueError):
        refined_pinsker((0.5, 0.5), -0.1)


def test_refined_pinsker_monotone_spot():
    for p in (0.2, 0.6, 1.0):
        values = [refined_pinsker((p, p), v) for v in np.linspace(0, p, 9)]
        assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))
    for v in (0.05, 0.15):
        values = [refined_pinsker((p, p), v) for p in np.linspace(v, 1, 9)]
        assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))


@pytest.fixture(scope="module")
def lp_bounds():
    stats = observed_statistics(CFG)
    return estimate_bounds(CFG, stats)


def test_vacuum_sector_saturates(lp_bounds):
    source = virtual_source(0, CFG.p_z)
    v, _ = trace_norm_sdp(0, source, lp_bounds, povms_for(0),
                          tol=CFG.solver_tol)
    ratio = v / lp_bounds.pps[0][1]
    assert 0.99 <= ratio <= 1.0 + 1e-9


def test_monotone_in_data(lp_bounds):
    # widening every interval can only shrink the optimal distinguishability
    loose = DecoyBounds(
        gamma=dict(lp_bounds.gamma),
        gamma_leq={k: (max(0.0, lo - 0.05), min(1.0, hi + 0.05))
                   for k, (lo, hi) in lp_bounds.gamma_leq.items()},
        q_mn={k: (max(0.0, lo - 0.05), 1.0)
              for k, (lo, hi) in lp_bounds.q_mn.items()},
        q_leq=dict(lp_bounds.q_leq),
        pps=dict(lp_bounds.pps),
    )
    source = virtual_source(1, CFG.p_z)
    tight_v, _ = trace_norm_sdp(1, source, lp_bounds, povms_for(1),
                                tol=CFG.solver_tol)
    loose_v, _ = trace_norm_sdp(1, source, loose, povms_for(1),
                                tol=CFG.solver_tol)
    assert loose_v <= tight_v + 1e-6


def test_unconstrained_behaviour_gives_zero():
    # with every interval fully open, a pinching-invariant state is feasible
    free = DecoyBounds()
    for n in (1,):
        for b in range(4):
            for a in (0, 1):
                for x in (0, 1):
                    free.gamma[(n, b, a, x)] = (0.0, 1.0)
                    free.gamma_leq[(n, b, a, x)] = (0.0, 1.0)
        for a in (0, 1):
            for x in (0, 1):
                for m in range(n + 1):
                    free.q_mn[(n, m, a, x)] = (0.0, 1.0)
            free.q_leq[(n, 0, 0)] = 1.0
            free.q_leq[(n, 1, 0)] = 1.0
        free.pps[n] = (0.0, 1.0)
    source = virtual_source(1, CFG.p_z)
    v, _ = trace_norm_sdp(1, source, free, povms_for(1), tol=CFG.solver_tol)
    assert v <= 1e-5


def test_overflow_dimension_irrelevant(lp_bounds):
    source = virtual_source(1, CFG.p_z)
    v1, _ = trace_norm_sdp(1, source, lp_bounds, povms_for(1),
                           tol=CFG.solver_tol, overflow_dim=1)
    v3, _ = trace_norm_sdp(1, source, lp_bounds, povms_for(1),
                           tol=CFG.solver_tol, overflow_dim=3)
    assert v1 == pytest.approx(v3, abs=1e-6)


def test_infeasible_bounds_abort(lp_bounds):
    from hdqkd.errors import EstimationAbortError

    broken = DecoyBounds(
        gamma=dict(lp_bounds.gamma),
        gamma_leq=dict(lp_bounds.gamma_leq),
        q_mn=dict(lp_bounds.q_mn),
        q_leq=dict(lp_bounds.q_leq),
        pps=dict(lp_bounds.pps),
    )
    # demand more conclusive-0 weight than the trace allows
    broken.gamma_leq[(1, 0, 0, 0)] = (0.999, 1.0)
    broken.gamma_leq[(1, 3, 0, 0)] = (0.999, 1.0)
    with pytest.raises(EstimationAbortError):
        trace_norm_sdp(1, virtual_source(1, CFG.p_z), broken, povms_for(1),
                       tol=CFG.solver_tol)
