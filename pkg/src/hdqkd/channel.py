"""Honest-party statistics on the beam-splitter loss channel.

Generates the asymptotic tables the parties would estimate (behaviour G,
binned quadrature distributions W, mean photon numbers omega, gain Q and
QBER E) analytically, and provides an independent Monte-Carlo sampler of
the same protocol rounds for validation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .config import ProtocolConfig
from .errors import NumericalToleranceError
from .fock import BinGrid
from .povm import CELL_PAIRS, decode
from .states import BETAS

#: Mode vectors over (early, late) amplitudes; rows: beta = 0, 1, +, -.
_MODE_VECTORS = np.array([
    [1.0, 0.0],
    [0.0, 1.0],
    [1.0 / math.sqrt(2.0), 1.0 / math.sqrt(2.0)],
    [1.0 / math.sqrt(2.0), -1.0 / math.sqrt(2.0)],
])


def signal_amplitudes(a: int, x, mu: float) -> tuple[float, float]:
    """Coherent amplitudes (alpha_0, alpha_1) of the signal, pre-channel.

    Z: all energy in the early (a = 0) or late (a = 1) temporal mode;
    X: equal split with relative phase 0 or pi.  The randomised global
    phase is handled by the phase integral and omitted here.
    """
    if mu < 0:
        raise ValueError("intensity must be non-negative")
    xi = 0 if x in (0, "Z") else 1
    root = math.sqrt(mu)
    if xi == 0:
        return (root, 0.0) if a == 0 else (0.0, root)
    half = math.sqrt(mu / 2.0)
    return (half, half) if a == 0 else (half, -half)


def mode_overlap(beta: int, a: int, x) -> float:
    """Commutator constant K relating the sent mode to the binned mode."""
    xi = 0 if x in (0, "Z") else 1
    sent = _MODE_VECTORS[2 * xi + a] if xi == 1 else _MODE_VECTORS[a]
    return float(np.dot(sent, _MODE_VECTORS[beta]))


def periodic_mean(fn, tol: float, n0: int = 32, n_max: int = 4096) -> np.ndarray:
    """Average fn over one period of the local-oscillator phase.

    Uniform (trapezoid) sampling is spectrally accurate for the smooth
    periodic integrands here; node counts double until two consecutive
    levels agree within tol.
    """
    n = n0
    prev = None
    while True:
        nodes = 2.0 * math.pi * (np.arange(n) + 0.5) / n
        current = np.mean(fn(nodes), axis=-1)
        if prev is not None:
            err = float(np.max(np.abs(current - prev)))
            if err < tol:
                return current
        if n >= n_max:
            raise NumericalToleranceError(
                f"phase average did not settle below {tol:.1e} at {n} nodes",
                achieved=err if prev is not None else math.inf)
        prev = current
        n *= 2


@dataclass
class ObservedStatistics:
    """Asymptotic estimation-step tables, indexed (mu_i, a, x, ...).

    Axis order: intensity index, Alice's bit, basis (0 = Z, 1 = X); the
    outcome axis of g follows povm.OUTCOMES, the mode axis of w/omega
    follows states.BETAS, and the bin axis of w is the BinGrid storage
    order (lower tail, retained bins, upper tail).
    """

    intensities: tuple[float, ...]
    grid: BinGrid
    g: np.ndarray          # (n_mu, 2, 2, 4)
    w: np.ndarray          # (n_mu, 2, 2, 4, n_bins)
    omega: np.ndarray      # (n_mu, 2, 2, 4)
    q: np.ndarray          # gain, (n_mu, 2)
    e: np.ndarray          # QBER, (n_mu, 2)
    cell_counts: np.ndarray | None = None  # (n_mu, 2, 2), Monte-Carlo only

    def gain(self, i: int, x: int = 0) -> float:
        return float(self.q[i, x])

    def qber(self, i: int, x: int = 0) -> float:
        return float(self.e[i, x])


def _cell_probs(tau: float, means: np.ndarray) -> np.ndarray:
    """P(q in cell) for the three threshold cells; shape (3,) + means.shape."""
    lo = ndtr(-tau - means)
    hi = ndtr(tau - means)
    return np.stack([lo, hi - lo, 1.0 - hi])


def _gain_qber(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    conclusive = 0.5 * (g[:, 0, :, 0] + g[:, 0, :, 1]
                        + g[:, 1, :, 0] + g[:, 1, :, 1])
    wrong = 0.5 * (g[:, 0, :, 1] + g[:, 1, :, 0])
    qber = np.full_like(conclusive, 0.5)
    np.divide(wrong, conclusive, out=qber, where=conclusive > 0)
    return conclusive, qber


def behaviour(cfg: ProtocolConfig, phase_variable: str = "lo") -> np.ndarray:
    """Behaviour table G[(mu, a, x, b)] for the pure-loss channel.

    The two temporal quadratures are independent Gaussians of unit
    variance whose means rotate with the phase difference between source
    and local oscillator; region probabilities are products of CDF
    differences, averaged over the randomised phase.

    phase_variable selects which of the two equivalent phases is
    integrated ("lo": oscillator phase with the source phase pinned,
    "source": the reverse); the statistics must not depend on it.
    """
    if phase_variable not in ("lo", "source"):
        raise ValueError("phase_variable must be 'lo' or 'source'")
    root_eta = math.sqrt(cfg.total_eta)
    g = np.zeros((len(cfg.intensities), 2, 2, 4))
    for i, mu in enumerate(cfg.intensities):
        for a in (0, 1):
            for x in (0, 1):
                a0, a1 = signal_amplitudes(a, x, mu)

                def region_probs(phis, a0=a0, a1=a1, x=x):
                    angle = -phis if phase_variable == "lo" else phis
                    c = np.cos(angle)
                    cells0 = _cell_probs(cfg.tau, 2.0 * root_eta * a0 * c)
                    cells1 = _cell_probs(cfg.tau, 2.0 * root_eta * a1 * c)
                    out = np.zeros((4, phis.size))
                    for b in range(4):
                        for c0, c1 in CELL_PAIRS[(x, b)]:
                            out[b] += cells0[c0] * cells1[c1]
                    return out

                g[i, a, x] = periodic_mean(region_probs, cfg.phase_tol)
    return g


def bin_distribution(cfg: ProtocolConfig, phase_variable: str = "lo") -> np.ndarray:
    """Binned single-quadrature table W[(mu, a, x, beta, bin)].

    The binned mode beta sees a phase-averaged Gaussian with amplitude
    set by the mode overlap K and the end-to-end transmission; tails
    aggregate everything outside the retained bins.
    """
    grid = cfg.grid
    edges = grid.edges()
    w = np.zeros((len(cfg.intensities), 2, 2, 4, grid.n_bins))
    for i, mu in enumerate(cfg.intensities):
        for a in (0, 1):
            for x in (0, 1):
                for beta in range(4):
                    k = mode_overlap(beta, a, x)
                    amp = 2.0 * math.sqrt(k * k * mu * cfg.total_eta)

                    def bin_probs(phis, amp=amp):
                        angle = -phis if phase_variable == "lo" else phis
                        means = amp * np.cos(angle)
                        cdf = ndtr(edges[:, None] - means[None, :])
                        out = np.empty((grid.n_bins, phis.size))
                        out[0] = cdf[0]
                        out[1:-1] = np.diff(cdf, axis=0)
                        out[-1] = 1.0 - cdf[-1]
                        return out

                    w[i, a, x, beta] = periodic_mean(bin_probs, cfg.phase_tol)
    return w


def energy_stats(cfg: ProtocolConfig) -> np.ndarray:
    """Mean photon number omega[(mu, a, x, beta)] under the trust convention.

    The raw mean-square quadrature reflects the end-to-end loss; in the
    trusted scenario the detector part is divided back out so omega
    refers to the field arriving at Bob's lab.
    """
    eta = cfg.analysis_eta
    omega = np.zeros((len(cfg.intensities), 2, 2, 4))
    for i, mu in enumerate(cfg.intensities):
        for a in (0, 1):
            for x in (0, 1):
                for beta in range(4):
                    k = mode_overlap(beta, a, x)
                    omega[i, a, x, beta] = k * k * mu * eta
    return omega


def observed_statistics(cfg: ProtocolConfig, phase_variable: str = "lo") -> ObservedStatistics:
    """All estimation-step tables for the loss-channel model."""
    g = behaviour(cfg, phase_variable)
    q, e = _gain_qber(g)
    return ObservedStatistics(
        intensities=tuple(cfg.intensities),
        grid=cfg.grid,
        g=g,
        w=bin_distribution(cfg, phase_variable),
        omega=energy_stats(cfg),
        q=q,
        e=e,
    )


def true_photon_transition(n: int, eta: float) -> np.ndarray:
    """Ground-truth pmf of Bob's photon number for the pure-loss channel.

    Each of the n photons survives independently with probability eta,
    so q_{m|n} = Binomial(n, eta).
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError("transmission must be in [0, 1]")
    if n < 0:
        raise ValueError("photon number must be non-negative")
    return np.array([math.comb(n, m) * eta ** m * (1.0 - eta) ** (n - m)
                     for m in range(n + 1)])


def monte_carlo(cfg: ProtocolConfig, seed: int, rounds: int,
                shard_size: int = 1 << 19) -> ObservedStatistics:
    """Sample protocol rounds and tally empirical statistics.

    Uses the counter-based Philox generator with one jumped stream per
    shard, so shards can be evaluated in any order (or in parallel) and
    merged into bit-identical tallies for a fixed seed.
    """
    if rounds < 1:
        raise ValueError("need at least one round")
    grid = cfg.grid
    n_mu = len(cfg.intensities)
    mu_cum = np.cumsum(cfg.intensity_probs)
    root_eta = math.sqrt(cfg.total_eta)
    root_mu = np.sqrt(np.asarray(cfg.intensities))

    g_counts = np.zeros((n_mu, 2, 2, 4), dtype=np.int64)
    w_counts = np.zeros((n_mu, 2, 2, 4, grid.n_bins), dtype=np.int64)
    q2_sums = np.zeros((n_mu, 2, 2, 4))

    base = np.random.Philox(key=seed)
    n_shards = (rounds + shard_size - 1) // shard_size
    for shard in range(n_shards):
        k = min(shard_size, rounds - shard * shard_size)
        rng = np.random.Generator(base.jumped(shard))
        mu_idx = np.searchsorted(mu_cum, rng.random(k), side="right")
        mu_idx = np.minimum(mu_idx, n_mu - 1)
        x = (rng.random(k) >= cfg.p_z).astype(np.int8)  # 0 = Z, 1 = X
        a = rng.integers(0, 2, size=k, dtype=np.int8)
        theta = 2.0 * math.pi * rng.random(k)
        phi = 2.0 * math.pi * rng.random(k)
        noise = rng.standard_normal((2, k))

        root = root_mu[mu_idx]
        alpha0 = np.where(x == 0, np.where(a == 0, root, 0.0),
                          root / math.sqrt(2.0))
        alpha1 = np.where(x == 0, np.where(a == 1, root, 0.0),
                          np.where(a == 0, 1.0, -1.0) * root / math.sqrt(2.0))
        c = np.cos(theta - phi)
        q0 = 2.0 * root_eta * alpha0 * c + noise[0]
        q1 = 2.0 * root_eta * alpha1 * c + noise[1]

        b = np.where(x == 0, decode(q0, q1, cfg.tau, "Z"),
                     decode(q0, q1, cfg.tau, "X")).astype(np.int8)
        flat_g = ((mu_idx * 2 + a) * 2 + x) * 4 + b
        g_counts += np.bincount(flat_g, minlength=g_counts.size).reshape(g_counts.shape)

        q_beta = np.stack([q0, q1, (q0 + q1) / math.sqrt(2.0),
                           (q0 - q1) / math.sqrt(2.0)])
        for beta in range(4):
            pos = np.clip(np.floor(q_beta[beta] / grid.delta).astype(np.int64)
                          - grid.nu_min + 1, 0, grid.n_bins - 1)
            flat_w = (((mu_idx * 2 + a) * 2 + x) * 4 + beta) * grid.n_bins + pos
            w_counts += np.bincount(flat_w, minlength=w_counts.size).reshape(w_counts.shape)
            flat_o = ((mu_idx * 2 + a) * 2 + x) * 4 + beta
            q2_sums += np.bincount(flat_o, weights=q_beta[beta] ** 2,
                                   minlength=q2_sums.size).reshape(q2_sums.shape)

    cell = g_counts.sum(axis=3)
    safe = np.maximum(cell, 1)
    g = g_counts / safe[..., None]
    w = w_counts / safe[..., None, None]
    mean_q2 = q2_sums / safe[..., None]
    omega = (mean_q2 - 1.0) / 2.0
    if cfg.trusted_detector:
        omega = omega / cfg.eta_det
    q, e = _gain_qber(g)
    return ObservedStatistics(
        intensities=tuple(cfg.intensities),
        grid=grid,
        g=g,
        w=w,
        omega=omega,
        q=q,
        e=e,
        cell_counts=cell,
    )


def write_stats_csv(stats: ObservedStatistics, path, config_digest: str = ""):
    """Serialise the tables, one row per index tuple.

    The combined key column carries the outcome for G rows, "beta:bin"
    for W rows (bin is a retained index or lo/hi), and the mode for
    omega rows; it is empty for Q/E rows.
    """
    from .povm import OUTCOMES

    grid = stats.grid
    bin_labels = (["lo"] + [str(nu) for nu in range(grid.nu_min, grid.nu_max + 1)]
                  + ["hi"])
    bases = ("Z", "X")
    with open(path, "w", newline="") as handle:
        if config_digest:
            handle.write(f"# config-hash: {config_digest}\n")
        writer = csv.writer(handle)
        writer.writerow(["stat", "mu", "a", "x", "b_or_nu_or_beta", "value"])
        for i, mu in enumerate(stats.intensities):
            for a in (0, 1):
                for x in (0, 1):
                    for b in range(4):
                        writer.writerow(["G", mu, a, bases[x], OUTCOMES[b],
                                         repr(stats.g[i, a, x, b])])
                    for beta in range(4):
                        for pos, label in enumerate(bin_labels):
                            writer.writerow(
                                ["W", mu, a, bases[x], f"{BETAS[beta]}:{label}",
                                 repr(stats.w[i, a, x, beta, pos])])
                        writer.writerow(["omega", mu, a, bases[x], BETAS[beta],
                                         repr(stats.omega[i, a, x, beta])])
            for x in (0, 1):
                writer.writerow(["Q", mu, "", bases[x], "",
                                 repr(stats.q[i, x])])
                writer.writerow(["E", mu, "", bases[x], "",
                                 repr(stats.e[i, x])])
