"""Protocol configuration: every knob of one experiment/simulation run."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, fields, replace

import numpy as np

from .errors import ConfigError
from .fock import BinGrid


@dataclass(frozen=True)
class ProtocolConfig:
    """All parameters of a protocol run on the pure-loss channel.

    Intensities must be strictly decreasing with the signal intensity
    first; the last one may be zero (vacuum decoy).  In the trusted
    scenario the detector efficiency lives inside Bob's POVM while the
    channel keeps only the fibre loss; untrusted folds eta_det into the
    channel and analyses with an ideal detector.
    """

    intensities: tuple[float, float, float, float] = (0.50, 0.04, 0.012, 0.0001)
    intensity_probs: tuple[float, float, float, float] = (0.97, 0.01, 0.01, 0.01)
    p_z: float = 0.95
    tau: float = 1.62
    delta: float = 0.5
    nu_min: int = -12
    nu_max: int = 12
    eta_det: float = 1.0
    xi_db_per_km: float = 0.2
    distance_km: float = 5.0
    n_max: int = 10
    m_max: int = 12
    n_sec: tuple[int, ...] = (0, 1, 2)
    trusted_detector: bool = True
    # Reporting and numerics.
    asymptotic_prefactor: bool = True  # take p_Z -> 1 in the rate prefactor
    reconciliation_efficiency: float = 1.0
    quad_tol: float = 1e-10
    phase_tol: float = 1e-10
    solver_tol: float = 1e-8
    #: Slack added to every data-driven LP row.  The observed tables carry
    #: quadrature/phase-average error, so without it the honest-channel
    #: point sits exactly on the feasible boundary and LP presolve may
    #: reject it; widening the rows only widens the (valid) bounds.  Keep
    #: an order of magnitude above quad_tol/phase_tol: LP duals reach ~1e3,
    #: so every extra decade of margin costs ~1e-6 of bound tightness.
    lp_feas_margin: float = 1e-9

    def __post_init__(self):
        mus = self.intensities
        if len(mus) != 4 or len(self.intensity_probs) != 4:
            raise ConfigError("exactly four intensities with probabilities required")
        if not (mus[0] > mus[1] > mus[2] > mus[3] >= 0):
            raise ConfigError("intensities must be strictly decreasing and >= 0")
        if any(p <= 0 for p in self.intensity_probs):
            raise ConfigError("intensity probabilities must be positive")
        if abs(sum(self.intensity_probs) - 1.0) > 1e-9:
            raise ConfigError("intensity probabilities must sum to 1")
        if not 0.0 < self.p_z < 1.0:
            raise ConfigError("p_z must lie strictly between 0 and 1")
        if self.tau <= 0:
            raise ConfigError("threshold tau must be positive")
        if not 0.0 < self.eta_det <= 1.0:
            raise ConfigError("eta_det must be in (0, 1]")
        if self.distance_km < 0:
            raise ConfigError("distance must be non-negative")
        if self.n_max < max(self.n_sec, default=0):
            raise ConfigError("n_max must cover the secrecy set")
        if self.m_max < self.n_max:
            raise ConfigError("m_max must be at least n_max")
        if not self.n_sec or any(n not in (0, 1, 2) for n in self.n_sec):
            raise ConfigError("secrecy set must be a non-empty subset of {0, 1, 2}")
        for name in ("reconciliation_efficiency",):
            if getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must be >= 1")
        for name in ("quad_tol", "phase_tol", "solver_tol", "delta",
                     "lp_feas_margin"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.nu_min >= self.nu_max:
            raise ConfigError("need nu_min < nu_max")

    @property
    def grid(self) -> BinGrid:
        return BinGrid(self.delta, self.nu_min, self.nu_max)

    @property
    def n_cap(self) -> int:
        """Largest photon-number sector the SDP stage needs."""
        return max(self.n_sec)

    @property
    def channel_eta(self) -> float:
        """Fibre transmission, detector excluded."""
        return 10.0 ** (-self.xi_db_per_km * self.distance_km / 10.0)

    @property
    def total_eta(self) -> float:
        """End-to-end transmission seen by the raw data."""
        return self.eta_det * self.channel_eta

    @property
    def analysis_eta(self) -> float:
        """Channel transmission granted to Eve under the trust convention."""
        return self.channel_eta if self.trusted_detector else self.total_eta

    @property
    def analysis_eta_det(self) -> float:
        """Detector efficiency used inside the POVM / bin-response model."""
        return self.eta_det if self.trusted_detector else 1.0

    def at_distance(self, distance_km: float) -> "ProtocolConfig":
        return replace(self, distance_km=distance_km)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def digest(self) -> str:
        """Short stable hash of the full configuration."""
        canon = json.dumps(self.to_dict(), sort_keys=True, default=list)
        return hashlib.sha256(canon.encode()).hexdigest()[:12]


def transmittance(cfg: ProtocolConfig) -> float:
    """Effective beam-splitter transmission used in the security analysis."""
    eta = cfg.analysis_eta
    if not 0.0 < eta <= 1.0:
        raise ConfigError(f"transmittance {eta} outside (0, 1]")
    return eta


def poisson_weights(mu: float, n_max: int) -> np.ndarray:
    """Poisson photon-number distribution p_{n|mu} for n = 0..n_max."""
    if mu < 0:
        raise ConfigError("intensity must be non-negative")
    if mu == 0.0:
        out = np.zeros(n_max + 1)
        out[0] = 1.0
        return out
    n = np.arange(n_max + 1)
    log_p = -mu + n * math.log(mu) - np.array([math.lgamma(k + 1) for k in n])
    return np.exp(log_p)
