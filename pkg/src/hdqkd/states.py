"""Signal states on the two-temporal-mode Fock space.

Builds the n-photon BB84 states (Z: all photons in the early or late
mode, X: symmetric/antisymmetric superposition modes) and the reduced
state rho_XA of the virtual entanglement-based source.

Register ordering is fixed as X (basis choice) over A (bit) over B
(Bob's optical system) throughout the package; the X register indexes
Z = 0, X = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

BASES = ("Z", "X")
Z, X = 0, 1

#: (a, x) -> mode label used for the binned statistics.
BETAS = ("0", "1", "+", "-")


def basis_index(x) -> int:
    if x in (0, 1):
        return int(x)
    try:
        return BASES.index(x)
    except ValueError:
        raise ValueError(f"unknown basis {x!r}; expected 'Z' or 'X'") from None


def sector_dim(n: int) -> int:
    """Dimension of the total-photon-number <= n sector, sum_m (m+1)."""
    return (n + 1) * (n + 2) // 2


def two_mode_index(m: int, k0: int) -> int:
    """Linear index of |k0, m-k0> inside the m <= n sector."""
    if not 0 <= k0 <= m:
        raise ValueError(f"need 0 <= k0 <= m, got k0={k0}, m={m}")
    return m * (m + 1) // 2 + k0


def nphoton_bb84_vector(a: int, x, n: int) -> np.ndarray:
    """Amplitudes of the n-photon BB84 state over k0 = 0..n.

    The state lives in the m = n photon-number block; component k0 is the
    amplitude of |k0 photons early, n-k0 photons late>.  Z-basis states
    are number states of a single temporal mode; X-basis states expand
    binomially over the two modes with alternating signs for a = 1.
    """
    if n < 0:
        raise ValueError("photon number must be non-negative")
    if a not in (0, 1):
        raise ValueError("bit value must be 0 or 1")
    xi = basis_index(x)
    vec = np.zeros(n + 1)
    if xi == Z:
        # a = 0 -> all photons early (k0 = n), a = 1 -> all late (k0 = 0)
        vec[n if a == 0 else 0] = 1.0
        return vec
    sign = 1.0 if a == 0 else -1.0
    for k0 in range(n + 1):
        vec[k0] = math.sqrt(math.comb(n, k0) / 2.0 ** n) * sign ** (n - k0)
    return vec


def bb84_overlap(a: int, x, a2: int, x2, n: int) -> float:
    """Inner product <a2 in basis x2 | a in basis x> for n photons."""
    return float(np.dot(nphoton_bb84_vector(a2, x2, n),
                        nphoton_bb84_vector(a, x, n)))


def xa_index(x, a: int) -> int:
    """Row index of (basis, bit) in the 4-dimensional X (x) A register."""
    return 2 * basis_index(x) + a


@dataclass(frozen=True)
class SourceState:
    """Alice's reduced state for a fixed emitted photon number."""

    n: int
    p_z: float
    rho_xa: np.ndarray  # 4 x 4, ordering (Z0, Z1, X0, X1)


def virtual_source(n: int, p_z: float) -> SourceState:
    """Reduced state rho_XA of the entangled source emitting n photons.

    Constructs |Phi_n> on X (x) A (x) A' with basis amplitudes
    sqrt(p_x) and uniform bit amplitudes, then traces out the optical
    register A'.  Entry ((x,a), (x',a')) is therefore
    sqrt(p_x p_x')/2 * <a'_{x'}|a_x> with the n-photon overlap.
    """
    if not 0.0 < p_z < 1.0:
        raise ValueError("p_z must lie strictly between 0 and 1")
    probs = (p_z, 1.0 - p_z)
    rho = np.zeros((4, 4))
    for xi in (Z, X):
        for a in (0, 1):
            for xj in (Z, X):
                for a2 in (0, 1):
                    rho[xa_index(xi, a), xa_index(xj, a2)] = (
                        0.5 * math.sqrt(probs[xi] * probs[xj])
                        * bb84_overlap(a, xi, a2, xj, n)
                    )
    return SourceState(n=n, p_z=p_z, rho_xa=rho)
