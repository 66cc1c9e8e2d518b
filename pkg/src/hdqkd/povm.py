"""Bob's decoding regions and block-diagonal homodyne POVM.

With a phase-randomised local oscillator the two-mode homodyne POVM is
block diagonal in the total photon number m; each outcome operator is
assembled per block from products of one-dimensional cross-Gram
integrals over the decoding regions, which are finite unions of
axis-aligned rectangles in the (q0, q1) plane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .fock import DEFAULT_QUAD_TOL, Interval, cross_gram
from .states import basis_index, sector_dim, two_mode_index

OUTCOMES = ("0", "1", "?", "nc")  # conclusive 0/1, inconclusive, no-click


def outcome_index(b) -> int:
    if b in (0, 1):
        return int(b)
    try:
        return OUTCOMES.index(b)
    except ValueError:
        raise ValueError(f"unknown outcome {b!r}; expected one of {OUTCOMES}") from None


Rectangle = tuple[Interval, Interval]

#: Per-axis cells cut by the threshold: 0 = (-inf, -tau), 1 = [-tau, tau),
#: 2 = [tau, inf).  Each outcome region is a union of cell products; the
#: statistics generator reuses this table for its Gaussian-CDF products.
NEG, MID, POS = 0, 1, 2
CELL_PAIRS: dict[tuple[int, int], tuple[tuple[int, int], ...]] = {
    (0, 0): ((NEG, MID), (POS, MID)),
    (0, 1): ((MID, NEG), (MID, POS)),
    (0, 2): ((NEG, NEG), (NEG, POS), (POS, NEG), (POS, POS)),
    (0, 3): ((MID, MID),),
    (1, 0): ((POS, POS), (NEG, NEG)),
    (1, 1): ((POS, NEG), (NEG, POS)),
    (1, 2): ((NEG, MID), (POS, MID), (MID, NEG), (MID, POS)),
    (1, 3): ((MID, MID),),
}


@dataclass(frozen=True)
class DecodingRegions:
    """Outcome regions of the threshold decoder, per basis.

    Each region is stored as a tuple of product rectangles built from the
    three per-axis cells (-inf, -tau), [-tau, tau), [tau, inf); for each
    basis the four outcomes partition the plane.
    """

    tau: float
    regions: dict[tuple[int, int], tuple[Rectangle, ...]]

    def rectangles(self, b, x) -> tuple[Rectangle, ...]:
        return self.regions[(basis_index(x), outcome_index(b))]


def decoding_regions(tau: float) -> DecodingRegions:
    """Build the outcome regions for threshold tau.

    Z basis: bit 0 iff only |q0| exceeds tau, bit 1 iff only |q1| does,
    '?' if both exceed, no-click if neither.  X basis: conclusive iff both
    exceed, with the bit given by whether the signs agree; '?' if exactly
    one exceeds.
    """
    if tau <= 0:
        raise ValueError("threshold tau must be positive")
    cells = (Interval(-math.inf, -tau), Interval(-tau, tau), Interval(tau, math.inf))
    regions = {key: tuple((cells[c0], cells[c1]) for c0, c1 in pairs)
               for key, pairs in CELL_PAIRS.items()}
    return DecodingRegions(tau=tau, regions=regions)


def decode(q0, q1, tau: float, x) -> np.ndarray:
    """Vectorised decoder; returns outcome indices into OUTCOMES."""
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    hit0 = np.abs(q0) >= tau
    hit1 = np.abs(q1) >= tau
    out = np.empty(np.broadcast(q0, q1).shape, dtype=np.uint8)
    if basis_index(x) == 0:
        out[...] = 3
        out[hit0 & ~hit1] = 0
        out[~hit0 & hit1] = 1
        out[hit0 & hit1] = 2
    else:
        out[...] = 3
        both = hit0 & hit1
        same = np.sign(q0) == np.sign(q1)
        out[both & same] = 0
        out[both & ~same] = 1
        out[hit0 ^ hit1] = 2
    return out


@dataclass(frozen=True)
class FockOperator:
    """Hermitian operator on the truncated two-mode Fock space.

    Stored as one (m+1)x(m+1) block per total photon number m <= n_cap
    plus a scalar acting on the collapsed overflow slot.
    """

    blocks: tuple[np.ndarray, ...]
    overflow: float = 0.0

    @property
    def n_cap(self) -> int:
        return len(self.blocks) - 1

    def block(self, m: int) -> np.ndarray:
        return self.blocks[m]

    def to_dense(self, include_overflow: bool = True) -> np.ndarray:
        """Dense matrix over the sector index, overflow slot last."""
        n = self.n_cap
        dim = sector_dim(n) + (1 if include_overflow else 0)
        out = np.zeros((dim, dim))
        for m, blk in enumerate(self.blocks):
            lo = two_mode_index(m, 0)
            out[lo:lo + m + 1, lo:lo + m + 1] = blk
        if include_overflow:
            out[-1, -1] = self.overflow
        return out

    def expectation(self, m: int, vec: np.ndarray) -> float:
        """<vec| block_m |vec> for a length-(m+1) block vector."""
        return float(vec @ self.blocks[m] @ vec)


def photon_projector(m: int, n_cap: int) -> FockOperator:
    """Projector onto the m-photon sector of the truncated space."""
    if not 0 <= m <= n_cap:
        raise ValueError(f"need 0 <= m <= n_cap, got m={m}, n_cap={n_cap}")
    blocks = tuple(np.eye(k + 1) if k == m else np.zeros((k + 1, k + 1))
                   for k in range(n_cap + 1))
    return FockOperator(blocks=blocks, overflow=0.0)


def overflow_projector(n_cap: int) -> FockOperator:
    blocks = tuple(np.zeros((k + 1, k + 1)) for k in range(n_cap + 1))
    return FockOperator(blocks=blocks, overflow=1.0)


def block_povm(b, x, n_cap: int, regions: DecodingRegions,
               eta_det: float = 1.0, tol: float = DEFAULT_QUAD_TOL) -> FockOperator:
    """POVM element M_{b|x} on the truncated space.

    Block m entry (k0, l0) sums, over the outcome's rectangles, the
    product of the early-mode cross-Gram over the q0 interval and the
    late-mode cross-Gram over the q1 interval.  On the overflow slot all
    four outcomes act as the fixed placeholder 1/4 (the postselection
    never probes it).
    """
    rects = regions.rectangles(b, x)
    blocks = []
    for m in range(n_cap + 1):
        blk = np.zeros((m + 1, m + 1))
        for k0 in range(m + 1):
            for l0 in range(k0, m + 1):
                acc = 0.0
                for iv0, iv1 in rects:
                    acc += (cross_gram(k0, l0, iv0, eta_det, tol)
                            * cross_gram(m - k0, m - l0, iv1, eta_det, tol))
                blk[k0, l0] = acc
                blk[l0, k0] = acc
        blocks.append(blk)
    return FockOperator(blocks=tuple(blocks), overflow=0.25)


@lru_cache(maxsize=256)
def povm_set(x, n_cap: int, tau: float, eta_det: float = 1.0,
             tol: float = DEFAULT_QUAD_TOL) -> dict:
    """All four outcome operators for one basis, keyed by outcome label."""
    regions = decoding_regions(tau)
    ops = {}
    for b in OUTCOMES:
        op = block_povm(b, x, n_cap, regions, eta_det, tol)
        for blk in op.blocks:
            blk.flags.writeable = False
        ops[b] = op
    return ops
