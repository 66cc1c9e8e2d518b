"""Uniform LP/SDP interface with certificate-aware status handling.

Problems are stated in terms of named variable blocks (free scalar
vectors or PSD matrices) and linear rows referencing block entries.
Semidefinite programs go to the Clarabel interior-point solver (the
translation to its scaled-triangle form lives here); pure linear
programs are routed to HiGHS.  Both paths report the same SolveResult
with a primal-dual gap, so downstream bound accounting is engine
independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

import clarabel

from .errors import NumericalToleranceError

DEFAULT_TOL = 1e-8

#: term = (block name, i, j, coefficient); for free blocks j must be 0 and
#: i indexes the vector entry, for PSD blocks (i, j) addresses the matrix
#: entry (symmetry is handled by the translation).
Term = tuple[str, int, int, float]


@dataclass(frozen=True)
class VarBlock:
    name: str
    kind: str  # "free" or "psd"
    dim: int   # vector length (free) or matrix side (psd)

    def __post_init__(self):
        if self.kind not in ("free", "psd"):
            raise ValueError(f"unknown block kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError("block dimension must be positive")

    @property
    def n_vars(self) -> int:
        return self.dim if self.kind == "free" else self.dim * (self.dim + 1) // 2


@dataclass
class LinRow:
    terms: list[Term]
    sense: str  # "==", "<=", ">="
    rhs: float


@dataclass
class ConicProblem:
    """Linear objective over free and PSD blocks with linear rows."""

    name: str = ""
    sense: str = "min"
    blocks: list[VarBlock] = field(default_factory=list)
    rows: list[LinRow] = field(default_factory=list)
    objective: list[Term] = field(default_factory=list)

    def add_free(self, name: str, dim: int) -> VarBlock:
        block = VarBlock(name, "free", dim)
        self.blocks.append(block)
        return block

    def add_psd(self, name: str, dim: int) -> VarBlock:
        block = VarBlock(name, "psd", dim)
        self.blocks.append(block)
        return block

    def add_row(self, terms: list[Term], sense: str, rhs: float):
        if sense not in ("==", "<=", ">="):
            raise ValueError(f"unknown row sense {sense!r}")
        self.rows.append(LinRow(list(terms), sense, float(rhs)))

    def set_objective(self, terms: list[Term], sense: str = "min"):
        if sense not in ("min", "max"):
            raise ValueError("objective sense must be 'min' or 'max'")
        self.objective = list(terms)
        self.sense = sense


@dataclass
class SolveResult:
    status: str            # optimal | infeasible | unbounded | numerical-limit
    value: float | None
    gap: float
    iterations: int
    solve_time: float = 0.0

    @property
    def is_optimal(self) -> bool:
        return self.status == "optimal"


_STATUS_MAP = {
    "Solved": "optimal",
    "PrimalInfeasible": "infeasible",
    "AlmostPrimalInfeasible": "infeasible",
    "DualInfeasible": "unbounded",
    "AlmostDualInfeasible": "unbounded",
    "AlmostSolved": "numerical-limit",
    "MaxIterations": "numerical-limit",
    "MaxTime": "numerical-limit",
    "NumericalError": "numerical-limit",
    "InsufficientProgress": "numerical-limit",
}


class _Indexer:
    """Maps (block, i, j) entry references to solver variable columns."""

    def __init__(self, blocks: list[VarBlock]):
        self.blocks = {}
        offset = 0
        for block in blocks:
            if block.name in self.blocks:
                raise ValueError(f"duplicate block name {block.name!r}")
            self.blocks[block.name] = (block, offset)
            offset += block.n_vars
        self.n_vars = offset

    def column(self, name: str, i: int, j: int) -> tuple[int, float]:
        """Solver column and scaling for one entry reference.

        PSD blocks are stored as the scaled upper triangle (column-major,
        off-diagonal entries times sqrt(2)), so referencing X[i, j] picks
        up a 1/sqrt(2) factor off the diagonal.
        """
        block, offset = self.blocks[name]
        if block.kind == "free":
            if j != 0:
                raise ValueError("free-block terms must use j = 0")
            if not 0 <= i < block.dim:
                raise IndexError(f"entry {i} outside free block {name!r}")
            return offset + i, 1.0
        if not (0 <= i < block.dim and 0 <= j < block.dim):
            raise IndexError(f"entry ({i}, {j}) outside psd block {name!r}")
        if i > j:
            i, j = j, i
        col = offset + j * (j + 1) // 2 + i
        return col, 1.0 if i == j else 1.0 / math.sqrt(2.0)


def _accumulate(indexer: _Indexer, terms: list[Term]) -> dict[int, float]:
    out: dict[int, float] = {}
    for name, i, j, coeff in terms:
        col, scale = indexer.column(name, i, j)
        out[col] = out.get(col, 0.0) + coeff * scale
    return out


def solve(problem: ConicProblem, tol: float = DEFAULT_TOL,
          max_iter: int = 400) -> SolveResult:
    """Solve a ConicProblem, returning value plus primal-dual gap.

    Problems with PSD blocks go through the Clarabel interior-point
    solver; pure linear programs are routed to the HiGHS backend, which
    is much faster on the many small estimation LPs.  Callers that use
    the value as a one-sided bound must widen it by the reported gap
    themselves (see decoy/entropy modules).
    """
    if any(block.kind == "psd" for block in problem.blocks):
        return _solve_clarabel(problem, tol, max_iter)
    return _solve_highs(problem, tol)


def _solve_highs(problem: ConicProblem, tol: float) -> SolveResult:
    from scipy.optimize import linprog

    indexer = _Indexer(problem.blocks)
    n = indexer.n_vars
    lower = np.full(n, -np.inf)
    upper = np.full(n, np.inf)
    eq_rows, eq_rhs, ub_rows, ub_rhs = [], [], [], []
    for row in problem.rows:
        coeffs = _accumulate(indexer, row.terms)
        if len(coeffs) == 1 and row.sense != "==":
            # Singleton rows become variable bounds (cheaper for presolve).
            (col, coeff), = coeffs.items()
            if coeff == 0.0:
                continue
            bound = row.rhs / coeff
            tight_upper = (row.sense == "<=") == (coeff > 0.0)
            if tight_upper:
                upper[col] = min(upper[col], bound)
            else:
                lower[col] = max(lower[col], bound)
            continue
        if row.sense == "==":
            eq_rows.append(coeffs)
            eq_rhs.append(row.rhs)
        elif row.sense == "<=":
            ub_rows.append(coeffs)
            ub_rhs.append(row.rhs)
        else:
            ub_rows.append({c: -v for c, v in coeffs.items()})
            ub_rhs.append(-row.rhs)

    def to_matrix(rows):
        data, ri, ci = [], [], []
        for r, coeffs in enumerate(rows):
            for c, v in coeffs.items():
                ri.append(r)
                ci.append(c)
                data.append(v)
        return sp.csr_matrix((data, (ri, ci)), shape=(len(rows), n))

    sign = 1.0 if problem.sense == "min" else -1.0
    c = np.zeros(n)
    for col, coeff in _accumulate(indexer, problem.objective).items():
        c[col] += sign * coeff
    common = dict(
        A_ub=to_matrix(ub_rows) if ub_rows else None,
        b_ub=np.asarray(ub_rhs) if ub_rows else None,
        A_eq=to_matrix(eq_rows) if eq_rows else None,
        b_eq=np.asarray(eq_rhs) if eq_rows else None,
        bounds=np.column_stack([lower, upper]),
        method="highs",
    )
    # The estimation LPs are feasible only within a thin margin around the
    # honest channel; default tolerances let presolve discard them.  On
    # numerical trouble fall back to the stock tolerances (the reported
    # duality gap still covers the looser solve).
    feas = max(1e-10, min(tol / 10.0, 1e-9))
    result = linprog(c, **common,
                     options={"primal_feasibility_tolerance": feas,
                              "dual_feasibility_tolerance": feas})
    if result.status not in (0, 2, 3):
        result = linprog(c, **common)
    if result.status == 2:
        return SolveResult(status="infeasible", value=None, gap=math.inf,
                           iterations=int(result.nit))
    if result.status == 3:
        return SolveResult(status="unbounded", value=None, gap=math.inf,
                           iterations=int(result.nit))
    if result.status != 0:
        raise NumericalToleranceError(
            f"LP backend failed on {problem.name or 'conic problem'}: "
            f"{result.message}")
    # Dual objective via homogeneity in (b, l, u): marginals are the
    # sensitivities of the optimum to each right-hand side, so their
    # weighted sum recovers the dual value; marginals vanish at inactive
    # (in particular infinite) bounds.
    dual = 0.0
    if eq_rows:
        dual += float(np.dot(result.eqlin.marginals, eq_rhs))
    if ub_rows:
        dual += float(np.dot(result.ineqlin.marginals, ub_rhs))
    finite_lo = np.isfinite(lower)
    finite_up = np.isfinite(upper)
    dual += float(np.dot(result.lower.marginals[finite_lo], lower[finite_lo]))
    dual += float(np.dot(result.upper.marginals[finite_up], upper[finite_up]))
    gap = abs(float(result.fun) - dual)
    return SolveResult(status="optimal", value=sign * float(result.fun),
                       gap=gap, iterations=int(result.nit))


def _solve_clarabel(problem: ConicProblem, tol: float,
                    max_iter: int) -> SolveResult:
    indexer = _Indexer(problem.blocks)
    n = indexer.n_vars

    rows_a: list[dict[int, float]] = []
    rhs: list[float] = []
    # Zero cone first (equalities), then the nonnegative cone.
    for row in problem.rows:
        if row.sense == "==":
            rows_a.append(_accumulate(indexer, row.terms))
            rhs.append(row.rhs)
    n_eq = len(rows_a)
    for row in problem.rows:
        if row.sense == "==":
            continue
        coeffs = _accumulate(indexer, row.terms)
        if row.sense == "<=":
            rows_a.append(coeffs)
            rhs.append(row.rhs)
        else:  # >=  ->  negate into <=
            rows_a.append({c: -v for c, v in coeffs.items()})
            rhs.append(-row.rhs)
    n_ineq = len(rows_a) - n_eq

    cones = []
    if n_eq:
        cones.append(clarabel.ZeroConeT(n_eq))
    if n_ineq:
        cones.append(clarabel.NonnegativeConeT(n_ineq))

    # PSD blocks: s = x_block must live in the PSD triangle cone.
    psd_rows: list[tuple[int, float]] = []
    for block in problem.blocks:
        if block.kind != "psd":
            continue
        _, offset = indexer.blocks[block.name]
        for k in range(block.n_vars):
            psd_rows.append((offset + k, -1.0))
        cones.append(clarabel.PSDTriangleConeT(block.dim))

    data, rows_idx, cols_idx = [], [], []
    for r, coeffs in enumerate(rows_a):
        for c, v in coeffs.items():
            rows_idx.append(r)
            cols_idx.append(c)
            data.append(v)
    base = len(rows_a)
    for k, (c, v) in enumerate(psd_rows):
        rows_idx.append(base + k)
        cols_idx.append(c)
        data.append(v)
    m = base + len(psd_rows)
    a_mat = sp.csc_matrix((data, (rows_idx, cols_idx)), shape=(m, n))
    b_vec = np.concatenate([np.asarray(rhs, dtype=float),
                            np.zeros(len(psd_rows))])

    sign = 1.0 if problem.sense == "min" else -1.0
    q = np.zeros(n)
    for col, coeff in _accumulate(indexer, problem.objective).items():
        q[col] += sign * coeff

    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.max_iter = max_iter
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    settings.tol_feas = tol
    solver = clarabel.DefaultSolver(sp.csc_matrix((n, n)), q, a_mat, b_vec,
                                    cones, settings)
    solution = solver.solve()

    raw_status = str(solution.status)
    status = _STATUS_MAP.get(raw_status, "numerical-limit")
    value = None
    gap = math.inf
    if status in ("optimal", "numerical-limit"):
        primal = float(solution.obj_val)
        dual = float(solution.obj_val_dual)
        if math.isfinite(primal):
            value = sign * primal
            gap = abs(primal - dual) if math.isfinite(dual) else math.inf
    if status == "numerical-limit" and value is None:
        raise NumericalToleranceError(
            f"solver failed on {problem.name or 'conic problem'}: {raw_status}")
    return SolveResult(status=status, value=value, gap=gap,
                       iterations=int(solution.iterations),
                       solve_time=float(solution.solve_time))


def dump(problem: ConicProblem) -> str:
    """Plain-text dump (block table plus sparse triplet rows)."""
    lines = [f"problem {problem.name or '<unnamed>'} sense={problem.sense}"]
    lines.append("blocks:")
    for block in problem.blocks:
        lines.append(f"  {block.name} {block.kind} dim={block.dim}")
    lines.append("objective:")
    for name, i, j, coeff in problem.objective:
        lines.append(f"  {name}[{i},{j}] {coeff!r}")
    lines.append("rows:")
    for idx, row in enumerate(problem.rows):
        terms = " + ".join(f"{coeff!r}*{name}[{i},{j}]"
                           for name, i, j, coeff in row.terms)
        lines.append(f"  r{idx}: {terms} {row.sense} {row.rhs!r}")
    return "\n".join(lines)
