"""Fractional multi-commodity-flow relaxation and its lifetime upper bound.

The max-min lifetime objective is linearized with the standard substitution
y = t * x (time-scaled flows): per commodity, the source role injects t at
the source and the consumer role extracts t at the consumer, with combined
conservation at every other node, so any relay can implicitly hand flow
from the source role to the consumer role (the relaxation does not pin a
cache).  Energy rows bound each node's lifetime-scaled spend by its battery;
per-node degree caps take the scaled form sum_v y_uv <= t, which subsumes
the per-edge box y <= t.  The delay threshold never enters the model, so
the optimum upper-bounds every delay-feasible integral schedule.

Solved by a bundled dense two-phase primal simplex (Dantzig pricing with a
Bland anti-cycling fallback), with the final basic solution re-derived from
the original constraint matrix for machine-precision residuals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._backend import maybe_njit
from .topology import NetworkInstance

SOLVER_STATUSES = ("optimal", "infeasible", "unbounded", "iteration-limit",
                   "infinite")


@dataclass(frozen=True)
class LpModel:
    """Dense LP in natural units: maximize t subject to the rows below."""

    n_vars: int                 # y columns plus the trailing t column
    col_t: int
    var_names: tuple            # per column
    col_of: dict                # (role, piece, u, v) -> column
    a_eq: np.ndarray            # [m_eq, n_vars], b = 0
    eq_names: tuple
    a_ub: np.ndarray            # [m_ub, n_vars]
    b_ub: np.ndarray
    ub_names: tuple
    cache_rows: bool

    def residuals(self, x: np.ndarray):
        """Row residuals at x, normalized by each row's largest coefficient.

        Returns (max |Ax - b| over equalities, max constraint violation over
        inequalities); both are 0 for a perfectly feasible point.
        """
        x = np.asarray(x, dtype=np.float64)
        eq = 0.0
        if len(self.a_eq):
            scale = np.maximum(np.max(np.abs(self.a_eq), axis=1), 1e-300)
            eq = float(np.max(np.abs(self.a_eq @ x) / scale))
        ub = 0.0
        if len(self.a_ub):
            scale = np.maximum(
                np.max(np.abs(self.a_ub), axis=1),
                np.abs(self.b_ub) * 0 + 1e-300,
            )
            viol = (self.a_ub @ x - self.b_ub) / scale
            ub = float(np.max(viol))
        return eq, max(ub, 0.0)

    def dump(self) -> str:
        """Plain-text rendering (objective, rows, bounds) for cross-checking."""
        lines = ["maximize t", "subject to"]
        for name, row in zip(self.eq_names, self.a_eq):
            lines.append(f"  {name}: {_row_text(row, self.var_names)} = 0")
        for name, row, b in zip(self.ub_names, self.a_ub, self.b_ub):
            lines.append(f"  {name}: {_row_text(row, self.var_names)} <= {b!r}")
        lines.append("bounds")
        lines.append("  all variables >= 0")
        return "\n".join(lines) + "\n"


def _row_text(row, names):
    terms = []
    for j in np.flatnonzero(row):
        c = row[j]
        sign = "+" if c >= 0 else "-"
        terms.append(f"{sign} {abs(c)!r} {names[j]}")
    return " ".join(terms) if terms else "0"


@dataclass(frozen=True)
class LpSolution:
    status: str
    t_cycles: float
    y: np.ndarray               # scaled flows, aligned with LpModel columns
    iterations: int
    max_eq_residual: float
    max_ub_violation: float

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def build_lp(instance: NetworkInstance, cache_rows: bool = False) -> LpModel:
    """Assemble the relaxation for an instance.

    ``cache_rows`` adds the optional constraint that at least one cache
    forwards consumer-role flow for every piece (scaled form
    sum_{p in P} sum_v y_c[p,v] >= t).
    """
    n = instance.n_nodes
    pieces = instance.pieces
    directed = []
    for u, v in instance.edges:
        directed.append((u, v))
        directed.append((v, u))
    directed.sort()
    m_dir = len(directed)

    col_of = {}
    names = []
    for d in range(len(pieces)):
        for role in ("s", "c"):
            for (u, v) in directed:
                col_of[(role, d, u, v)] = len(names)
                names.append(f"y_{role}{d}_{u}_{v}")
    col_t = len(names)
    names.append("t")
    n_vars = len(names)

    out_cols = {}  # (role, d, u) -> columns leaving u
    in_cols = {}
    for (role, d, u, v), j in col_of.items():
        out_cols.setdefault((role, d, u), []).append(j)
        in_cols.setdefault((role, d, v), []).append(j)

    eq_rows = []
    eq_names = []
    for d, piece in enumerate(pieces):
        s, c = piece.source, piece.consumer
        for u in range(n):
            if u == s or u == c:
                continue
            row = np.zeros(n_vars)
            for role in ("s", "c"):
                for j in out_cols.get((role, d, u), ()):
                    row[j] += 1.0
                for j in in_cols.get((role, d, u), ()):
                    row[j] -= 1.0
            eq_rows.append(row)
            eq_names.append(f"conserve_d{d}_u{u}")
        row = np.zeros(n_vars)
        for j in out_cols.get(("s", d, s), ()):
            row[j] += 1.0
        for j in in_cols.get(("s", d, s), ()):
            row[j] -= 1.0
        row[col_t] = -1.0
        eq_rows.append(row)
        eq_names.append(f"inject_d{d}_s{s}")
        row = np.zeros(n_vars)
        for j in out_cols.get(("c", d, s), ()):
            row[j] += 1.0
        for j in in_cols.get(("c", d, s), ()):
            row[j] -= 1.0
        eq_rows.append(row)
        eq_names.append(f"crossrole_d{d}_s{s}")
        row = np.zeros(n_vars)
        for j in out_cols.get(("c", d, c), ()):
            row[j] += 1.0
        for j in in_cols.get(("c", d, c), ()):
            row[j] -= 1.0
        row[col_t] = 1.0
        eq_rows.append(row)
        eq_names.append(f"extract_d{d}_c{c}")
        row = np.zeros(n_vars)
        for j in out_cols.get(("s", d, c), ()):
            row[j] += 1.0
        for j in in_cols.get(("s", d, c), ()):
            row[j] -= 1.0
        eq_rows.append(row)
        eq_names.append(f"crossrole_d{d}_c{c}")

    ub_rows = []
    ub_b = []
    ub_names = []
    for u in range(n):
        row = np.zeros(n_vars)
        any_edge = False
        for d, piece in enumerate(pieces):
            for v in instance.neighbors[u]:
                eps = instance.tx_cost[(u, v)]
                row[col_of[("s", d, u, v)]] += eps * piece.gen_rate
                row[col_of[("c", d, u, v)]] += eps * piece.cons_rate
                any_edge = True
        if any_edge:
            ub_rows.append(row)
            ub_b.append(float(instance.energy_j[u]))
            ub_names.append(f"energy_u{u}")
    for d in range(len(pieces)):
        for role in ("s", "c"):
            for u in range(n):
                cols = out_cols.get((role, d, u), ())
                if not cols:
                    continue
                row = np.zeros(n_vars)
                for j in cols:
                    row[j] = 1.0
                row[col_t] = -1.0
                ub_rows.append(row)
                ub_b.append(0.0)
                ub_names.append(f"degree_{role}{d}_u{u}")
    if cache_rows:
        for d in range(len(pieces)):
            row = np.zeros(n_vars)
            for p in instance.caches:
                for j in out_cols.get(("c", d, p), ()):
                    row[j] -= 1.0
            row[col_t] = 1.0
            ub_rows.append(row)
            ub_b.append(0.0)
            ub_names.append(f"cache_d{d}")

    return LpModel(
        n_vars=n_vars,
        col_t=col_t,
        var_names=tuple(names),
        col_of=col_of,
        a_eq=np.asarray(eq_rows) if eq_rows else np.zeros((0, n_vars)),
        eq_names=tuple(eq_names),
        a_ub=np.asarray(ub_rows) if ub_rows else np.zeros((0, n_vars)),
        b_ub=np.asarray(ub_b, dtype=np.float64),
        ub_names=tuple(ub_names),
        cache_rows=cache_rows,
    )


# ---------------------------------------------------------------------------
# Dense two-phase primal simplex
# ---------------------------------------------------------------------------

_PIV_TOL = 1e-10
_RC_TOL = 1e-9
_STALL_LIMIT = 60

_OPT = 0
_UNBOUNDED = 1
_ITER = 2


@maybe_njit
def _simplex_phase2(T, basis, max_iter):
    """Pivot a tableau whose last row is the (minimization) objective and
    last column the RHS.  Dantzig pricing; switches to Bland's rule after a
    stall of degenerate pivots.  Returns (status, iterations)."""
    m = T.shape[0] - 1
    w = T.shape[1]
    ncols = w - 1
    bland = False
    stall = 0
    last_obj = T[m, ncols]
    it = 0
    while it < max_iter:
        enter = -1
        if bland:
            for j in range(ncols):
                if T[m, j] < -_RC_TOL:
                    enter = j
                    break
        else:
            best = -_RC_TOL
            for j in range(ncols):
                if T[m, j] < best:
                    best = T[m, j]
                    enter = j
        if enter < 0:
            return _OPT, it
        leave = -1
        best_ratio = np.inf
        for r in range(m):
            a = T[r, enter]
            if a > _PIV_TOL:
                ratio = T[r, ncols] / a
                if ratio < best_ratio - 1e-15:
                    best_ratio = ratio
                    leave = r
                elif leave >= 0 and ratio <= best_ratio + 1e-15:
                    if bland and basis[r] < basis[leave]:
                        leave = r
        if leave < 0:
            return _UNBOUNDED, it
        piv = T[leave, enter]
        for j in range(w):
            T[leave, j] /= piv
        for r in range(m + 1):
            if r == leave:
                continue
            f = T[r, enter]
            if f != 0.0:
                for j in range(w):
                    T[r, j] -= f * T[leave, j]
                T[r, enter] = 0.0
        basis[leave] = enter
        it += 1
        obj = T[m, ncols]
        if abs(obj - last_obj) <= 1e-12 * (1.0 + abs(obj)):
            stall += 1
            if stall >= _STALL_LIMIT:
                bland = True
        else:
            stall = 0
            bland = False
        last_obj = obj
    return _ITER, it


def solve_lp(model: LpModel, max_iterations: int = 50_000) -> LpSolution:
    """Optimal basic solution of the relaxation; deterministic.

    An instance with no data pieces has an unbounded lifetime; that case is
    reported as status "infinite" with t = +inf without running the solver.
    """
    if not len(model.a_eq) and not len(model.a_ub):
        return LpSolution("infinite", math.inf, np.zeros(model.n_vars), 0, 0.0, 0.0)
    has_flow = any(name.startswith("inject") for name in model.eq_names)
    if not has_flow:
        return LpSolution("infinite", math.inf, np.zeros(model.n_vars), 0, 0.0, 0.0)

    # Scale to O(1): lifetime unit T0 from the tightest single-node bound,
    # energy rows normalized by E_u.  Exact unit change, undone on exit.
    a_eq = model.a_eq
    a_ub = model.a_ub.copy()
    b_ub = model.b_ub.copy()
    energy_mask = np.array([nm.startswith("energy") for nm in model.ub_names])
    t0 = 1.0
    if energy_mask.any():
        rates = np.array([
            np.sum(a_ub[i][a_ub[i] > 0]) for i in np.flatnonzero(energy_mask)
        ])
        caps = b_ub[energy_mask]
        with np.errstate(divide="ignore"):
            t0 = float(np.min(caps / np.maximum(rates, 1e-300)))
        if not np.isfinite(t0) or t0 <= 0:
            t0 = 1.0
        rows = np.flatnonzero(energy_mask)
        for i in rows:
            a_ub[i] = a_ub[i] * (t0 / b_ub[i])
            b_ub[i] = 1.0

    m_eq, m_ub = len(a_eq), len(a_ub)
    n = model.n_vars
    ncols = n + m_ub
    # tableau rows: equalities first, then inequalities with slacks
    A = np.zeros((m_eq + m_ub, ncols))
    b = np.zeros(m_eq + m_ub)
    if m_eq:
        A[:m_eq, :n] = a_eq
    if m_ub:
        A[m_eq:, :n] = a_ub
        A[m_eq:, n:] = np.eye(m_ub)
        b[m_eq:] = b_ub
    basis = np.empty(m_eq + m_ub, dtype=np.int64)
    basis[m_eq:] = n + np.arange(m_ub)

    # b = 0 on every equality, so the origin is feasible and phase 1 is the
    # trivial step of pivoting the (zero-valued) artificial basics out.
    keep = np.ones(m_eq + m_ub, dtype=bool)
    for r in range(m_eq):
        row = A[r]
        cand = np.flatnonzero(np.abs(row) > 1e-9)
        if len(cand) == 0:
            keep[r] = False
            continue
        piv_col = cand[np.argmax(np.abs(row[cand]))]
        piv = A[r, piv_col]
        A[r] /= piv
        b[r] /= piv
        col = A[:, piv_col].copy()
        col[r] = 0.0
        nz = np.flatnonzero(col)
        if len(nz):
            A[nz] -= np.outer(col[nz], A[r])
            b[nz] -= col[nz] * b[r]
            A[nz, piv_col] = 0.0
        basis[r] = piv_col
    A = A[keep]
    b = b[keep]
    basis = basis[keep]
    # driving is degenerate (b = 0 rows), so only fp dust can appear here
    b[np.abs(b) < 1e-15] = 0.0

    cost = np.zeros(ncols)
    cost[model.col_t] = -1.0  # maximize t == minimize -t
    obj = cost.copy()
    rhs_obj = 0.0
    for r in range(len(basis)):
        cb = cost[basis[r]]
        if cb != 0.0:
            obj -= cb * A[r]
            rhs_obj -= cb * b[r]

    T = np.zeros((len(basis) + 1, ncols + 1))
    T[:-1, :ncols] = A
    T[:-1, ncols] = b
    T[-1, :ncols] = obj
    T[-1, ncols] = rhs_obj
    basis_work = basis.copy()

    code, iters = _simplex_phase2(T, basis_work, max_iterations)
    status = {_OPT: "optimal", _UNBOUNDED: "unbounded", _ITER: "iteration-limit"}[code]

    x = np.zeros(ncols)
    for r in range(len(basis_work)):
        if basis_work[r] < ncols:
            x[basis_work[r]] = T[r, ncols]
    if status == "optimal":
        # Re-derive the basic solution from the pristine matrix to wash out
        # accumulated tableau rounding.
        try:
            xb = np.linalg.solve(A[:, basis_work], b)
            if np.all(xb > -1e-7):
                x = np.zeros(ncols)
                x[basis_work] = np.maximum(xb, 0.0)
        except np.linalg.LinAlgError:
            pass

    y = x[:n] * t0
    y[model.col_t] = x[model.col_t] * t0
    t = float(y[model.col_t]) if status == "optimal" else math.nan
    if status == "optimal":
        # Residuals measured in the scaled system (rows normalized to O(1)
        # coefficients, flows in lifetime units t0), where the 1e-7
        # tolerance is meaningful independent of the instance's magnitude.
        eq_res = 0.0
        if len(model.a_eq):
            scale = np.maximum(np.max(np.abs(model.a_eq), axis=1), 1e-300)
            eq_res = float(np.max(np.abs(model.a_eq @ y) / scale / t0))
        ub_viol = 0.0
        if len(model.a_ub):
            act = model.a_ub @ y - model.b_ub
            scale = np.where(model.b_ub > 0, model.b_ub,
                             t0 * np.maximum(np.max(np.abs(model.a_ub), axis=1),
                                             1e-300))
            ub_viol = max(float(np.max(act / scale)), 0.0)
    else:
        eq_res, ub_viol = math.nan, math.nan
    return LpSolution(status=status, t_cycles=t, y=y, iterations=iters,
                      max_eq_residual=eq_res, max_ub_violation=ub_viol)


def lifetime_upper_bound(instance: NetworkInstance,
                         cache_rows: bool = False,
                         max_iterations: int = 50_000) -> LpSolution:
    """Build and solve the relaxation in one step."""
    return solve_lp(build_lp(instance, cache_rows=cache_rows),
                    max_iterations=max_iterations)
