"""Desk-scale LP machinery: model container, revised simplex, file export.

Models are maximization problems over nonnegative variables with <=
constraints and nonnegative right-hand sides, so the all-slack basis is
feasible and no phase-1 is needed.  The solver keeps a dense basis inverse
(numpy) and prices columns through a sparse constraint matrix; Bland's rule
kicks in after a degenerate stall to guarantee termination.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import NumericalFailure

_PRICE_TOL = 1e-9
_PIVOT_TOL = 1e-10
_REFACTOR_EVERY = 150
_STALL_LIMIT = 200


@dataclass
class Row:
    name: str
    coefs: dict
    rhs: float


@dataclass
class LpModel:
    """maximize sum(objective[v] * v) s.t. rows (all <=), variables >= 0."""

    variables: list
    objective: dict
    rows: list
    meta: dict = field(default_factory=dict)

    def finalize(self):
        """Sort variables and rows by name for deterministic downstream output."""
        self.variables = sorted(self.variables)
        self.rows = sorted(self.rows, key=lambda r: r.name)
        seen = set(self.variables)
        for row in self.rows:
            unknown = set(row.coefs) - seen
            if unknown:
                raise NumericalFailure(f"row {row.name} references unknown {unknown}")
        return self

    def matrices(self):
        index = {v: i for i, v in enumerate(self.variables)}
        m, n = len(self.rows), len(self.variables)
        data, ri, ci = [], [], []
        b = np.zeros(m)
        for i, row in enumerate(self.rows):
            b[i] = row.rhs
            for var, coef in row.coefs.items():
                if coef != 0.0:
                    data.append(coef)
                    ri.append(i)
                    ci.append(index[var])
        a = sparse.csc_matrix((data, (ri, ci)), shape=(m, n))
        c = np.zeros(n)
        for var, coef in self.objective.items():
            c[index[var]] = coef
        return a, b, c


@dataclass
class LpSolution:
    objective: float
    values: dict
    duals: dict
    iterations: int
    max_primal_residual: float
    max_dual_residual: float


def solve(model, max_iterations=None):
    """Primal revised simplex; returns an optimality-certified solution.

    Raises :class:`NumericalFailure` on cycling/iteration-cap/unboundedness;
    callers can then export the model and solve it externally.
    """
    a, b, c = model.matrices()
    m, n = a.shape
    if np.any(b < 0):
        raise NumericalFailure("negative right-hand side; model not in expected form")
    if m == 0 or n == 0:
        return LpSolution(0.0, {v: 0.0 for v in model.variables}, {}, 0, 0.0, 0.0)

    a_full = sparse.hstack([a, sparse.eye(m, format="csc")], format="csc")
    c_full = np.concatenate([c, np.zeros(m)])
    basis = list(range(n, n + m))
    binv = np.eye(m)
    x_b = b.copy()
    cap = max_iterations or max(2000, 60 * (m + n))
    bland = False
    stall = 0
    last_obj = 0.0

    for it in range(cap):
        y = c_full[basis] @ binv
        reduced = c_full - (a_full.T @ y)
        reduced[basis] = 0.0
        if bland:
            entering = -1
            for j in range(n + m):
                if reduced[j] > _PRICE_TOL:
                    entering = j
                    break
        else:
            entering = int(np.argmax(reduced))
            if reduced[entering] <= _PRICE_TOL:
                entering = -1
        if entering < 0:
            # Optimality seen through a drifted inverse is re-checked fresh.
            binv = np.linalg.inv(a_full[:, basis].toarray())
            x_b = np.maximum(binv @ b, 0.0)
            y = c_full[basis] @ binv
            reduced = c_full - (a_full.T @ y)
            reduced[basis] = 0.0
            if reduced.max(initial=0.0) <= _PRICE_TOL:
                return _extract(model, a, b, c, a_full, c_full, basis, binv, it)
            continue

        u = binv @ a_full[:, entering].toarray().ravel()
        mask = u > _PIVOT_TOL
        if not mask.any():
            raise NumericalFailure("unbounded direction encountered")
        ratios = np.full(m, np.inf)
        ratios[mask] = x_b[mask] / u[mask]
        theta = ratios.min()
        rows = np.flatnonzero(ratios <= theta + 1e-15)
        if bland:
            leaving = min(rows, key=lambda r: basis[r])
        else:
            leaving = max(rows, key=lambda r: (u[r], -basis[r]))

        x_b = x_b - theta * u
        x_b[leaving] = theta
        x_b = np.maximum(x_b, 0.0)
        basis[leaving] = entering
        pivot_row = binv[leaving, :] / u[leaving]
        binv -= np.outer(u, pivot_row)
        binv[leaving, :] = pivot_row

        if (it + 1) % _REFACTOR_EVERY == 0:
            binv = np.linalg.inv(a_full[:, basis].toarray())
            x_b = np.maximum(binv @ b, 0.0)

        obj = float(c_full[basis] @ x_b)
        if obj <= last_obj + 1e-12:
            stall += 1
            if stall > _STALL_LIMIT:
                bland = True
        else:
            stall = 0
            last_obj = obj

    raise NumericalFailure(f"iteration cap {cap} reached")


def _extract(model, a, b, c, a_full, c_full, basis, binv, iterations):
    m, n = a.shape
    binv = np.linalg.inv(a_full[:, basis].toarray())
    x_b = binv @ b
    x = np.zeros(n + m)
    x[basis] = x_b
    x = np.where(x < 0, np.where(x > -1e-9, 0.0, x), x)
    xs = x[:n]

    y = c_full[basis] @ binv
    reduced = c_full - (a_full.T @ y)
    reduced[basis] = 0.0
    scale = max(1.0, float(np.abs(b).max(initial=0.0)))
    primal_res = float(np.max(a @ xs - b, initial=0.0)) / scale
    dual_res = float(np.max(reduced, initial=0.0))
    slack = b - a @ xs
    comp = max(
        float(np.max(np.abs(xs * reduced[:n]), initial=0.0)),
        float(np.max(np.abs(slack * y), initial=0.0)),
    ) / scale
    if primal_res > 1e-7 or dual_res > 1e-7 or min(y.min(initial=0.0), 0.0) < -1e-7:
        raise NumericalFailure(
            f"optimality certificate failed (primal {primal_res:.2e}, "
            f"dual {dual_res:.2e})"
        )
    if xs.min(initial=0.0) < -1e-9:
        raise NumericalFailure("negative primal value beyond tolerance")
    values = {v: float(max(xs[i], 0.0)) for i, v in enumerate(model.variables)}
    duals = {row.name: float(y[i]) for i, row in enumerate(model.rows)}
    objective = float(c @ xs)
    return LpSolution(objective, values, duals, iterations, primal_res, max(dual_res, comp))


# ---------------------------------------------------------------------------
# Deterministic file export


def _num(x):
    return f"{x:.12g}"


def write_lp_text(model):
    """CPLEX-style LP text; variables default to >= 0 so no Bounds entries."""
    lines = ["\\ entroute LP export", "Maximize"]
    terms = [
        f"{'+' if coef >= 0 else '-'} {_num(abs(coef))} {var}"
        for var, coef in sorted(model.objective.items())
        if coef != 0.0
    ]
    lines.append(" obj: " + (" ".join(terms) if terms else "0 " + model.variables[0]))
    lines.append("Subject To")
    for row in model.rows:
        terms = [
            f"{'+' if coef >= 0 else '-'} {_num(abs(coef))} {var}"
            for var, coef in sorted(row.coefs.items())
            if coef != 0.0
        ]
        body = " ".join(terms) if terms else f"+ 0 {model.variables[0]}"
        lines.append(f" {row.name}: {body} <= {_num(row.rhs)}")
    lines.append("End")
    return "\n".join(lines) + "\n"


def write_mps(model):
    """Free-format MPS with an OBJSENSE MAX section."""
    lines = ["NAME ENTROUTE", "OBJSENSE", "    MAX", "ROWS", " N  obj"]
    for row in model.rows:
        lines.append(f" L  {row.name}")
    lines.append("COLUMNS")
    by_var = {v: [] for v in model.variables}
    for var, coef in model.objective.items():
        if coef != 0.0:
            by_var[var].append(("obj", coef))
    for row in model.rows:
        for var, coef in row.coefs.items():
            if coef != 0.0:
                by_var[var].append((row.name, coef))
    for var in model.variables:
        entries = sorted(by_var[var])
        if not entries:
            entries = [("obj", 0.0)]
        for rname, coef in entries:
            lines.append(f"    {var}  {rname}  {_num(coef)}")
    lines.append("RHS")
    for row in model.rows:
        lines.append(f"    rhs  {row.name}  {_num(row.rhs)}")
    lines.append("ENDATA")
    return "\n".join(lines) + "\n"
