"""Dense two-phase simplex for the solver's LP relaxations.

Maximizes c.x subject to A.x <= b and x >= 0. Upper bounds on
variables are expressed by the caller as explicit rows, which keeps the
tableau logic simple; relaxations solved here are small by design.
Dantzig pricing with a Bland's-rule fallback after a degeneracy streak
keeps pivoting fast and cycle-free.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_TOL = 1e-9
_STALL_LIMIT = 60  # degenerate pivots before switching to Bland's rule


@dataclass
class LpResult:
    status: str  # optimal | infeasible | unbounded | iteration_limit
    x: np.ndarray | None
    objective: float


def lp_maximize(c: np.ndarray, A: np.ndarray, b: np.ndarray,
                max_iterations: int = 20000) -> LpResult:
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = A.shape if A.size else (len(b), len(c))
    if m == 0:
        # unconstrained over x >= 0: bounded only if no positive costs
        if np.any(c > _TOL):
            return LpResult("unbounded", None, np.inf)
        return LpResult("optimal", np.zeros(n), 0.0)

    # rows with negative rhs are flipped and given artificials
    flip = b < 0
    A = A.copy()
    b = b.copy()
    A[flip] *= -1.0
    b[flip] *= -1.0
    slack_sign = np.where(flip, -1.0, 1.0)

    art_rows = np.flatnonzero(flip)
    n_art = len(art_rows)
    width = n + m + n_art
    T = np.zeros((m, width + 1))
    T[:, :n] = A
    T[np.arange(m), n + np.arange(m)] = slack_sign
    for k, r in enumerate(art_rows):
        T[r, n + m + k] = 1.0
    T[:, -1] = b

    basis = np.array([n + i for i in range(m)], dtype=int)
    for k, r in enumerate(art_rows):
        basis[r] = n + m + k

    if n_art:
        # phase 1: minimize the artificial sum
        obj1 = np.zeros(width)
        obj1[n + m:] = -1.0
        status = _run(T, basis, obj1, max_iterations)
        if status != "optimal":
            return LpResult(status, None, -np.inf)
        if -_phase_objective(T, basis, obj1) > 1e-7:
            return LpResult("infeasible", None, -np.inf)
        _pivot_out_artificials(T, basis, n + m)
        T[:, n + m:width] = 0.0  # artificials are dead from here on

    obj2 = np.zeros(width)
    obj2[:n] = c
    status = _run(T, basis, obj2, max_iterations, forbidden_from=n + m)
    if status != "optimal":
        return LpResult(status, None, np.inf if status == "unbounded" else -np.inf)
    x = np.zeros(width)
    x[basis] = T[:, -1]
    return LpResult("optimal", x[:n], float(c @ x[:n]))


def _phase_objective(T: np.ndarray, basis: np.ndarray, obj: np.ndarray) -> float:
    return float(obj[basis] @ T[:, -1])


def _reduced_costs(T: np.ndarray, basis: np.ndarray, obj: np.ndarray) -> np.ndarray:
    y = obj[basis] @ T[:, :-1]
    return obj - y


def _run(T: np.ndarray, basis: np.ndarray, obj: np.ndarray,
         max_iterations: int, forbidden_from: int | None = None) -> str:
    m = T.shape[0]
    stall = 0
    for _ in range(max_iterations):
        red = _reduced_costs(T, basis, obj)
        if forbidden_from is not None:
            red[forbidden_from:] = 0.0
        if stall < _STALL_LIMIT:
            j = int(np.argmax(red))
            if red[j] <= _TOL:
                return "optimal"
        else:
            pos = np.flatnonzero(red > _TOL)
            if len(pos) == 0:
                return "optimal"
            j = int(pos[0])  # Bland's rule

        col = T[:, j]
        rows = np.flatnonzero(col > _TOL)
        if len(rows) == 0:
            return "unbounded"
        ratios = T[rows, -1] / col[rows]
        best = np.min(ratios)
        cand = rows[ratios <= best + _TOL]
        r = int(cand[np.argmin(basis[cand])])  # lowest basic index leaves

        stall = stall + 1 if T[r, -1] <= _TOL else 0
        _pivot(T, basis, r, j)
    return "iteration_limit"


def _pivot(T: np.ndarray, basis: np.ndarray, r: int, j: int) -> None:
    T[r] /= T[r, j]
    col = T[:, j].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])
    basis[r] = j


def _pivot_out_artificials(T: np.ndarray, basis: np.ndarray, art_start: int) -> None:
    for r in range(len(basis)):
        if basis[r] >= art_start:
            row = T[r, :art_start]
            nz = np.flatnonzero(np.abs(row) > _TOL)
            if len(nz):
                _pivot(T, basis, r, int(nz[0]))
            # else: redundant row, keep the zero-valued artificial basic
