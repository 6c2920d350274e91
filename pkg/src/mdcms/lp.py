"""Small dense linear programs: two-phase tableau simplex with Bland's rule.

The rate LPs in this package have at most a few dozen variables and ~100
rows, so a plain tableau is fast enough and avoids a solver dependency.
Bland's rule guarantees termination on the degenerate vertices these
problems are full of (many constraints are tight at zero).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

PIVOT_TOL = 1e-11


class LPError(RuntimeError):
    pass


@dataclass
class LPResult:
    status: str  # "optimal", "infeasible" or "unbounded"
    x: np.ndarray | None
    value: float | None

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    col_vals = T[:, col].copy()
    col_vals[row] = 0.0
    T -= np.outer(col_vals, T[row])


def _run(T: np.ndarray, basis: list[int], n_cols: int, max_iter: int) -> str:
    """Minimize the objective held in the last row of ``T`` (reduced costs)."""
    m = len(basis)
    for _ in range(max_iter):
        obj = T[-1, :n_cols]
        candidates = np.nonzero(obj < -PIVOT_TOL)[0]
        if candidates.size == 0:
            return "optimal"
        col = int(candidates[0])
        column = T[:m, col]
        pos = column > PIVOT_TOL
        if not pos.any():
            return "unbounded"
        ratios = np.full(m, np.inf)
        ratios[pos] = T[:m, -1][pos] / column[pos]
        best = ratios.min()
        ties = np.nonzero(ratios <= best + PIVOT_TOL * max(1.0, abs(best)))[0]
        row = int(min(ties, key=lambda r: basis[r]))
        _pivot(T, row, col)
        basis[row] = col
    raise LPError("simplex iteration limit reached")


def solve(
    c: Sequence[float],
    A_ge: Sequence[Sequence[float]] = (),
    b_ge: Sequence[float] = (),
    A_le: Sequence[Sequence[float]] = (),
    b_le: Sequence[float] = (),
    A_eq: Sequence[Sequence[float]] = (),
    b_eq: Sequence[float] = (),
    max_iter: int = 10_000,
) -> LPResult:
    """Minimize ``c @ x`` subject to the given rows and ``x >= 0``."""
    c = np.asarray(c, dtype=float)
    n = c.size
    rows, rhs, sense = [], [], []
    for A, b, s in ((A_ge, b_ge, 1), (A_le, b_le, -1), (A_eq, b_eq, 0)):
        A = np.asarray(A, dtype=float).reshape(-1, n) if len(A) else np.zeros((0, n))
        b = np.asarray(b, dtype=float).reshape(-1)
        if A.shape[0] != b.size:
            raise ValueError("constraint matrix and right-hand side disagree in length")
        for a_row, b_val in zip(A, b):
            # normalize so every right-hand side is nonnegative
            if b_val < 0:
                a_row, b_val, s_row = -a_row, -b_val, -s
            else:
                s_row = s
            rows.append(a_row)
            rhs.append(b_val)
            sense.append(s_row)
    m = len(rows)
    if m == 0:
        if np.any(c < 0):
            return LPResult("unbounded", None, None)
        return LPResult("optimal", np.zeros(n), 0.0)

    n_slack = sum(1 for s in sense if s != 0)
    n_art = sum(1 for s in sense if s >= 0)
    n_cols = n + n_slack + n_art
    T = np.zeros((m + 1, n_cols + 1))
    basis = []
    k_slack, k_art = n, n + n_slack
    for i, (a_row, b_val, s) in enumerate(zip(rows, rhs, sense)):
        T[i, :n] = a_row
        T[i, -1] = b_val
        if s == -1:
            T[i, k_slack] = 1.0
            basis.append(k_slack)
            k_slack += 1
        else:
            if s == 1:
                T[i, k_slack] = -1.0
                k_slack += 1
            T[i, k_art] = 1.0
            basis.append(k_art)
            k_art += 1

    art_start = n + n_slack
    if n_art:
        # phase 1: minimize the sum of artificials
        T[-1, art_start:n_cols] = 1.0
        for i, b in enumerate(basis):
            if b >= art_start:
                T[-1] -= T[i]
        _run(T, basis, n_cols, max_iter)
        if -T[-1, -1] > 1e-9:
            return LPResult("infeasible", None, None)
        # drive zero-valued artificials out of the basis where possible
        for i, b in enumerate(basis):
            if b >= art_start:
                nz = np.nonzero(np.abs(T[i, :art_start]) > PIVOT_TOL)[0]
                if nz.size:
                    _pivot(T, i, int(nz[0]))
                    basis[i] = int(nz[0])
        keep = [i for i, b in enumerate(basis) if b < art_start]
        T = np.vstack([T[keep], T[-1:]])
        basis = [basis[i] for i in keep]
        T = np.hstack([T[:, :art_start], T[:, -1:]])
        n_cols = art_start

    T[-1] = 0.0
    T[-1, :n] = c
    for i, b in enumerate(basis):
        if T[-1, b] != 0.0:
            T[-1] -= T[-1, b] * T[i]
    status = _run(T, basis, n_cols, max_iter)
    if status != "optimal":
        return LPResult(status, None, None)
    x = np.zeros(n_cols)
    for i, b in enumerate(basis):
        x[b] = T[i, -1]
    x = np.maximum(x[:n], 0.0)
    return LPResult("optimal", x, float(c @ x))
