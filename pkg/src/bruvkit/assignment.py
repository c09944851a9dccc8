"""Deterministic minimum-cost assignment on top of scipy's LAP solver.

scipy returns *an* optimal assignment but leaves cost ties unspecified; the
tracker needs byte-identical output across runs and platforms, so ties are
broken here by preferring the lexicographically smallest (row, col) pair
list among all optimal assignments.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment


def min_cost_assignment(
    cost: np.ndarray, tie_tol: float = 1e-9
) -> list[tuple[int, int]]:
    """Minimum-total-cost assignment of rows to columns.

    Returns ``min(n_rows, n_cols)`` pairs sorted by row. Among assignments
    whose total is within ``tie_tol`` of the optimum, the lexicographically
    smallest pair list wins, which makes the result independent of solver
    internals.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2:
        raise ValueError(f"cost must be a 2-D matrix, got shape {cost.shape}")
    n_rows, n_cols = cost.shape
    if n_rows == 0 or n_cols == 0:
        return []

    rr, cc = linear_sum_assignment(cost)
    best_total = float(cost[rr, cc].sum())
    k = min(n_rows, n_cols)

    # Re-derive the tie-broken solution by fixing pairs one row at a time:
    # row i takes the smallest column that still permits completing an
    # optimal assignment, or stays unassigned if none does (only possible
    # when rows outnumber columns).
    pairs: list[tuple[int, int]] = []
    free_cols = list(range(n_cols))
    fixed_cost = 0.0
    for i in range(n_rows):
        needed = k - len(pairs)
        if needed == 0:
            break
        for j in free_cols:
            rest = _optimal_completion(
                cost, range(i + 1, n_rows), [c for c in free_cols if c != j], needed - 1
            )
            if fixed_cost + cost[i, j] + rest <= best_total + tie_tol:
                pairs.append((i, j))
                free_cols.remove(j)
                fixed_cost += cost[i, j]
                break
    return pairs


def _optimal_completion(cost, rows, cols, needed: int) -> float:
    rows = list(rows)
    if needed == 0:
        return 0.0
    if len(rows) < needed or len(cols) < needed:
        return float("inf")
    sub = cost[np.ix_(rows, cols)]
    rr, cc = linear_sum_assignment(sub)
    return float(sub[rr, cc].sum())
