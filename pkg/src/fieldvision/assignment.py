"""Minimum-cost assignment with infeasible entries.

Infeasible pairs are marked with +inf in the cost matrix. The solver
returns the matching that, first, matches as many feasible pairs as
possible and, second, minimizes total cost among those matchings. That is
exactly what exhaustive search over a big-M padded square matrix yields,
which is the oracle the tests compare against.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError


def _solve_square_rect(a: np.ndarray) -> np.ndarray:
    """Shortest-augmenting-path assignment for n <= m; returns col per row.

    Classic Jonker-Volgenant style dual update: potentials u, v stay
    feasible while each row is inserted via a Dijkstra-like scan. O(n^2 m),
    deterministic for a given input.
    """
    n, m = a.shape
    inf = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=np.int64)  # p[j] = row matched to column j (1-based)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, inf)
        way = np.zeros(m + 1, dtype=np.int64)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = inf
            j1 = 0
            for j in range(1, m + 1):
                if used[j]:
                    continue
                cur = a[i0 - 1, j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
            for j in range(1, m + 1):
                if not used[j] and minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(m + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0 != 0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    row_to_col = np.full(n, -1, dtype=np.int64)
    for j in range(1, m + 1):
        if p[j] != 0:
            row_to_col[p[j] - 1] = j - 1
    return row_to_col


def hungarian_assign(
    cost: np.ndarray,
) -> tuple[list[tuple[int, int]], list[int], list[int]]:
    """Solve the assignment problem; see module docstring for semantics.

    Returns (matches, unmatched_rows, unmatched_cols) with matches sorted
    by row index.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2:
        raise DataError(f"cost matrix must be 2-D, got shape {cost.shape}")
    n, m = cost.shape
    if n == 0 or m == 0:
        return [], list(range(n)), list(range(m))
    if np.isneginf(cost).any() or np.isnan(cost).any():
        raise DataError("costs must be finite or +inf")
    finite = np.isfinite(cost)
    if not finite.any():
        return [], list(range(n)), list(range(m))

    big = (float(np.abs(cost[finite]).max()) + 1.0) * (max(n, m) + 1)
    a = np.where(finite, cost, big)
    if n <= m:
        row_to_col = _solve_square_rect(a)
        pairs = [(i, int(j)) for i, j in enumerate(row_to_col) if j >= 0]
    else:
        col_to_row = _solve_square_rect(a.T)
        pairs = [(int(i), j) for j, i in enumerate(col_to_row) if i >= 0]
    matches = sorted((i, j) for i, j in pairs if finite[i, j])
    matched_rows = {i for i, _ in matches}
    matched_cols = {j for _, j in matches}
    return (matches,
            [i for i in range(n) if i not in matched_rows],
            [j for j in range(m) if j not in matched_cols])


def brute_force_assign(cost: np.ndarray) -> tuple[list[tuple[int, int]], float]:
    """Exhaustive reference solver for small instances (oracle in tests)."""
    from itertools import permutations

    cost = np.asarray(cost, dtype=float)
    n, m = cost.shape
    if n == 0 or m == 0 or not np.isfinite(cost).any():
        return [], 0.0
    finite = np.isfinite(cost)
    big = (float(np.abs(cost[finite]).max()) + 1.0) * (max(n, m) + 1)
    k = max(n, m)
    padded = np.full((k, k), big)
    padded[:n, :m] = np.where(finite, cost, big)
    best_total = np.inf
    best_pairs: list[tuple[int, int]] = []
    for perm in permutations(range(k)):
        total = sum(padded[i, perm[i]] for i in range(k))
        if total < best_total - 1e-12:
            best_total = total
            best_pairs = [(i, perm[i]) for i in range(n)
                          if perm[i] < m and finite[i, perm[i]]]
    return sorted(best_pairs), float(sum(cost[i, j] for i, j in best_pairs))
