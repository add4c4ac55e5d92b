"""Minimum-cost bipartite assignment.

``solve_min_cost`` is a shortest-augmenting-path Hungarian method with dual
potentials (O(n^2 m), inner loop vectorized over columns).  ``solve_gated``
builds on it: entries above the gate are forbidden, the number of pairs is
maximized first and the total cost minimized among matchings of that size.

Among optimal matchings the lexicographically smallest list of sorted
``(row, col)`` pairs is returned, so ties are reproducible.  It is found on
the "tight" edges of the optimal dual solution: an assignment is optimal
exactly when all of its edges have zero reduced cost.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Matching:
    pairs: list[tuple[int, int]] = field(default_factory=list)
    unmatched_rows: list[int] = field(default_factory=list)
    unmatched_cols: list[int] = field(default_factory=list)

    def total(self, costs) -> float:
        costs = np.asarray(costs, dtype=float)
        return float(sum(costs[i, j] for i, j in self.pairs))

    def as_dict(self) -> dict[int, int]:
        return dict(self.pairs)


def _hungarian(a: np.ndarray, duals: bool = False):
    """Row -> column assignment for an ``n x m`` matrix with ``n <= m``.

    ``a`` may hold ``inf`` for forbidden cells as long as a complete row
    assignment over finite cells exists.  With ``duals`` the potentials
    ``(u, v)``, ``u[i] + v[j] <= a[i, j]`` with equality on the assignment,
    are returned as well.
    """
    n, m = a.shape
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=int)  # p[j]: row (1-based) holding column j, 0 if free
    way = np.zeros(m + 1, dtype=int)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used[1:]
            cur = a[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            masked = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(masked)) + 1
            delta = masked[j1 - 1]
            if not np.isfinite(delta):
                raise ValueError("no feasible complete assignment")
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    row_to_col = np.full(n, -1, dtype=int)
    for j in range(1, m + 1):
        if p[j]:
            row_to_col[p[j] - 1] = j - 1
    if duals:
        return row_to_col, u[1:], v[1:]
    return row_to_col


def _lex_smallest(a: np.ndarray, n_rows: int) -> np.ndarray:
    """Optimal assignment of the square matrix ``a`` whose first ``n_rows`` rows take the smallest columns.

    Rows are fixed in index order; each moves to its smallest tight column
    that an alternating cycle of tight edges through the not yet fixed rows
    can free.
    """
    cols, u, v = _hungarian(a, duals=True)
    finite = np.isfinite(a)
    scale = max(1.0, float(np.abs(a[finite]).max())) if finite.any() else 1.0
    with np.errstate(invalid="ignore"):
        tight = finite & (a - u[:, None] - v[None, :] <= 1e-10 * scale)
    owner = np.empty(len(cols), dtype=int)
    owner[cols] = np.arange(len(cols))
    fixed = np.zeros(len(cols), dtype=bool)
    for i in range(n_rows):
        for j in np.flatnonzero(tight[i, :cols[i]]):
            path = _alternating_path(tight, cols, owner, fixed, i, owner[j], cols[i], j)
            if path is not None:
                # rotate: i takes j, every row on the path takes the next column
                for r, c in path:
                    cols[r] = c
                    owner[c] = r
                cols[i] = j
                owner[j] = i
                break
        fixed[i] = True
    return cols


def _alternating_path(tight, cols, owner, fixed, i, start, target, taken):
    """Rows and new columns moving ``start`` onward until ``target`` is reached, or ``None``."""
    if fixed[start]:
        return None
    seen = np.zeros(tight.shape[1], dtype=bool)
    seen[taken] = True
    parent = {start: None}  # row -> (previous row, column it takes)
    stack = [start]
    while stack:
        r = stack.pop()
        for c in np.flatnonzero(tight[r] & ~seen):
            seen[c] = True
            if c == target:
                path = [(r, int(c))]
                while parent[r] is not None:
                    prev, col = parent[r]
                    path.append((prev, col))
                    r = prev
                return path
            nxt = owner[c]
            if nxt == i or fixed[nxt] or nxt in parent:
                continue
            parent[nxt] = (r, int(c))
            stack.append(nxt)
    return None


def _finish(pairs, n_rows, n_cols) -> Matching:
    pairs = sorted(pairs)
    rows = {i for i, _ in pairs}
    cols = {j for _, j in pairs}
    return Matching(
        pairs=pairs,
        unmatched_rows=[i for i in range(n_rows) if i not in rows],
        unmatched_cols=[j for j in range(n_cols) if j not in cols],
    )


def solve_min_cost(costs) -> Matching:
    """Optimal assignment of ``min(n_rows, n_cols)`` pairs minimizing total cost."""
    c = np.asarray(costs, dtype=float)
    if c.ndim != 2:
        raise ValueError("cost matrix must be 2-D")
    n, m = c.shape
    if n == 0 or m == 0:
        return _finish([], n, m)
    if not np.isfinite(c).all():
        raise ValueError("ungated costs must be finite")
    size = max(n, m)
    # pad to square with zero-cost dummies; dummy columns sort after real ones
    square = np.zeros((size, size))
    square[:n, :m] = c
    cols = _lex_smallest(square, n)
    pairs = [(i, int(cols[i])) for i in range(n) if cols[i] < m]
    return _finish(pairs, n, m)


def _max_cardinality(feasible: np.ndarray) -> int:
    """Size of a maximum matching in the bipartite feasibility graph (Kuhn)."""
    n, m = feasible.shape
    adj = [np.flatnonzero(feasible[i]).tolist() for i in range(n)]
    match_col = [-1] * m

    def augment(i, seen):
        for j in adj[i]:
            if seen[j]:
                continue
            seen[j] = True
            if match_col[j] < 0 or augment(match_col[j], seen):
                match_col[j] = i
                return True
        return False

    return sum(augment(i, [False] * m) for i in range(n))


def solve_gated(costs, gate=np.inf) -> Matching:
    """Gated assignment: cells with ``cost > gate`` cannot be paired.

    ``gate`` is a scalar or an array broadcastable to the cost matrix (one
    gate per candidate pair).  Among gate-feasible matchings the one with the
    most pairs wins; ties in size go to the lowest total cost.
    """
    c = np.asarray(costs, dtype=float)
    if c.ndim != 2:
        c = c.reshape(0, 0) if c.size == 0 else np.atleast_2d(c)
    n, m = c.shape
    if n == 0 or m == 0:
        return _finish([], n, m)
    g = np.broadcast_to(np.asarray(gate, dtype=float), c.shape)
    feasible = np.isfinite(c) & (c <= g)
    if feasible.all():
        return solve_min_cost(c)
    k = _max_cardinality(feasible)
    if k == 0:
        return _finish([], n, m)
    # n real rows + (m - k) dummy rows; m real cols + (n - k) dummy cols.
    # Dummies pair only with real nodes, which forces exactly k real pairs.
    size = n + m - k
    aug = np.full((size, size), np.inf)
    aug[:n, :m] = np.where(feasible, c, np.inf)
    aug[:n, m:] = 0.0
    aug[n:, :m] = 0.0
    cols = _lex_smallest(aug, n)
    pairs = [(i, int(cols[i])) for i in range(n) if cols[i] < m]
    return _finish(pairs, n, m)
