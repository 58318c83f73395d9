"""Exact minimum-cost linear sum assignment for square cost matrices.

``solve_lap`` runs a shortest-augmenting-path solver with dual potentials
(Jonker-Volgenant family, O(n^3)), then moves the optimum to the lexicographically
smallest optimal permutation, so ties resolve deterministically.
``brute_force_lap`` enumerates permutations and is kept as a test oracle.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numba
import numpy as np

from .exceptions import NonFiniteCost, TooLarge

BRUTE_FORCE_MAX_N = 9


@dataclass(frozen=True)
class Assignment:
    """Row ``i`` is matched to column ``permutation[i]``; ``total_cost`` is their exact sum."""

    permutation: np.ndarray
    total_cost: float

    @property
    def pairs(self):
        return [(i, int(j)) for i, j in enumerate(self.permutation)]


def check_cost_matrix(cost):
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1] or cost.shape[0] < 1:
        raise ValueError(f"cost matrix must be square and nonempty, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise NonFiniteCost("cost matrix contains NaN or infinite entries")
    if np.any(cost < 0):
        raise ValueError("cost matrix entries must be nonnegative")
    return np.ascontiguousarray(cost)


def assignment_cost(cost, permutation):
    """Correctly rounded sum of ``cost[i, permutation[i]]`` (independent of summation order)."""
    return math.fsum(cost[np.arange(len(permutation)), permutation].tolist())


@numba.njit(cache=True)
def _shortest_augmenting_path(cost):
    n = cost.shape[0]
    u = np.zeros(n)
    v = np.zeros(n)
    col4row = np.full(n, -1, np.int64)
    row4col = np.full(n, -1, np.int64)
    shortest = np.empty(n)
    path = np.empty(n, np.int64)
    in_sc = np.empty(n, np.bool_)
    in_sr = np.empty(n, np.bool_)
    remaining = np.empty(n, np.int64)

    for cur in range(n):
        shortest[:] = np.inf
        path[:] = -1
        in_sc[:] = False
        in_sr[:] = False
        nrem = n
        for k in range(n):
            remaining[k] = n - 1 - k
        i = cur
        min_val = 0.0
        sink = -1
        while sink < 0:
            in_sr[i] = True
            index = -1
            lowest = np.inf
            for it in range(nrem):
                j = remaining[it]
                r = min_val + cost[i, j] - u[i] - v[j]
                if r < shortest[j]:
                    path[j] = i
                    shortest[j] = r
                # among equal distances prefer a free column: it ends the search
                if shortest[j] < lowest or (shortest[j] == lowest and row4col[j] == -1):
                    lowest = shortest[j]
                    index = it
            min_val = lowest
            j = remaining[index]
            if row4col[j] == -1:
                sink = j
            else:
                i = row4col[j]
            in_sc[j] = True
            nrem -= 1
            remaining[index] = remaining[nrem]

        u[cur] += min_val
        for r in range(n):
            if in_sr[r] and r != cur:
                u[r] += min_val - shortest[col4row[r]]
        for c in range(n):
            if in_sc[c]:
                v[c] -= min_val - shortest[c]

        j = sink
        while True:
            i = path[j]
            row4col[j] = i
            tmp = col4row[i]
            col4row[i] = j
            j = tmp
            if i == cur:
                break
    return col4row, row4col, u, v


@numba.njit(cache=True)
def _lexicographic_optimum(cost, col4row, row4col, u, v, tol):
    # With optimal duals, the optimal assignments are exactly the perfect
    # matchings of the tight-edge subgraph. Fix rows in order, each to the
    # smallest tight column reachable through an alternating cycle.
    n = cost.shape[0]
    fixed_col = np.zeros(n, np.bool_)
    visited = np.zeros(n, np.bool_)
    move_to = np.empty(n, np.int64)
    queue = np.empty(n, np.int64)
    for i in range(n):
        ci = col4row[i]
        has_candidate = False
        for j in range(ci):
            if not fixed_col[j] and cost[i, j] - u[i] - v[j] <= tol:
                has_candidate = True
                break
        if has_candidate:
            visited[:] = False
            head = 0
            tail = 1
            queue[0] = ci
            while head < tail:
                c = queue[head]
                head += 1
                for r in range(i + 1, n):
                    if not visited[r] and col4row[r] != c and cost[r, c] - u[r] - v[c] <= tol:
                        visited[r] = True
                        move_to[r] = c
                        queue[tail] = col4row[r]
                        tail += 1
            chosen = -1
            for j in range(ci):
                if not fixed_col[j] and cost[i, j] - u[i] - v[j] <= tol and visited[row4col[j]]:
                    chosen = j
                    break
            if chosen >= 0:
                r = row4col[chosen]
                col4row[i] = chosen
                row4col[chosen] = i
                while True:
                    c = move_to[r]
                    owner = row4col[c]
                    col4row[r] = c
                    row4col[c] = r
                    if c == ci:
                        break
                    r = owner
        fixed_col[col4row[i]] = True
    return col4row


def solve_lap(cost):
    """Minimum-cost assignment of a square, nonnegative, finite cost matrix.

    Among several optimal permutations the lexicographically smallest is returned
    (edges count as tight up to ``1e-11`` times the largest entry).

    Raises:
        NonFiniteCost: any entry is NaN or infinite.
    """
    cost = check_cost_matrix(cost)
    col4row, row4col, u, v = _shortest_augmenting_path(cost)
    raw = np.asarray(col4row, dtype=np.intp).copy()
    tol = 1e-11 * float(cost.max())
    perm = np.asarray(_lexicographic_optimum(cost, col4row, row4col, u, v, tol), dtype=np.intp)
    total = assignment_cost(cost, perm)
    raw_total = assignment_cost(cost, raw)
    # the tie-break only moves along near-tight edges; never accept a worse exact sum
    if raw_total < total:
        return Assignment(raw, raw_total)
    return Assignment(perm, total)


def brute_force_lap(cost):
    """Exhaustive assignment over all ``n!`` permutations, lexicographically first on ties.

    Raises:
        TooLarge: ``n > 9``.
    """
    cost = check_cost_matrix(cost)
    n = cost.shape[0]
    if n > BRUTE_FORCE_MAX_N:
        raise TooLarge(f"brute force limited to n <= {BRUTE_FORCE_MAX_N}, got {n}")
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.intp)
    approx = cost[np.arange(n), perms].sum(axis=1)
    # refine the float sums exactly on the near-optimal candidates
    slack = 1e-9 * (1.0 + float(np.abs(approx).min()))
    best_perm, best_cost = None, math.inf
    for k in np.flatnonzero(approx <= approx.min() + slack):
        c = assignment_cost(cost, perms[k])
        if c < best_cost:
            best_perm, best_cost = perms[k], c
    return Assignment(best_perm.copy(), best_cost)
