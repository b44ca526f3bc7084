"""Optimal bipartite assignment with deterministic tie-breaking.

`hungarian` minimizes total cost over matchings of a rectangular cost
matrix and, among all minimizers, returns the lexicographically
smallest pair sequence.  `proximity_augment` adds extra positive pairs
for unassigned predictions whose reference points sit close to a
ground-truth center.
"""

from __future__ import annotations

import numpy as np


def _solve_rows_to_cols(cost: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Shortest-augmenting-path assignment for rows <= cols.

    Returns (row_for_col, u, v): the matching (entry -1 for unmatched
    columns) and the dual potentials, which satisfy
    cost[i, j] - u[i] - v[j] >= 0 with equality on matched edges.
    """
    m, n = cost.shape
    u = np.zeros(m)
    v = np.zeros(n + 1)  # index n is the virtual start column
    row_for_col = np.full(n + 1, -1)
    for i in range(m):
        row_for_col[n] = i
        j0 = n
        min_reduced = np.full(n + 1, np.inf)
        parent_col = np.full(n + 1, n)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = int(row_for_col[j0])
            # Relax edges of row i0 toward every unused real column.
            reduced = cost[i0] - u[i0] - v[:n]
            better = ~used[:n] & (reduced < min_reduced[:n])
            min_reduced[:n][better] = reduced[better]
            parent_col[:n][better] = j0
            masked = np.where(used[:n], np.inf, min_reduced[:n])
            j1 = int(np.argmin(masked))
            delta = float(masked[j1])
            # Grow the dual potentials by the Dijkstra step.
            used_cols = np.flatnonzero(used)
            u[row_for_col[used_cols]] += delta
            v[used_cols] -= delta
            min_reduced[~used] -= delta
            j0 = j1
            if row_for_col[j0] == -1:
                break
        # Augment along the alternating path back to the virtual column.
        while j0 != n:
            j1 = int(parent_col[j0])
            row_for_col[j0] = row_for_col[j1]
            j0 = j1
    return row_for_col[:n], u, v[:n]


def _pairs_from_matching(row_for_col: np.ndarray, transposed: bool) -> list[tuple[int, int]]:
    pairs = []
    for j, i in enumerate(row_for_col):
        if i >= 0:
            pairs.append((j, int(i)) if transposed else (int(i), j))
    pairs.sort()
    return pairs


def _matching_cost(cost: np.ndarray) -> float:
    """Minimal total cost of a maximal matching (min(m, n) pairs)."""
    m, n = cost.shape
    if m == 0 or n == 0:
        return 0.0
    mat = cost if m <= n else cost.T
    row_for_col, _, _ = _solve_rows_to_cols(mat)
    matched = row_for_col >= 0
    return float(mat[row_for_col[matched], np.flatnonzero(matched)].sum())


def _refine_lexicographic(cost: np.ndarray, best_total: float) -> list[tuple[int, int]]:
    """Among optimal matchings, build the lexicographically smallest
    pair sequence by fixing pairs greedily and re-solving the rest.

    Fixing (r, c) as the next pair discards every still-available row
    below r: the output sequence is sorted by row, so those rows could
    never appear later.
    """
    m, n = cost.shape
    k = min(m, n)
    tol = 1e-9 * (1.0 + abs(best_total))
    rows = list(range(m))
    cols = list(range(n))
    chosen: list[tuple[int, int]] = []
    fixed_cost = 0.0
    for position in range(k):
        need = k - position - 1
        done = False
        for ri in range(len(rows)):
            rest_rows = rows[ri + 1 :]
            if len(rest_rows) < need:
                break  # skipping this many rows leaves too few to finish
            r = rows[ri]
            for c in cols:
                rest_cols = [x for x in cols if x != c]
                sub = cost[np.ix_(rest_rows, rest_cols)] if need else np.zeros((0, 0))
                total = fixed_cost + cost[r, c] + _matching_cost(sub)
                if total <= best_total + tol:
                    chosen.append((r, c))
                    fixed_cost += float(cost[r, c])
                    rows = rest_rows
                    cols = rest_cols
                    done = True
                    break
            if done:
                break
        if not done:  # unreachable for finite costs; guards fp drift
            raise AssertionError("lexicographic refinement failed to extend")
    return chosen


def hungarian(cost: np.ndarray) -> list[tuple[int, int]]:
    """Minimum-cost bipartite matching of a rectangular cost matrix.

    Returns min(rows, cols) pairs (row, col), sorted by row, using each
    row and column at most once.  Among all minimum-cost matchings the
    lexicographically smallest pair sequence is returned.  Non-finite
    entries raise ValueError.
    """
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2:
        raise ValueError(f"hungarian: cost must be 2-D, got shape {c.shape}")
    if not np.all(np.isfinite(c)):
        raise ValueError("hungarian: cost matrix has non-finite entries")
    m, n = c.shape
    if m == 0 or n == 0:
        return []
    transposed = m > n
    mat = c.T if transposed else c
    row_for_col, u, v = _solve_rows_to_cols(mat)
    pairs = _pairs_from_matching(row_for_col, transposed)
    tol = 1e-9 * (1.0 + float(np.abs(c).max()))
    if _optimum_is_unique(mat, row_for_col, u, v, tol):
        return pairs
    total = float(sum(c[p] for p in pairs))
    return _refine_lexicographic(c, total)


def _optimum_is_unique(
    mat: np.ndarray,
    row_for_col: np.ndarray,
    u: np.ndarray,
    v: np.ndarray,
    tol: float,
) -> bool:
    """Decide whether the minimum-cost matching is the only one.

    By complementary slackness every optimal matching uses only tight
    edges (zero reduced cost) and may leave a matched column unmatched
    only if that column's dual is zero.  Two optimal matchings differ
    by alternating cycles and paths of tight edges, so the optimum is
    unique iff the digraph over columns (an edge col(i) -> j for every
    tight non-matching edge (i, j)) has no cycle and no path from a
    zero-dual matched column to an unmatched column.
    """
    n = mat.shape[1]
    reduced = mat - u[:, None] - v[None, :]
    matched = row_for_col >= 0
    col_of_row = {int(row_for_col[j]): j for j in range(n) if matched[j]}
    adj: list[list[int]] = [[] for _ in range(n)]
    for i, j in zip(*np.nonzero(reduced <= tol)):
        home = col_of_row[int(i)]  # every row is matched (rows <= cols)
        if home != j:
            adj[home].append(int(j))
    # Depth-first search for any directed cycle.
    state = np.zeros(n, dtype=np.int8)  # 0 new, 1 on stack, 2 done
    for start in range(n):
        if state[start] or not matched[start]:
            continue
        stack: list[tuple[int, int]] = [(start, 0)]
        state[start] = 1
        while stack:
            node, idx = stack[-1]
            if idx < len(adj[node]):
                stack[-1] = (node, idx + 1)
                nxt = adj[node][idx]
                if state[nxt] == 1:
                    return False  # alternating cycle: another optimum
                if state[nxt] == 0:
                    state[nxt] = 1
                    stack.append((nxt, 0))
            else:
                state[node] = 2
                stack.pop()
    # Reachability from releasable (zero-dual, matched) columns to any
    # unmatched column.
    seen = np.zeros(n, dtype=bool)
    frontier = [j for j in range(n) if matched[j] and v[j] >= -tol]
    seen[frontier] = True
    while frontier:
        node = frontier.pop()
        for nxt in adj[node]:
            if not matched[nxt]:
                return False  # alternating path releasing a column
            if not seen[nxt]:
                seen[nxt] = True
                frontier.append(nxt)
    return True


def proximity_augment(
    pairs: list[tuple[int, int]],
    pred_points: np.ndarray,
    gt_centers: np.ndarray,
    radius: float,
) -> list[tuple[int, int]]:
    """Add (pred, gt) positives for unassigned predictions near a center.

    A prediction joins the match list iff its reference point lies at
    Euclidean distance strictly below `radius` from its nearest
    ground-truth center (distance ties pick the lower center index).
    Existing pairs are never overridden, and each added prediction
    matches exactly one center.  Added pairs follow the originals in
    ascending prediction order.
    """
    pts = np.asarray(pred_points, dtype=np.float64).reshape(-1, 3)
    centers = np.asarray(gt_centers, dtype=np.float64).reshape(-1, 3)
    out = list(pairs)
    if len(centers) == 0 or len(pts) == 0:
        return out
    assigned = {r for r, _ in pairs}
    dists = np.linalg.norm(pts[:, None, :] - centers[None, :, :], axis=2)
    for r in range(len(pts)):
        if r in assigned:
            continue
        g = int(np.argmin(dists[r]))  # argmin takes the lowest index on ties
        if dists[r, g] < radius:
            out.append((r, g))
    return out
