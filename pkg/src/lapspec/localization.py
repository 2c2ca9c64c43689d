"""Pairing eigenvalues with coefficient ranges over basis supports.

Builds the bipartite membership graph between eigenvalues and support
intervals, finds a perfect matching (Hopcroft-Karp) or a counting
deficiency certificate when none exists, audits the naive sorted pairing,
and checks the interval-counting inequalities on dof subsets.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

__all__ = [
    "AdjacencyMatrix",
    "PairingResult",
    "CountCheck",
    "build_adjacency",
    "hopcroft_karp",
    "perfect_matching",
    "pair_spectrum",
    "canonical_matching",
    "sorted_pairing_audit",
    "subset_counting_check",
    "write_pairing_csv",
    "write_violations_csv",
]


def _eigs_of(spectrum) -> np.ndarray:
    return np.asarray(getattr(spectrum, "eigenvalues", spectrum), dtype=float)


def _bounds_of(intervals):
    kmin = np.array([iv.kmin for iv in intervals])
    kmax = np.array([iv.kmax for iv in intervals])
    return kmin, kmax


@dataclass(frozen=True)
class AdjacencyMatrix:
    """Boolean membership matrix: entry (s, i) says eigenvalue s lies in
    interval i, within relative tolerance eps (scale max(1, |lambda|))."""

    matrix: np.ndarray
    eps: float

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def degree_stats(self) -> dict:
        row = self.matrix.sum(axis=1)
        col = self.matrix.sum(axis=0)
        return {
            "row_min": int(row.min()), "row_max": int(row.max()),
            "row_mean": float(row.mean()),
            "col_min": int(col.min()), "col_max": int(col.max()),
        }


def build_adjacency(spectrum, intervals, eps: float = 1e-9) -> AdjacencyMatrix:
    """Membership graph between eigenvalues (rows) and intervals (columns)."""
    eigs = _eigs_of(spectrum)
    if len(eigs) != len(intervals):
        raise ValueError(f"count mismatch: {len(eigs)} eigenvalues vs "
                         f"{len(intervals)} intervals")
    kmin, kmax = _bounds_of(intervals)
    slack = eps * np.maximum(1.0, np.abs(eigs))
    lam = eigs[:, None]
    G = (lam >= kmin[None, :] - slack[:, None]) \
        & (lam <= kmax[None, :] + slack[:, None])
    return AdjacencyMatrix(G, eps)


@dataclass(frozen=True)
class PairingResult:
    """Permutation pi with eigenvalue pi(i) inside interval i, when matched.

    When no perfect matching exists, ``witness`` is a set J of interval
    indices adjacent to fewer than |J| eigenvalues (the counting condition
    certificate) and ``pi`` holds -1 for the unmatched intervals.
    """

    pi: np.ndarray
    matched: bool
    witness: np.ndarray | None = None


def hopcroft_karp(adjacency: np.ndarray):
    """Maximum bipartite matching on a boolean matrix (rows = left side).

    Returns (match_left, match_right) with -1 for unmatched vertices.
    """
    n_left, n_right = adjacency.shape
    neighbors = [np.nonzero(adjacency[u])[0] for u in range(n_left)]
    match_l = np.full(n_left, -1, dtype=int)
    match_r = np.full(n_right, -1, dtype=int)
    INF = np.iinfo(np.int64).max

    def bfs():
        dist = np.full(n_left, INF, dtype=np.int64)
        queue = deque()
        for u in range(n_left):
            if match_l[u] < 0:
                dist[u] = 0
                queue.append(u)
        found = INF
        while queue:
            u = queue.popleft()
            if dist[u] >= found:
                continue
            for v in neighbors[u]:
                w = match_r[v]
                if w < 0:
                    found = dist[u] + 1
                elif dist[w] == INF:
                    dist[w] = dist[u] + 1
                    queue.append(w)
        return dist, found

    def dfs(u, dist, found):
        stack = [(u, 0)]
        path = []
        while stack:
            node, ptr = stack[-1]
            advanced = False
            nbrs = neighbors[node]
            while ptr < len(nbrs):
                v = nbrs[ptr]
                ptr += 1
                w = match_r[v]
                if w < 0 and dist[node] + 1 == found:
                    path.append((node, v))
                    for a, b in path:
                        match_l[a] = b
                        match_r[b] = a
                    return True
                if w >= 0 and dist[w] == dist[node] + 1:
                    stack[-1] = (node, ptr)
                    path.append((node, v))
                    stack.append((w, 0))
                    advanced = True
                    break
            if advanced:
                continue
            dist[node] = INF
            stack.pop()
            if path:
                path.pop()
        return False

    while True:
        dist, found = bfs()
        if found == INF:
            break
        for u in range(n_left):
            if match_l[u] < 0:
                dfs(u, dist, found)
    return match_l, match_r


def _hall_witness(adjacency: np.ndarray, match_l: np.ndarray,
                  match_r: np.ndarray) -> np.ndarray:
    """Interval set J with |G(J)| < |J|, from alternating reachability.

    Columns are the side to be covered.  Starting from unmatched columns,
    alternate non-matching edges (column -> row) and matching edges
    (row -> column); the visited columns J see exactly the visited rows,
    and those are fewer because every visited row is matched into J.
    """
    n_rows, n_cols = adjacency.shape
    unmatched = np.nonzero(match_r < 0)[0]
    col_seen = np.zeros(n_cols, dtype=bool)
    row_seen = np.zeros(n_rows, dtype=bool)
    col_seen[unmatched] = True
    queue = deque(unmatched)
    while queue:
        c = queue.popleft()
        rows = np.nonzero(adjacency[:, c] & ~row_seen)[0]
        for r in rows:
            row_seen[r] = True
            # r is matched (else the matching would be augmentable)
            nxt = match_l[r]
            if nxt >= 0 and not col_seen[nxt]:
                col_seen[nxt] = True
                queue.append(nxt)
    return np.nonzero(col_seen)[0]


def perfect_matching(G: AdjacencyMatrix) -> PairingResult:
    """Perfect eigenvalue/interval matching, or a deficiency certificate."""
    adjacency = G.matrix
    if adjacency.shape[0] != adjacency.shape[1]:
        raise ValueError("adjacency matrix must be square")
    match_l, match_r = hopcroft_karp(adjacency)
    pi = match_r.copy()  # interval i -> eigenvalue index
    if (pi >= 0).all():
        return PairingResult(pi, True)
    witness = _hall_witness(adjacency, match_l, match_r)
    return PairingResult(pi, False, witness=witness)


def pair_spectrum(spectrum, intervals, eps: float = 1e-9,
                  nodal_vals=None) -> PairingResult:
    """A good perfect matching: sorted order when valid, else Hopcroft-Karp.

    When nodal values are given and pairing the s-th smallest eigenvalue
    with the s-th smallest nodal value keeps every eigenvalue strictly
    inside its interval, that pairing is returned (it is canonical and its
    gaps are the ones the nodal-value bounds describe).  Otherwise falls
    back to maximum matching at tolerance levels 0, 1e-12, then ``eps``: a
    matching found at a tighter level keeps every paired eigenvalue inside
    its interval in floating point, which the gap/bound chain relies on.
    """
    if nodal_vals is not None:
        order, violations = sorted_pairing_audit(spectrum, nodal_vals,
                                                 intervals, eps=0.0)
        if not violations:
            pi = np.empty(len(order), dtype=int)
            pi[order] = np.arange(len(order))
            return PairingResult(pi, True)
    levels = sorted({0.0, min(1e-12, eps), eps})
    result = None
    for level in levels:
        result = perfect_matching(build_adjacency(spectrum, intervals, level))
        if result.matched:
            return result
    return result


def canonical_matching(G: AdjacencyMatrix) -> PairingResult:
    """Lexicographically smallest perfect matching (by interval index),
    for reproducible output.  Quadratic in N times a matching run; meant
    for small graphs."""
    base = perfect_matching(G)
    if not base.matched:
        return base
    n = G.n
    adjacency = G.matrix.copy()
    pi = np.full(n, -1, dtype=int)
    free_rows = np.ones(n, dtype=bool)
    for i in range(n):
        for s in np.nonzero(adjacency[:, i] & free_rows)[0]:
            sub = adjacency[np.ix_(free_rows & (np.arange(n) != s),
                                   np.arange(n) > i)]
            ml, _ = hopcroft_karp(sub)
            if (ml >= 0).sum() == n - i - 1:
                pi[i] = s
                free_rows[s] = False
                break
        if pi[i] < 0:
            raise AssertionError("canonicalization lost the matching")
    return PairingResult(pi, True)


def sorted_pairing_audit(spectrum, nodal_vals, intervals, eps: float = 1e-9):
    """Pair the s-th smallest eigenvalue with the dof of the s-th smallest
    nodal value and list the pairs whose eigenvalue leaves its interval.

    Returns (pairing, violations): ``pairing[s]`` is the dof paired with
    eigenvalue s; violations is a list of such s.
    """
    eigs = _eigs_of(spectrum)
    nodal_vals = np.asarray(nodal_vals)
    if len(eigs) != len(nodal_vals) or len(eigs) != len(intervals):
        raise ValueError("count mismatch")
    order = np.argsort(nodal_vals, kind="stable")  # ties by dof index
    kmin, kmax = _bounds_of(intervals)
    slack = eps * np.maximum(1.0, np.abs(eigs))
    lo = kmin[order] - slack
    hi = kmax[order] + slack
    bad = np.nonzero((eigs < lo) | (eigs > hi))[0]
    return order, list(map(int, bad))


@dataclass(frozen=True)
class CountCheck:
    """Counts behind the subset inequalities: at least |J| eigenvalues in
    the interval hull of the supports of J, and in the interval union."""

    subset_size: int
    count_hull: int
    count_union: int

    @property
    def passed(self) -> bool:
        return (self.count_hull >= self.subset_size
                and self.count_union >= self.subset_size)


def subset_counting_check(spectrum, intervals, subset,
                          eps: float = 1e-9) -> CountCheck:
    subset = np.asarray(sorted(set(map(int, subset))))
    if len(subset) == 0:
        raise ValueError("subset must be non-empty")
    eigs = _eigs_of(spectrum)
    kmin, kmax = _bounds_of(intervals)
    slack = eps * np.maximum(1.0, np.abs(eigs))
    lo, hi = kmin[subset].min(), kmax[subset].max()
    in_hull = (eigs >= lo - slack) & (eigs <= hi + slack)
    in_union = np.zeros(len(eigs), dtype=bool)
    for j in subset:
        in_union |= (eigs >= kmin[j] - slack) & (eigs <= kmax[j] + slack)
    return CountCheck(len(subset), int(in_hull.sum()), int(in_union.sum()))


def write_pairing_csv(path, mesh, spectrum, intervals, pairing,
                      nodal_vals) -> None:
    eigs = _eigs_of(spectrum)
    coords = mesh.free_coords()
    with open(path, "w") as fh:
        fh.write("dof,node_x,node_y,k_nodal,kmin,kmax,lambda_paired\n")
        for i, iv in enumerate(intervals):
            lam = eigs[pairing.pi[i]] if pairing.pi[i] >= 0 else float("nan")
            fh.write(f"{i},{float(coords[i, 0])!r},{float(coords[i, 1])!r},"
                     f"{float(nodal_vals[i])!r},{iv.kmin!r},{iv.kmax!r},"
                     f"{float(lam)!r}\n")


def write_violations_csv(path, spectrum, intervals, order, violations) -> None:
    eigs = _eigs_of(spectrum)
    with open(path, "w") as fh:
        fh.write("s,lambda,dof,kmin,kmax\n")
        for s in violations:
            dof = int(order[s])
            iv = intervals[dof]
            fh.write(f"{s},{float(eigs[s])!r},{dof},{iv.kmin!r},{iv.kmax!r}\n")
