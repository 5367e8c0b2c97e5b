"""Dynamic networks: activity intervals, pair distances, hub screening.

A dynamic network is a finite vertex set together with per-pair activity
given as disjoint half-open intervals [a, b) inside [0, horizon). Pairs
are undirected by default and normalized to i < j; directed networks keep
ordered pairs. Distances between pairs are hop counts in the line graph
of the snapshot of active pairs at a fixed time: two active pairs are at
distance 1 when they share a vertex, and pairs in different components
(or inactive pairs) are at distance infinity.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError


def normalize_pair(pair, n, directed=False):
    """Validate a vertex pair against a registry of size n."""
    try:
        i, j = pair
    except (TypeError, ValueError):
        raise DomainError(f"not a vertex pair: {pair!r}")
    i, j = int(i), int(j)
    if i == j:
        raise DomainError(f"self-loops are not allowed: ({i}, {j})")
    if not (0 <= i < n and 0 <= j < n):
        raise DomainError(f"vertex out of range [0, {n}): ({i}, {j})")
    if not directed and i > j:
        i, j = j, i
    return (i, j)


class DynamicNetwork:
    """Vertex registry plus per-pair activity intervals.

    Parameters
    ----------
    n : int
        Number of vertices; pairs use vertex ids 0..n-1.
    horizon : float
        Right end of the observation window [0, horizon).
    activity : dict, optional
        Map pair -> iterable of (start, end) intervals.
    directed : bool
        Whether (i, j) and (j, i) are distinct pairs.
    """

    def __init__(self, n, horizon, activity=None, directed=False):
        if int(n) < 2:
            raise DomainError("a network needs at least two vertices")
        if not (float(horizon) > 0.0):
            raise DomainError("horizon must be positive")
        self.n = int(n)
        self.horizon = float(horizon)
        self.directed = bool(directed)
        self._activity = {}
        if activity:
            for pair, intervals in activity.items():
                self.set_activity(pair, intervals)

    def pair_key(self, pair):
        return normalize_pair(pair, self.n, self.directed)

    @property
    def pair_count(self):
        """Size of the pair index set (all pairs, active or not)."""
        if self.directed:
            return self.n * (self.n - 1)
        return self.n * (self.n - 1) // 2

    def set_activity(self, pair, intervals):
        key = self.pair_key(pair)
        ivals = sorted((float(a), float(b)) for a, b in intervals)
        prev_end = None
        for a, b in ivals:
            if not (0.0 <= a < b <= self.horizon):
                raise DomainError(
                    f"interval [{a}, {b}) outside [0, {self.horizon}) for {key}"
                )
            if prev_end is not None and a < prev_end:
                raise DomainError(f"overlapping activity intervals for {key}")
            prev_end = b
        if ivals:
            self._activity[key] = tuple(ivals)
        else:
            self._activity.pop(key, None)

    def activity(self, pair):
        return self._activity.get(self.pair_key(pair), ())

    def pairs(self):
        """Pairs with any activity, in sorted order."""
        return sorted(self._activity)

    def active_pairs(self, t):
        return [p for p in self.pairs() if self.is_active(p, t)]

    def is_active(self, pair, t):
        if not (0.0 <= t <= self.horizon):
            raise DomainError(f"time {t} outside [0, {self.horizon}]")
        return any(a <= t < b for a, b in self.activity(pair))

    def active_in_window(self, pair, a, b):
        """Whether the pair is active anywhere on the closed window [a, b]."""
        return any(s <= b and a < e for s, e in self.activity(pair))

    def exposure(self, pair, a=0.0, b=None):
        """Total active length inside [a, b)."""
        if b is None:
            b = self.horizon
        total = 0.0
        for s, e in self.activity(pair):
            total += max(0.0, min(e, b) - max(s, a))
        return total


def edge_active(net, pair, t):
    """Indicator that the pair is active at time t (half-open intervals)."""
    return net.is_active(pair, t)


@dataclass(frozen=True, eq=False)
class PairDistanceSnapshot:
    """All-pairs line-graph hop distances among pairs active at time t."""

    t: float
    edges: tuple
    dmat: np.ndarray
    cap: int
    index: dict = field(repr=False)

    def dist(self, u, v):
        iu = self.index.get(tuple(u))
        iv = self.index.get(tuple(v))
        if iu is None or iv is None:
            return np.inf
        return float(self.dmat[iu, iv])

    def dist_to_set(self, u, pairs):
        ds = [self.dist(u, v) for v in pairs]
        return min(ds) if ds else np.inf

    def components(self):
        """Connected components of the active snapshot, as frozensets."""
        seen = set()
        comps = []
        for i, e in enumerate(self.edges):
            if i in seen:
                continue
            members = {j for j in range(len(self.edges))
                       if np.isfinite(self.dmat[i, j])}
            seen |= members
            comps.append(frozenset(self.edges[j] for j in members))
        return comps


def pair_distance_snapshot(net, t, cap=None):
    """BFS all active pairs at time t; distances beyond cap become inf.

    The default cap 2n exceeds any achievable hop count, so it only
    matters when an explicit smaller cap is requested.
    """
    if cap is None:
        cap = 2 * net.n
    if cap < 1:
        raise DomainError("cap must be at least 1")
    edges = tuple(p for p in net.pairs() if net.is_active(p, t))
    m = len(edges)
    index = {e: k for k, e in enumerate(edges)}
    dmat = np.full((m, m), np.inf)
    touch = {}
    for k, (i, j) in enumerate(edges):
        touch.setdefault(i, []).append(k)
        touch.setdefault(j, []).append(k)
    nbrs = [set() for _ in range(m)]
    for ks in touch.values():
        for a in ks:
            nbrs[a].update(ks)
    for src in range(m):
        dmat[src, src] = 0.0
        queue = deque([(src, 0)])
        seen = {src}
        while queue:
            node, d = queue.popleft()
            if d >= cap:
                continue
            for nb in nbrs[node]:
                if nb not in seen:
                    seen.add(nb)
                    dmat[src, nb] = d + 1
                    queue.append((nb, d + 1))
    return PairDistanceSnapshot(t=float(t), edges=edges, dmat=dmat,
                                cap=int(cap), index=index)


@dataclass(frozen=True)
class HubReport:
    """Neighbourhood load counts around candidate pairs."""

    m: int
    threshold: int
    window: tuple
    per_pair: dict
    flags: dict

    @property
    def max_count(self):
        return max(self.per_pair.values(), default=0)

    @property
    def flagged(self):
        return sorted(p for p, f in self.flags.items() if f)

    @property
    def flagged_count(self):
        return len(self.flagged)


def hub_report(net, candidates, m, threshold, window):
    """Count, per candidate pair, how many pairs sit within hop distance m.

    A pair (i, j) contributes when its distance to the candidate in the
    snapshot taken at the window start is below m and it is active
    somewhere on the closed window. Candidates inactive at the window
    start therefore get count 0.
    """
    a, b = float(window[0]), float(window[1])
    if not (0.0 <= a <= b <= net.horizon):
        raise DomainError(f"window [{a}, {b}] outside [0, {net.horizon}]")
    if int(m) < 1:
        raise DomainError("neighbourhood radius m must be >= 1")
    if int(threshold) < 1:
        raise DomainError("flag threshold must be >= 1")
    snap = pair_distance_snapshot(net, a)
    windowed = [p for p in net.pairs() if net.active_in_window(p, a, b)]
    per_pair = {}
    for cand in candidates:
        key = net.pair_key(cand)
        per_pair[key] = sum(1 for p in windowed if snap.dist(p, key) < m)
    flags = {p: c >= int(threshold) for p, c in per_pair.items()}
    return HubReport(m=int(m), threshold=int(threshold), window=(a, b),
                     per_pair=per_pair, flags=flags)


def grid_network(rows, cols, torus=False, horizon=1.0):
    """Rectangular lattice (optionally wrapped) with all edges active.

    Vertex ids are row-major: id = r * cols + c. A wrapped dimension needs
    at least 3 cells so that wrap edges do not duplicate interior ones.
    """
    if rows < 1 or cols < 1 or rows * cols < 2:
        raise DomainError("grid must contain at least two vertices")
    if torus and (rows < 3 or cols < 3) and not (rows == 1 or cols == 1):
        raise DomainError("torus needs side >= 3 in each wrapped dimension")
    if torus and (rows == 1 or cols == 1) and max(rows, cols) < 3:
        raise DomainError("ring needs at least 3 vertices")
    activity = {}
    full = [(0.0, float(horizon))]
    for r in range(rows):
        for c in range(cols):
            u = r * cols + c
            if c + 1 < cols:
                activity[(u, r * cols + c + 1)] = full
            elif torus and cols >= 3:
                activity[(u, r * cols)] = full
            if r + 1 < rows:
                activity[(u, (r + 1) * cols + c)] = full
            elif torus and rows >= 3:
                activity[(u, c)] = full
    return DynamicNetwork(rows * cols, horizon, activity=activity)


def grid_edge_anchor(rows, cols, pair, torus=False):
    """Anchor cell (r, c) and orientation of a lattice edge.

    The anchor is the cell whose right/down step generates the edge, so
    bottom and left boundary edges of a block belong to that block.
    Orientation is 'h' or 'v'.
    """
    (u, v) = pair
    r1, c1 = divmod(int(u), cols)
    r2, c2 = divmod(int(v), cols)
    if r1 == r2:
        if c2 == c1 + 1:
            return (r1, c1, "h")
        if torus and c1 == 0 and c2 == cols - 1:
            return (r1, c2, "h")
    if c1 == c2:
        if r2 == r1 + 1:
            return (r1, c1, "v")
        if torus and r1 == 0 and r2 == rows - 1:
            return (r2, c1, "v")
    raise DomainError(f"{pair} is not a lattice edge for a {rows}x{cols} grid")
