"""Typed block partitions of the pair set and mixing diagnostics.

A partition groups pairs into blocks such that two different blocks of
the same type are at line-graph distance >= delta in the active snapshot.
Three constructions are provided (lattice chessboard, anchor-distance
coordinates, classical MDS embedding) plus an exhaustive validator,
centered block sums and an empirical mixing coefficient estimated across
independent replications.

Conventions: types are numbered 1..K; type 0 is reserved for pairs whose
anchor coordinates are infinite (one block per connected component, which
keeps the separation requirement vacuous). Blocks within a type are
numbered 1, 2, ... in row-major order of their spatial position.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DataError, DomainError
from .netcore import grid_edge_anchor, grid_network, pair_distance_snapshot


@dataclass(frozen=True, eq=False)
class PartitionAssignment:
    """Map pair -> (type k, block m) at a fixed time."""

    t: float
    delta: float
    type_count: int
    assign: dict = field(repr=False)
    flags: tuple = ()

    @property
    def covered(self):
        return frozenset(self.assign)

    def types(self):
        return sorted({k for k, _ in self.assign.values()})

    def blocks(self, k):
        return sorted({m for kk, m in self.assign.values() if kk == k})

    def pairs_of(self, k, m):
        return sorted(p for p, km in self.assign.items() if km == (k, m))

    def to_rows(self):
        """Sorted (i, j, k, m) rows for serialization."""
        return sorted((p[0], p[1], k, m) for p, (k, m) in self.assign.items())


def _dense_types(raw):
    """Renumber occupied type keys 1..K in sorted order; None -> 0."""
    keys = sorted({tk for tk in raw.values() if tk is not None})
    lookup = {tk: i + 1 for i, tk in enumerate(keys)}
    lookup[None] = 0
    return lookup, len(keys)


def _dense_blocks(assign_raw, type_of):
    """Per type, number block keys 1.. in sorted (row-major) order."""
    by_type = {}
    for p, (tk, bk) in assign_raw.items():
        by_type.setdefault(type_of[tk], set()).add(bk)
    m_of = {k: {bk: i + 1 for i, bk in enumerate(sorted(bks))}
            for k, bks in by_type.items()}
    return {p: (type_of[tk], m_of[type_of[tk]][bk])
            for p, (tk, bk) in assign_raw.items()}


def grid_chessboard(dims, delta, torus=False, block_side=None):
    """Chessboard partition of a lattice's edges.

    Blocks are squares of cells; an edge belongs to the block of its
    anchor cell, so bottom and left boundary edges stay with their block.
    Types are the parities of the block coordinates (4 in 2D, 2 on a
    path). On a flat grid the block side defaults to delta; on a torus to
    the smallest side >= delta - 1 that tiles each wrapped axis into one,
    two or an even number of blocks, so the wrap cannot bring same-type
    blocks closer than delta.
    """
    rows, cols = int(dims[0]), int(dims[1])
    delta = int(delta)
    if delta < 1:
        raise DomainError("delta must be an integer >= 1")
    net = grid_network(rows, cols, torus=torus)

    def axis_ok(side, s, wrapped):
        if not wrapped or side <= s:
            return True
        if side % s:
            return False
        qt = side // s
        return qt in (1, 2) or qt % 2 == 0

    if block_side is None:
        if not torus:
            block_side = delta
        else:
            block_side = None
            for s in range(max(1, delta - 1), max(rows, cols) + 1):
                if axis_ok(rows, s, True) and axis_ok(cols, s, True):
                    block_side = s
                    break
            if block_side is None:
                raise ConfigurationError(
                    f"no block side tiles a {rows}x{cols} torus for "
                    f"delta={delta}; pass block_side explicitly")
    block_side = int(block_side)
    if block_side < delta - 1:
        raise ConfigurationError(
            f"block side {block_side} cannot separate blocks by {delta}")
    if torus and not (axis_ok(rows, block_side, True)
                      and axis_ok(cols, block_side, True)):
        raise ConfigurationError(
            f"block side {block_side} does not tile the {rows}x{cols} torus "
            "into one, two or an even number of blocks per axis")

    raw = {}
    for p in net.pairs():
        r, c, _ = grid_edge_anchor(rows, cols, p, torus=torus)
        bk = (r // block_side, c // block_side)
        raw[p] = ((bk[0] % 2, bk[1] % 2), bk)
    type_of, k_count = _dense_types({p: tk for p, (tk, _) in raw.items()})
    assign = _dense_blocks(raw, type_of)
    n_blocks = len(set(assign.values()))
    flags = ("single_block",) if n_blocks == 1 else ()
    return PartitionAssignment(t=0.0, delta=float(delta),
                               type_count=k_count, assign=assign,
                               flags=flags)


def _cell_key(coords, delta):
    return tuple(int(math.floor(c / delta)) for c in coords)


def coordinate_partition(net, t, anchors, delta):
    """Chessboard over anchor-distance coordinates of the active pairs.

    Each active pair gets coordinates (distance to anchor 1, ..., anchor
    d) in the snapshot at t; the triangle inequality makes each
    coordinate 1-Lipschitz in the line-graph metric, which certifies the
    separation of same-type blocks. Pairs that cannot reach every anchor
    go to the reserved type 0, one block per connected component.
    """
    if delta <= 0:
        raise DomainError("delta must be positive")
    anchors = [net.pair_key(a) for a in anchors]
    if not anchors:
        raise ConfigurationError("need at least one anchor pair")
    snap = pair_distance_snapshot(net, t)
    for a in anchors:
        if a not in snap.index:
            raise ConfigurationError(f"anchor {a} is inactive at t={t}")
    comp_of = {}
    for ci, comp in enumerate(sorted(snap.components(), key=min)):
        for p in comp:
            comp_of[p] = ci
    raw = {}
    for p in snap.edges:
        coords = [snap.dist(p, a) for a in anchors]
        if all(np.isfinite(c) for c in coords):
            raw[p] = (tuple(k % 2 for k in _cell_key(coords, delta)),
                      _cell_key(coords, delta))
        else:
            raw[p] = (None, comp_of[p])
    type_of, k_count = _dense_types({p: tk for p, (tk, _) in raw.items()})
    assign = _dense_blocks(raw, type_of)
    return PartitionAssignment(t=float(t), delta=float(delta),
                               type_count=k_count, assign=assign)


def _classic_mds(dmat, dim):
    """Classical scaling: double-center the squared distances, keep the
    top nonnegative eigenpairs. Returns (n, dim) coordinates, padding
    with zero columns when fewer positive eigenvalues exist."""
    m = dmat.shape[0]
    if m == 1:
        return np.zeros((1, dim)), dim
    j = np.eye(m) - np.full((m, m), 1.0 / m)
    b = -0.5 * j @ (dmat ** 2) @ j
    vals, vecs = np.linalg.eigh(b)
    order = np.argsort(vals)[::-1][:dim]
    vals = vals[order]
    keep = vals > max(vals[0], 0.0) * 1e-12
    used = int(keep.sum())
    coords = np.zeros((m, dim))
    if used:
        coords[:, :used] = vecs[:, order[keep]] * np.sqrt(vals[keep])
    return coords, used


def mds_partition(net, t, dim, delta):
    """Embed active pairs per component by classical MDS, chessboard the
    embedding, then re-certify.

    The embedding only approximates the snapshot distances, so the
    claimed separation is re-measured: the returned assignment carries
    achieved_delta, the largest separation the blocks actually satisfy
    (the requested delta when nothing constrains it).
    """
    if delta <= 0:
        raise DomainError("delta must be positive")
    if int(dim) < 1:
        raise DomainError("embedding dimension must be >= 1")
    dim = int(dim)
    snap = pair_distance_snapshot(net, t)
    raw = {}
    reduced = False
    for ci, comp in enumerate(sorted(snap.components(), key=min)):
        edges = sorted(comp)
        idx = np.array([snap.index[p] for p in edges])
        coords, used = _classic_mds(snap.dmat[np.ix_(idx, idx)], dim)
        if used < dim and len(edges) > 1:
            reduced = True
        for p, row in zip(edges, coords):
            cell = _cell_key(row, delta)
            raw[p] = (tuple(k % 2 for k in cell), (ci, cell))
    if reduced:
        warnings.warn("fewer positive eigenvalues than the requested "
                      "embedding dimension; extra axes collapsed to 0")
    type_of, k_count = _dense_types({p: tk for p, (tk, _) in raw.items()})
    assign = _dense_blocks(raw, type_of)
    achieved = _min_separation(assign, snap)
    if not np.isfinite(achieved):
        achieved = float(delta)
    pa = PartitionAssignment(t=float(t), delta=float(achieved),
                             type_count=k_count, assign=assign,
                             flags=("recertified",))
    return pa, float(achieved)


def _min_separation(assign, snap):
    """Smallest snapshot distance between same-type different-block
    pairs; inf when no such pair exists."""
    best = np.inf
    by_type = {}
    for p, (k, m) in assign.items():
        by_type.setdefault(k, []).append((p, m))
    for k, items in by_type.items():
        idx = np.array([snap.index.get(p, -1) for p, _ in items])
        ms = np.array([m for _, m in items])
        live = idx >= 0
        if live.sum() < 2:
            continue
        sub = snap.dmat[np.ix_(idx[live], idx[live])]
        diff = ms[live][:, None] != ms[live][None, :]
        if diff.any():
            best = min(best, float(np.min(sub[diff])))
    return best


def validate_partition(p, net, t):
    """Exhaustive certificate: disjointness holds by construction (the
    assignment is a map), so this checks the separation condition and
    how much of the active snapshot is covered."""
    snap = pair_distance_snapshot(net, t)
    active = set(snap.edges)
    covered = p.covered
    coverage = (len(active & covered) / len(active)) if active else 1.0
    sep = _min_separation(p.assign, snap)
    ok = sep >= p.delta - 1e-12
    return {
        "ok": bool(ok),
        "worst_violation": None if ok else float(sep),
        "min_separation": None if not np.isfinite(sep) else float(sep),
        "coverage": float(coverage),
        "active_pairs": len(active),
        "covered_pairs": len(covered),
    }


@dataclass(frozen=True, eq=False)
class BlockSums:
    """Centered per-block sums of a pair-indexed variable."""

    U: dict
    sizes: dict

    def max_size(self, k):
        return max((s for (kk, _), s in self.sizes.items() if kk == k),
                   default=0)

    def of_type(self, k, m_max=None):
        ms = sorted({m for kk, m in self.U if kk == k})
        if m_max is not None:
            ms = [m for m in ms if m <= m_max]
        return np.array([self.U[(k, m)] for m in ms])


def block_sums(Z, p, centering=None):
    """Sum (Z - centering) within each block of the partition."""
    U, sizes = {}, {}
    for pair, km in p.assign.items():
        if pair not in Z:
            raise DataError(f"no value supplied for covered pair {pair}")
        c = centering.get(pair, 0.0) if centering else 0.0
        U[km] = U.get(km, 0.0) + float(Z[pair]) - float(c)
        sizes[km] = sizes.get(km, 0) + 1
    return BlockSums(U=U, sizes=sizes)


def estimate_beta(samples, k, M, bins=4):
    """Empirical mixing coefficient between the past blocks and block M
    of type k, across independent replications.

    The past is reduced to the scalar sum of blocks 1..M-1, both
    marginals are cut into equiprobable quantile bins, and the estimate
    is half the L1 distance between the joint and the product of the
    marginals. Finite bins and the scalar reduction both only lose mass,
    so this is a lower bound of the population coefficient.
    """
    if len(samples) < 200:
        raise ConfigurationError(
            f"need at least 200 replications, got {len(samples)}")
    if bins < 2:
        raise ConfigurationError("need at least 2 bins")
    if M < 2:
        raise ConfigurationError("block index M must be >= 2")
    past = np.array([sum(bs.U.get((k, m), 0.0) for m in range(1, M))
                     for bs in samples])
    last = np.array([bs.U.get((k, M), 0.0) for bs in samples])
    if np.ptp(past) == 0.0 or np.ptp(last) == 0.0:
        warnings.warn("degenerate block sums; mixing estimate set to 0")
        return 0.0
    qs = np.arange(1, bins) / bins
    cp = np.searchsorted(np.quantile(past, qs), past, side="right")
    cl = np.searchsorted(np.quantile(last, qs), last, side="right")
    n = len(samples)
    joint = np.zeros((bins, bins))
    np.add.at(joint, (cp, cl), 1.0)
    joint /= n
    pa = joint.sum(axis=1)
    pb = joint.sum(axis=0)
    return float(0.5 * np.abs(joint - np.outer(pa, pb)).sum())
