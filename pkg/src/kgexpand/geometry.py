"""Vector kernels, exact k-NN index and the concept-cluster hypersphere model.

A cluster is a hypersphere over member concept vectors: its center is the
member mean, its radius the largest center-to-member distance, and its seed
set the ``tau`` members nearest the center. The seed set induces the merge
threshold used by the expansion search: the smallest center-to-seed distance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DomainError

LEAF_SIZE = 16


def cosine(u, v) -> float:
    """Cosine similarity, clipped into [-1, 1] against rounding spill."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DomainError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise DomainError("cosine undefined for zero vector")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def edis(u, v) -> float:
    """Euclidean distance."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DomainError(f"dimension mismatch: {u.shape} vs {v.shape}")
    return float(np.linalg.norm(u - v))


def build_kd_arrays(points: np.ndarray, leaf_size: int = LEAF_SIZE):
    """Encode a K-D tree over ``points`` as flat arrays.

    Returns the tuple consumed by the query kernels:
    ``(split_dim, split_val, left, right, leaf_start, leaf_count, perm, points)``.
    Internal nodes carry the split axis/value and child node ids; leaves have
    ``left == -1`` and address a slice of ``perm`` (a permutation of row
    indices). Split axes cycle by depth; the boundary point goes to the right
    child, so every left point is <= split_val and every right point >= it,
    which the plane-distance pruning in the kernels relies on.
    """
    n, dim = points.shape
    split_dim, split_val, left, right, leaf_start, leaf_count = [], [], [], [], [], []
    perm = np.arange(n, dtype=np.int64)

    def build(lo: int, hi: int, depth: int) -> int:
        node = len(split_dim)
        split_dim.append(-1)
        split_val.append(0.0)
        left.append(-1)
        right.append(-1)
        leaf_start.append(lo)
        leaf_count.append(hi - lo)
        if hi - lo <= leaf_size:
            return node
        axis = depth % dim
        seg = perm[lo:hi]
        order = np.lexsort((seg, points[seg, axis]))
        perm[lo:hi] = seg[order]
        mid = (lo + hi) // 2
        split_dim[node] = axis
        split_val[node] = points[perm[mid], axis]
        leaf_count[node] = 0
        left[node] = build(lo, mid, depth + 1)
        right[node] = build(mid, hi, depth + 1)
        return node

    build(0, n, 0)
    return (
        np.asarray(split_dim, dtype=np.int64),
        np.asarray(split_val, dtype=np.float64),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(leaf_start, dtype=np.int64),
        np.asarray(leaf_count, dtype=np.int64),
        perm,
        np.ascontiguousarray(points, dtype=np.float64),
    )


class NNIndex:
    """Exact k-nearest-neighbour index over (concept_id, vector) points.

    Query results are guaranteed identical to a linear scan, with distance
    ties broken by lexicographic concept id. Immutable after construction and
    safe for concurrent read queries.
    """

    def __init__(self, points, leaf_size: int = LEAF_SIZE):
        pairs = sorted(points, key=lambda p: p[0])
        if not pairs:
            raise DomainError("NNIndex requires at least one point")
        self.ids = [cid for cid, _ in pairs]
        self.points = np.ascontiguousarray([vec for _, vec in pairs], dtype=np.float64)
        self._tree = build_kd_arrays(self.points, leaf_size)

    def __len__(self) -> int:
        return len(self.ids)

    def query(self, q, k: int):
        """k nearest points to ``q`` as [(concept_id, distance)], ascending."""
        if k < 1 or k > len(self.ids):
            raise DomainError(f"k={k} out of range for index of size {len(self.ids)}")
        q = np.ascontiguousarray(q, dtype=np.float64)
        if q.shape != (self.points.shape[1],):
            raise DomainError(f"query dimension {q.shape} != {self.points.shape[1]}")
        idx, d2 = kernels.kd_query(self._tree, q, k)
        return [(self.ids[i], float(np.sqrt(d))) for i, d in zip(idx, d2)]


def nn_query(index: NNIndex, q, k: int):
    return index.query(q, k)


@dataclass
class ConceptCluster:
    """Hypersphere over member concepts (Definition: center = member mean,
    radius = max center-to-member distance, seeds = tau nearest members)."""

    cluster_id: int
    members: list[str]
    center: np.ndarray
    radius: float
    seeds: list[str]
    seed_distances: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.members)


def build_cluster(members, store, tau: int, cluster_id: int = 0,
                  use_index: bool = True) -> ConceptCluster:
    """Compute cluster statistics from scratch over ``members``.

    Statistics are accumulated over lexicographically sorted members so the
    result is bitwise permutation-invariant. ``use_index`` routes the seed
    selection through the K-D tree; the linear path gives identical output.
    """
    members = list(members)
    if not members:
        raise DomainError("cluster requires at least one member")
    if tau < 1:
        raise DomainError("tau must be >= 1")
    canon = sorted(set(members))
    if len(canon) != len(members):
        raise DomainError("duplicate members in cluster")
    vecs = np.stack([store.vector(c) for c in canon])
    center = vecs.mean(axis=0)
    dists = np.sqrt(np.einsum("ij,ij->i", vecs - center, vecs - center))
    radius = float(dists.max())
    n_seeds = min(tau, len(canon))
    if use_index and len(canon) > 1:
        seeded = NNIndex(zip(canon, vecs)).query(center, n_seeds)
        seeds = [cid for cid, _ in seeded]
        seed_d = np.array([d for _, d in seeded])
    else:
        order = np.lexsort((np.arange(len(canon)), dists))[:n_seeds]
        seeds = [canon[i] for i in order]
        seed_d = dists[order]
    return ConceptCluster(
        cluster_id=cluster_id,
        members=members,
        center=center,
        radius=radius,
        seeds=seeds,
        seed_distances=seed_d,
    )


def merge_threshold(cluster: ConceptCluster) -> float:
    """Smallest center-to-seed distance; 0 for singletons (callers fall back
    to the root cluster's threshold for sub-tau clusters)."""
    if len(cluster.seeds) == 0:
        raise DomainError("cluster has no seeds")
    return float(cluster.seed_distances[0])
