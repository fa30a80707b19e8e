"""Independent reference implementations used to derive expected test values.

Everything here is deliberately naive (plain lists, python floats, stdlib
math) and shares no code with the package under test. The generation oracle
follows the documented search semantics step by step; the k-NN, PageRank and
AP oracles are the brute-force formulations.
"""

from __future__ import annotations

import math


def norm(v):
    return math.sqrt(sum(x * x for x in v))


def unit(v):
    n = norm(v)
    return [x / n for x in v]


def dot(u, v):
    return sum(a * b for a, b in zip(u, v))


def cos(u, v):
    return dot(u, v) / (norm(u) * norm(v))


def edis(u, v):
    return math.sqrt(sum((a - b) ** 2 for a, b in zip(u, v)))


def knn_brute(points, q, k):
    """points: list of (id, vector). Returns [(id, distance)] by (dist, id)."""
    scored = sorted((edis(v, q), cid) for cid, v in points)
    return [(cid, d) for d, cid in scored[:k]]


# ---------------------------------------------------------------------------
# cluster bookkeeping
# ---------------------------------------------------------------------------


def cluster_stats(members, vectors, tau):
    """(center, radius, seeds, seed_distances) over lex-sorted members."""
    canon = sorted(members)
    dim = len(vectors[canon[0]])
    center = [sum(vectors[c][j] for c in canon) / len(canon) for j in range(dim)]
    dists = {c: edis(vectors[c], center) for c in canon}
    radius = max(dists.values())
    order = sorted(canon, key=lambda c: (dists[c], c))[: min(tau, len(canon))]
    return center, radius, order, [dists[c] for c in order]


def threshold_of(members, vectors, tau):
    _, _, _, seed_d = cluster_stats(members, vectors, tau)
    return seed_d[0]


def single_pass_partition(ordered_concepts, vectors, threshold):
    """Partition concepts (already in processing order) into potential
    clusters: join the nearest cluster holding a member closer than the
    threshold (ties by creation order), else start a new cluster."""
    clusters: list[list[str]] = []
    for cid in ordered_concepts:
        best, best_d = None, None
        for i, members in enumerate(clusters):
            d = min(edis(vectors[cid], vectors[m]) for m in members)
            if d < threshold and (best_d is None or d < best_d):
                best, best_d = i, d
        if best is None:
            clusters.append([cid])
        else:
            clusters[best].append(cid)
    return clusters


# ---------------------------------------------------------------------------
# candidate generation
# ---------------------------------------------------------------------------


def score_eq(e, c_ij, members, vectors, dr=0.0):
    """Confidence score: direct cosine (scaled by 1-dr) plus cluster-mediated
    terms over lex-sorted members excluding the frontier concept."""
    s = cos(vectors[e], vectors[c_ij]) * (1.0 - dr)
    for m in sorted(members):
        if m == c_ij:
            continue
        s += cos(vectors[m], vectors[c_ij]) * cos(vectors[e], vectors[m])
    return s


def neighbors_of(triples, cid):
    out = [(r, t, "f") for h, r, t in triples if h == cid]
    out += [(r, h, "r") for h, r, t in triples if t == cid]
    # dedup like a triple store would
    out = sorted(set(out), key=lambda e: (e[0], e[1], e[2] == "r"))
    return out


def generate(mention_confidences, triples, raw_vectors, tau, max_waves=10,
             deletion_ratios=None):
    """Naive trace of the bounded expansion search.

    mention_confidences: dict course-concept -> extraction confidence.
    Returns dict with 'candidates' (final ranked list), 'admissions' log,
    'partition', and per-admission cluster snapshots for invariant checks.
    """
    vectors = {cid: unit(v) for cid, v in raw_vectors.items()}
    dr = deletion_ratios or {}
    m_ids = sorted(mention_confidences, key=lambda c: (-mention_confidences[c], c))

    h0 = list(m_ids)
    init_threshold = threshold_of(h0, vectors, tau)
    partition = single_pass_partition(m_ids, vectors, init_threshold)

    clusters = {}  # id -> {"members": [...], "separated": bool}
    concept_cluster = {}
    for i, members in enumerate(partition, start=1):
        clusters[i] = {"members": list(members), "separated": False}
        for m in members:
            concept_cluster[m] = i

    admissions = []
    candidates = {}

    def separate(ci):
        clusters[ci]["separated"] = True
        for m in clusters[ci]["members"]:
            h0.remove(m)

    # clusters already at tau separate before the first wave
    for ci in sorted(clusters):
        if len(clusters[ci]["members"]) >= tau and not clusters[ci]["separated"]:
            separate(ci)

    frontier = [
        {"id": c, "score": mention_confidences[c], "cluster": concept_cluster[c],
         "path": [c], "dirs": [], "root": c}
        for c in m_ids
    ]
    skipped_unembedded = 0
    truncated = False
    wave = 0
    while frontier:
        wave += 1
        if wave > max_waves:
            truncated = True
            break
        new_wave = []
        for entry in sorted(frontier, key=lambda e: (-e["score"], e["id"])):
            ci = entry["cluster"]
            cinfo = clusters[ci]
            for rel, other, direction in neighbors_of(triples, entry["id"]):
                if other in mention_confidences or other in candidates:
                    continue
                if other not in vectors:
                    skipped_unembedded += 1
                    continue
                if cinfo["separated"]:
                    thr = threshold_of(cinfo["members"], vectors, tau)
                else:
                    thr = threshold_of(h0, vectors, tau) if h0 else 0.0
                d = edis(vectors[other], vectors[entry["id"]])
                if not d < thr:
                    continue
                s = score_eq(other, entry["id"], cinfo["members"], vectors,
                             dr.get(other, 0.0))
                cand = {
                    "id": other, "score": s, "wave": wave, "cluster": ci,
                    "path": entry["path"] + [rel, other],
                    "dirs": entry["dirs"] + [direction],
                    "root": entry["root"],
                }
                candidates[other] = cand
                new_wave.append(cand)
                cinfo["members"].append(other)
                if not cinfo["separated"]:
                    h0.append(other)
                    if len(cinfo["members"]) >= tau:
                        separate(ci)
                center, radius, seeds, seed_d = cluster_stats(
                    cinfo["members"], vectors, tau)
                admissions.append({
                    "id": other, "from": entry["id"], "cluster": ci,
                    "threshold": thr, "distance": d, "wave": wave,
                    "members_after": list(cinfo["members"]),
                    "center": center, "radius": radius, "seeds": seeds,
                })
        frontier = new_wave

    ranked = sorted(candidates.values(), key=lambda c: (-c["score"], c["id"]))
    return {
        "candidates": ranked,
        "admissions": admissions,
        "partition": partition,
        "skipped_unembedded": skipped_unembedded,
        "truncated": truncated,
    }


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def average_precision_brute(relevances):
    hits, total = 0, 0.0
    for i, rel in enumerate(relevances, start=1):
        if rel:
            hits += 1
            total += hits / i
    return total / hits if hits else 0.0


def pagerank_dense(n, edges, damping):
    """Fixed point x = (1-d)/n + d * A^T x solved with gaussian elimination.

    edges: undirected (i, j) pairs; A is the row-normalized adjacency.
    """
    adj = [[0.0] * n for _ in range(n)]
    for i, j in edges:
        adj[i][j] = 1.0
        adj[j][i] = 1.0
    for i in range(n):
        deg = sum(adj[i])
        if deg:
            adj[i] = [x / deg for x in adj[i]]
    # (I - d A^T) x = (1-d)/n * 1
    mat = [[(1.0 if i == j else 0.0) - damping * adj[j][i] for j in range(n)]
           for i in range(n)]
    rhs = [(1.0 - damping) / n] * n
    # gaussian elimination with partial pivoting
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(mat[r][col]))
        mat[col], mat[piv] = mat[piv], mat[col]
        rhs[col], rhs[piv] = rhs[piv], rhs[col]
        for r in range(col + 1, n):
            f = mat[r][col] / mat[col][col]
            for c in range(col, n):
                mat[r][c] -= f * mat[col][c]
            rhs[r] -= f * rhs[col]
    x = [0.0] * n
    for r in range(n - 1, -1, -1):
        x[r] = (rhs[r] - sum(mat[r][c] * x[c] for c in range(r + 1, n))) / mat[r][r]
    return x
