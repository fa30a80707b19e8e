"""Bounded candidate generation: single-pass initialization of potential
clusters followed by iterative wave-by-wave search of the knowledge base.

A candidate is admitted only while it stays inside the hypersphere boundary
of the cluster that reached it: strictly closer to the frontier concept than
the governing merge threshold. Separated clusters (size >= tau) use their own
threshold; smaller ones fall back to the root cluster H_0, which holds the
members of every not-yet-separated cluster and shrinks as clusters separate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .data import CourseConceptSet, EmbeddingStore, KnowledgeBase
from .errors import DomainError
from .geometry import ConceptCluster, build_cluster, edis, merge_threshold

H0_ID = 0


@dataclass(frozen=True)
class SearchPath:
    """Alternating concept/relation chain from a course concept to a
    candidate, with one direction flag per traversed edge."""

    elements: tuple[str, ...]
    directions: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.elements) % 2 == 0 or not self.elements:
            raise DomainError("search path must alternate concept/relation/concept")
        if len(self.directions) != (len(self.elements) - 1) // 2:
            raise DomainError("one direction flag per hop required")

    @property
    def root(self) -> str:
        return self.elements[0]

    @property
    def target(self) -> str:
        return self.elements[-1]

    def hops(self):
        """Yield (head, relation, tail, direction) per traversed edge."""
        for i, direction in enumerate(self.directions):
            yield (self.elements[2 * i], self.elements[2 * i + 1],
                   self.elements[2 * i + 2], direction)

    def extended(self, relation: str, concept: str, direction: str) -> "SearchPath":
        return SearchPath(self.elements + (relation, concept),
                          self.directions + (direction,))

    def validate(self, kb: KnowledgeBase) -> bool:
        """Every hop must be a stored triple, honoring its direction flag."""
        for head, rel, tail, direction in self.hops():
            h, t = (head, tail) if direction == "f" else (tail, head)
            if (rel, t) not in kb.adjacency.get(h, []):
                return False
        return True


@dataclass
class Candidate:
    concept_id: str
    score: float
    path: SearchPath
    cluster_id: int
    root: str
    wave: int


@dataclass
class ClusterConfig:
    tau: int = 8
    init_threshold_mode: str = "derived-from-h0"  # or "fixed"
    init_threshold: float | None = None

    def __post_init__(self):
        if self.tau < 1:
            raise DomainError("tau must be >= 1")
        if self.init_threshold_mode not in ("derived-from-h0", "fixed"):
            raise DomainError(f"unknown init_threshold_mode {self.init_threshold_mode!r}")
        if self.init_threshold_mode == "fixed" and self.init_threshold is None:
            raise DomainError("fixed init_threshold_mode requires init_threshold")


@dataclass
class GenerationConfig:
    tau: int = 8
    max_waves: int = 10
    score_variant: str = "eq1"  # "eq3" once feedback exists
    include_root_in_sum: bool = False
    use_index: bool = True
    cluster: ClusterConfig = field(default_factory=ClusterConfig)

    def __post_init__(self):
        if self.max_waves < 1:
            raise DomainError("max_waves must be >= 1")
        if self.score_variant not in ("eq1", "eq3"):
            raise DomainError(f"unknown score_variant {self.score_variant!r}")
        self.cluster.tau = self.tau


@dataclass
class AdmissionRecord:
    """One log row per admitted candidate, enough to re-check the boundary
    and cluster invariants after the fact."""

    concept_id: str
    from_id: str
    cluster_id: int
    wave: int
    distance: float
    threshold: float
    members_after: list[str]
    h0_members_after: list[str]


@dataclass
class GenerationResult:
    candidates: list[Candidate]
    partition: list[list[str]]
    clusters: dict[int, ConceptCluster]
    h0: ConceptCluster | None
    admissions: list[AdmissionRecord]
    skipped_unembedded: int
    truncated: bool


def score_candidate(e: str, c_ij: str, members, store: EmbeddingStore,
                    variant: str = "eq1", dr: float = 0.0,
                    include_root_in_sum: bool = False) -> float:
    """Confidence score of candidate ``e`` reached from frontier concept
    ``c_ij`` whose cluster holds ``members`` (membership at admission time).

    eq1: cos(e, c_ij) + sum over other members m of cos(m, c_ij) * cos(e, m).
    eq3: the direct term additionally scaled by (1 - dr).
    The frontier concept is excluded from the sum unless
    ``include_root_in_sum`` is set.
    """
    e_v = store.vector(e)
    c_v = store.vector(c_ij)
    direct = float(np.dot(e_v, c_v))
    if variant == "eq3":
        direct *= 1.0 - dr
    others = sorted(m for m in members if include_root_in_sum or m != c_ij)
    if not others:
        return direct
    mat = store.matrix(others)
    mediated = float(np.dot(kernels.dot_products(mat, c_v),
                            kernels.dot_products(mat, e_v)))
    return direct + mediated


class ClusterSet:
    """Mutable cluster state for one generation run."""

    def __init__(self, store: EmbeddingStore, tau: int, use_index: bool):
        self.store = store
        self.tau = tau
        self.use_index = use_index
        self.members: dict[int, list[str]] = {}
        self.h0_members: list[str] = []
        self.separated: set[int] = set()
        self.by_concept: dict[str, int] = {}
        self._stats: dict[int, ConceptCluster] = {}
        self._h0_stats: ConceptCluster | None = None

    def add_cluster(self, cluster_id: int, members: list[str]):
        self.members[cluster_id] = list(members)
        for m in members:
            self.by_concept[m] = cluster_id
        self._stats.pop(cluster_id, None)

    def stats(self, cluster_id: int) -> ConceptCluster:
        if cluster_id == H0_ID:
            if self._h0_stats is None:
                self._h0_stats = build_cluster(self.h0_members, self.store, self.tau,
                                               cluster_id=H0_ID, use_index=self.use_index)
            return self._h0_stats
        if cluster_id not in self._stats:
            self._stats[cluster_id] = build_cluster(
                self.members[cluster_id], self.store, self.tau,
                cluster_id=cluster_id, use_index=self.use_index)
        return self._stats[cluster_id]

    def governing_threshold(self, cluster_id: int) -> float:
        """Own threshold for separated clusters; H_0's for sub-tau ones.
        An empty H_0 yields 0.0, which admits nothing."""
        if cluster_id in self.separated:
            return merge_threshold(self.stats(cluster_id))
        if not self.h0_members:
            return 0.0
        return merge_threshold(self.stats(H0_ID))

    def admit(self, cluster_id: int, concept_id: str):
        self.members[cluster_id].append(concept_id)
        self.by_concept[concept_id] = cluster_id
        self._stats.pop(cluster_id, None)
        if cluster_id not in self.separated:
            self.h0_members.append(concept_id)
            self._h0_stats = None
            if len(self.members[cluster_id]) >= self.tau:
                self.separate(cluster_id)

    def separate(self, cluster_id: int):
        self.separated.add(cluster_id)
        gone = set(self.members[cluster_id])
        self.h0_members = [m for m in self.h0_members if m not in gone]
        self._h0_stats = None


@dataclass
class _FrontierEntry:
    concept_id: str
    sort_score: float
    cluster_id: int
    path: SearchPath
    root: str


def initialize_clusters(concepts: CourseConceptSet, store: EmbeddingStore,
                        config: GenerationConfig):
    """Partition the course concepts into potential clusters with a single
    pass in descending extraction-confidence order.

    Returns (h0, potentials, cluster_set): H_0 over all of M, the potential
    clusters H_1..H_L, and the mutable state the search phase continues with.
    A concept joins the nearest existing cluster holding a member strictly
    closer than the initialization threshold (ties by creation order), else
    it seeds a new cluster.
    """
    if len(concepts) == 0:
        raise DomainError("course concept set is empty")
    missing = [cid for cid in concepts.ids if cid not in store]
    if missing:
        raise DomainError(f"course concepts lack embeddings: {missing}")

    cs = ClusterSet(store, config.tau, config.use_index)
    cs.h0_members = list(concepts.ids)
    h0 = cs.stats(H0_ID)
    if config.cluster.init_threshold_mode == "fixed":
        threshold = float(config.cluster.init_threshold)
    else:
        threshold = merge_threshold(h0)

    partition: list[list[str]] = []
    for cid in concepts.ids:  # already ordered by (-confidence, id)
        vec = store.vector(cid)
        best, best_d = None, None
        for i, members in enumerate(partition):
            d = min(edis(vec, store.vector(m)) for m in members)
            if d < threshold and (best_d is None or d < best_d):
                best, best_d = i, d
        if best is None:
            partition.append([cid])
        else:
            partition[best].append(cid)

    for i, members in enumerate(partition, start=1):
        cs.add_cluster(i, members)
    potentials = [cs.stats(i) for i in range(1, len(partition) + 1)]
    return h0, potentials, cs


def expansion_step(frontier: list[_FrontierEntry], cs: ClusterSet,
                   kb: KnowledgeBase, store: EmbeddingStore,
                   config: GenerationConfig, candidates: dict[str, Candidate],
                   course_concepts: set[str], wave: int,
                   deletion_ratios=None, admissions=None) -> tuple[list, int]:
    """Run one search wave over ``frontier`` and return (new_entries,
    skipped_unembedded). Admissions mutate the cluster state and the shared
    candidate map."""
    deletion_ratios = deletion_ratios or {}
    new_entries: list[_FrontierEntry] = []
    skipped = 0
    for entry in sorted(frontier, key=lambda e: (-e.sort_score, e.concept_id)):
        ci = entry.cluster_id
        for rel, other, direction in kb.neighbors(entry.concept_id):
            if other in course_concepts or other in candidates:
                continue
            if other not in store:
                skipped += 1
                continue
            threshold = cs.governing_threshold(ci)
            d = edis(store.vector(other), store.vector(entry.concept_id))
            if not d < threshold:
                continue
            dr = deletion_ratios.get(other, 0.0)
            score = score_candidate(other, entry.concept_id, cs.members[ci], store,
                                    variant=config.score_variant, dr=dr,
                                    include_root_in_sum=config.include_root_in_sum)
            path = entry.path.extended(rel, other, direction)
            cand = Candidate(concept_id=other, score=score, path=path,
                             cluster_id=ci, root=entry.root, wave=wave)
            candidates[other] = cand
            cs.admit(ci, other)
            if admissions is not None:
                admissions.append(AdmissionRecord(
                    concept_id=other, from_id=entry.concept_id, cluster_id=ci,
                    wave=wave, distance=d, threshold=threshold,
                    members_after=list(cs.members[ci]),
                    h0_members_after=list(cs.h0_members)))
            new_entries.append(_FrontierEntry(
                concept_id=other, sort_score=score, cluster_id=ci,
                path=path, root=entry.root))
    return new_entries, skipped


def run_generation(concepts: CourseConceptSet, kb: KnowledgeBase,
                   store: EmbeddingStore, config: GenerationConfig,
                   deletion_ratios=None) -> GenerationResult:
    """Full candidate generation: initialize clusters, then search wave by
    wave until a wave admits nothing (or max_waves truncates the run).
    Deterministic given identical inputs."""
    _, _, cs = initialize_clusters(concepts, store, config)
    partition = [list(cs.members[i]) for i in sorted(cs.members)]

    # clusters already big enough get their own parameters before the search
    for ci in sorted(cs.members):
        if len(cs.members[ci]) >= config.tau and ci not in cs.separated:
            cs.separate(ci)

    course_ids = set(concepts.ids)
    frontier = [
        _FrontierEntry(concept_id=cid, sort_score=conf,
                       cluster_id=cs.by_concept[cid],
                       path=SearchPath((cid,)), root=cid)
        for cid, conf in concepts
    ]
    candidates: dict[str, Candidate] = {}
    admissions: list[AdmissionRecord] = []
    skipped = 0
    truncated = False
    wave = 0
    while frontier:
        wave += 1
        if wave > config.max_waves:
            truncated = True
            break
        frontier, wave_skipped = expansion_step(
            frontier, cs, kb, store, config, candidates, course_ids, wave,
            deletion_ratios=deletion_ratios, admissions=admissions)
        skipped += wave_skipped

    ranked = sorted(candidates.values(), key=lambda c: (-c.score, c.concept_id))
    return GenerationResult(
        candidates=ranked,
        partition=partition,
        clusters={ci: cs.stats(ci) for ci in sorted(cs.members)},
        h0=cs.stats(H0_ID) if cs.h0_members else None,
        admissions=admissions,
        skipped_unembedded=skipped,
        truncated=truncated,
    )


# ---------------------------------------------------------------------------
# candidate list export / import
# ---------------------------------------------------------------------------


def candidate_to_dict(c: Candidate) -> dict:
    return {
        "id": c.concept_id,
        "score": c.score,
        "wave": c.wave,
        "cluster": c.cluster_id,
        "root": c.root,
        "path": list(c.path.elements),
        "dirs": list(c.path.directions),
    }


def candidate_from_dict(obj: dict) -> Candidate:
    return Candidate(
        concept_id=obj["id"],
        score=float(obj["score"]),
        path=SearchPath(tuple(obj["path"]), tuple(obj.get("dirs", ()))),
        cluster_id=int(obj["cluster"]),
        root=obj["root"],
        wave=int(obj["wave"]),
    )


def save_candidates(candidates: list[Candidate], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for c in candidates:
            fh.write(json.dumps(candidate_to_dict(c)) + "\n")


def load_candidates(path) -> list[Candidate]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(candidate_from_dict(json.loads(line)))
    return out
