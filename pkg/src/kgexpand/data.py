"""Ingestion of the three external inputs: course corpus, KB triples, embeddings.

Loaders are single-threaded; the loaded stores are immutable afterwards and
safe to share read-only across threads.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from .errors import DomainError, MissingEmbeddingError, ParseError

log = logging.getLogger(__name__)

MISS_WARNING_RATIO = 0.2


@dataclass(frozen=True)
class Video:
    video_id: str
    position: int
    mentioned_concepts: tuple[str, ...] = ()

    def __post_init__(self):
        if self.position < 0:
            raise DomainError(f"video {self.video_id!r}: position must be >= 0")


@dataclass(frozen=True)
class Course:
    course_id: str
    title: str
    videos: tuple[Video, ...]

    def __post_init__(self):
        if not self.videos:
            raise DomainError(f"course {self.course_id!r} has no videos")
        ids = [v.video_id for v in self.videos]
        if len(set(ids)) != len(ids):
            raise DomainError(f"course {self.course_id!r} has duplicate video ids")
        positions = [v.position for v in self.videos]
        if any(b <= a for a, b in zip(positions, positions[1:])):
            raise DomainError(
                f"course {self.course_id!r}: video positions must be strictly increasing"
            )


class CourseConceptSet:
    """Course concepts with extraction confidences, ordered by confidence
    descending (ties by concept id)."""

    def __init__(self, entries: Iterable[tuple[str, float]]):
        entries = list(entries)
        ids = [cid for cid, _ in entries]
        if len(set(ids)) != len(ids):
            raise DomainError("duplicate concept ids in course concept set")
        for cid, conf in entries:
            if not 0.0 <= conf <= 1.0:
                raise DomainError(f"confidence for {cid!r} outside [0, 1]: {conf}")
        self.entries = sorted(entries, key=lambda e: (-e[1], e[0]))

    @property
    def ids(self) -> list[str]:
        return [cid for cid, _ in self.entries]

    def confidence(self, concept_id: str) -> float:
        for cid, conf in self.entries:
            if cid == concept_id:
                return conf
        raise KeyError(concept_id)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, concept_id: str) -> bool:
        return any(cid == concept_id for cid, _ in self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __eq__(self, other):
        return isinstance(other, CourseConceptSet) and self.entries == other.entries


class Triple(NamedTuple):
    head: str
    relation: str
    tail: str


# direction flags for traversed edges
FORWARD = "f"
REVERSE = "r"


class KnowledgeBase:
    """Directed multigraph of concepts and typed relations stored as triples.

    Adjacency stores outgoing edges; a separate reverse index stores incoming
    ones. Neighbour discovery uses the union of both, and the traversed
    direction is reported so search paths can record it.
    """

    def __init__(self, triples: Iterable[Triple]):
        seen: set[Triple] = set()
        self.adjacency: dict[str, list[tuple[str, str]]] = {}
        self.reverse: dict[str, list[tuple[str, str]]] = {}
        self.concepts: set[str] = set()
        self.relations: set[str] = set()
        for t in triples:
            if not (t.head and t.relation and t.tail):
                raise DomainError(f"triple with empty field: {t}")
            if t in seen:
                continue
            seen.add(t)
            self.adjacency.setdefault(t.head, []).append((t.relation, t.tail))
            self.reverse.setdefault(t.tail, []).append((t.relation, t.head))
            self.concepts.update((t.head, t.tail))
            self.relations.add(t.relation)
        for edges in self.adjacency.values():
            edges.sort()
        for edges in self.reverse.values():
            edges.sort()

    def __len__(self) -> int:
        return len(self.concepts)

    def triples(self) -> list[Triple]:
        out = [
            Triple(head, rel, tail)
            for head, edges in self.adjacency.items()
            for rel, tail in edges
        ]
        out.sort()
        return out

    def neighbors(self, concept_id: str) -> list[tuple[str, str, str]]:
        """Directly-connected concepts as (relation, other, direction),
        sorted by (relation, other) with forward edges before reverse."""
        out = [(rel, other, FORWARD) for rel, other in self.adjacency.get(concept_id, [])]
        out += [(rel, other, REVERSE) for rel, other in self.reverse.get(concept_id, [])]
        out.sort(key=lambda e: (e[0], e[1], e[2] == REVERSE))
        return out

    def has_edge(self, a: str, relation: str, b: str) -> bool:
        """True when (a, relation, b) or (b, relation, a) is a stored triple."""
        return (relation, b) in self.adjacency.get(a, []) or (
            relation, a
        ) in self.adjacency.get(b, [])

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for t in self.triples():
                fh.write(f"{t.head}\t{t.relation}\t{t.tail}\n")


class EmbeddingStore:
    """Unit-normalized dense vectors per concept.

    Lookup of an unknown id raises :class:`MissingEmbeddingError`; it is never
    a silent zero vector.
    """

    def __init__(self, dimension: int, vectors: dict[str, np.ndarray]):
        if dimension < 1:
            raise DomainError("embedding dimension must be positive")
        self.dimension = dimension
        self._vectors: dict[str, np.ndarray] = {}
        for cid, vec in vectors.items():
            vec = np.asarray(vec, dtype=np.float64)
            if vec.shape != (dimension,):
                raise DomainError(f"vector for {cid!r} has shape {vec.shape}")
            norm = np.linalg.norm(vec)
            if norm == 0.0:
                raise DomainError(f"zero vector for {cid!r}")
            v = vec / norm
            v.setflags(write=False)
            self._vectors[cid] = v

    def __contains__(self, concept_id: str) -> bool:
        return concept_id in self._vectors

    def __len__(self) -> int:
        return len(self._vectors)

    def ids(self) -> list[str]:
        return sorted(self._vectors)

    def vector(self, concept_id: str) -> np.ndarray:
        try:
            return self._vectors[concept_id]
        except KeyError:
            raise MissingEmbeddingError(concept_id) from None

    def matrix(self, concept_ids: Iterable[str]) -> np.ndarray:
        return np.stack([self.vector(c) for c in concept_ids])


@dataclass
class CorpusLoadResult:
    courses: list[Course]
    concept_sets: dict[str, CourseConceptSet]
    dropped: dict[str, int] = field(default_factory=dict)

    @property
    def dropped_total(self) -> int:
        return sum(self.dropped.values())


def load_corpus(path, kb: KnowledgeBase) -> CorpusLoadResult:
    """Load the corpus JSON and keep only course concepts present in the KB.

    Concepts missing from the KB are dropped and counted per course; a course
    whose concept set empties out entirely is fatal.
    """
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid corpus JSON: {exc.msg}", path=path, line=exc.lineno) from exc

    if not isinstance(raw, dict) or "courses" not in raw:
        raise ParseError("corpus must be an object with a 'courses' array", path=path,
                         field="courses")

    courses: list[Course] = []
    concept_sets: dict[str, CourseConceptSet] = {}
    dropped: dict[str, int] = {}
    for ci, cobj in enumerate(raw["courses"]):
        try:
            videos = tuple(
                Video(
                    video_id=str(v["id"]),
                    position=int(v["position"]),
                    mentioned_concepts=tuple(str(c) for c in v.get("concepts", [])),
                )
                for v in cobj["videos"]
            )
            course = Course(course_id=str(cobj["id"]), title=str(cobj.get("title", "")),
                            videos=videos)
            entries = [(str(e["id"]), float(e["confidence"]))
                       for e in cobj["course_concepts"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed course entry #{ci}: {exc}", path=path,
                             field=f"courses[{ci}]") from exc
        kept = [(cid, conf) for cid, conf in entries if cid in kb.concepts]
        n_dropped = len(entries) - len(kept)
        if n_dropped:
            log.warning("course %s: dropped %d concepts missing from the KB",
                        course.course_id, n_dropped)
        if not kept:
            raise DomainError(
                f"course {course.course_id!r}: no course concepts remain after KB filtering"
            )
        courses.append(course)
        concept_sets[course.course_id] = CourseConceptSet(kept)
        dropped[course.course_id] = n_dropped
    return CorpusLoadResult(courses=courses, concept_sets=concept_sets, dropped=dropped)


def load_kb(path) -> KnowledgeBase:
    """Load triples from TSV (``head\\trelation\\ttail``) or JSONL."""
    path = Path(path)
    triples: list[Triple] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if line.lstrip().startswith("{"):
                try:
                    obj = json.loads(line)
                    t = Triple(str(obj["head"]), str(obj["relation"]), str(obj["tail"]))
                except (json.JSONDecodeError, KeyError) as exc:
                    raise ParseError(f"bad JSONL triple: {exc}", path=path, line=lineno) from exc
            else:
                parts = line.split("\t")
                if len(parts) != 3:
                    raise ParseError(
                        f"expected 3 tab-separated fields, got {len(parts)}",
                        path=path, line=lineno,
                    )
                t = Triple(*parts)
            if not (t.head and t.relation and t.tail):
                raise ParseError("triple with empty field", path=path, line=lineno)
            triples.append(t)
    return KnowledgeBase(triples)


def load_embeddings(path, vocabulary: Iterable[str]) -> tuple[EmbeddingStore, list[str]]:
    """Load a plain-text embedding file, keeping only ``vocabulary`` entries.

    Multi-word concept ids (space separated) are composed by averaging the
    vectors of their tokens that appear in the file, then renormalizing; a
    concept is a recorded miss only when none of its tokens are present.
    Returns the store plus the sorted miss list; a miss rate above 20% logs a
    warning naming the missing ids.
    """
    path = Path(path)
    vocabulary = sorted(set(vocabulary))
    needed: set[str] = set()
    for cid in vocabulary:
        needed.update(cid.split(" "))

    token_vectors: dict[str, np.ndarray] = {}
    dimension = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2 or not parts[0]:
                if not line.strip():
                    continue
                raise ParseError("expected 'token v1 ... vd'", path=path, line=lineno)
            token = parts[0]
            try:
                values = np.array([float(x) for x in parts[1:] if x != ""], dtype=np.float64)
            except ValueError as exc:
                raise ParseError(f"bad float: {exc}", path=path, line=lineno) from exc
            if dimension is None:
                dimension = values.shape[0]
            elif values.shape[0] != dimension:
                raise ParseError(
                    f"dimension mismatch: expected {dimension}, got {values.shape[0]}",
                    path=path, line=lineno,
                )
            if token in needed and token not in token_vectors:
                token_vectors[token] = values
    if dimension is None:
        raise ParseError("embedding file is empty", path=path)

    vectors: dict[str, np.ndarray] = {}
    misses: list[str] = []
    for cid in vocabulary:
        parts = [token_vectors[t] for t in cid.split(" ") if t in token_vectors]
        if not parts:
            misses.append(cid)
            continue
        mean = np.mean(parts, axis=0)
        if np.linalg.norm(mean) == 0.0:
            misses.append(cid)
            continue
        vectors[cid] = mean
    if vocabulary and len(misses) > MISS_WARNING_RATIO * len(vocabulary):
        log.warning("embedding misses exceed %d%% of vocabulary: %s",
                    int(MISS_WARNING_RATIO * 100), misses)
    return EmbeddingStore(dimension, vectors), misses
