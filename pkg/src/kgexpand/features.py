"""Heterogeneous candidate features: confidence score, search-path encoding
from a sequence autoencoder, prerequisite aggregate, and deletion ratio.

The path encoder is a single-layer GRU encoder-decoder trained to reproduce
its input sequence (teacher-forced decoder, cross-entropy, plain SGD). The
fixed-length path code is the encoder's final hidden state. Token embeddings
are initialized from the concept embedding store where available and stay
frozen; only the recurrent and output parameters train, and their analytic
gradients are exposed for finite-difference checking.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Course, CourseConceptSet, EmbeddingStore
from .errors import DomainError
from .expansion import Candidate, SearchPath
from .geometry import cosine

BOS = "<bos>"
EOS = "<eos>"
UNK = "<unk>"

CHECKPOINT_VERSION = 1
LEARNING_RATE = 0.1


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class PathEncoder:
    """GRU autoencoder over search-path token sequences."""

    TRAINED = ("enc_Wz", "enc_Wr", "enc_Wh", "enc_Uz", "enc_Ur", "enc_Uh",
               "enc_bz", "enc_br", "enc_bh",
               "dec_Wz", "dec_Wr", "dec_Wh", "dec_Uz", "dec_Ur", "dec_Uh",
               "dec_bz", "dec_br", "dec_bh", "out_W", "out_b")

    def __init__(self, vocab: list[str], hidden_size: int, embeddings: np.ndarray,
                 seed: int = 0):
        if UNK not in vocab or BOS not in vocab or EOS not in vocab:
            raise DomainError("vocabulary must include the special tokens")
        self.vocab = list(vocab)
        self.token_ids = {t: i for i, t in enumerate(self.vocab)}
        self.hidden_size = hidden_size
        self.embed_size = embeddings.shape[1]
        self.embeddings = embeddings  # frozen
        self.epoch = 0
        self.loss_history: list[float] = []
        self.token_accuracy = 0.0
        rng = np.random.default_rng(seed)
        d_h, d_e, v = hidden_size, self.embed_size, len(self.vocab)
        self.params: dict[str, np.ndarray] = {}
        for prefix in ("enc", "dec"):
            for gate in ("z", "r", "h"):
                self.params[f"{prefix}_W{gate}"] = rng.uniform(-0.1, 0.1, (d_h, d_e))
                self.params[f"{prefix}_U{gate}"] = rng.uniform(-0.1, 0.1, (d_h, d_h))
                self.params[f"{prefix}_b{gate}"] = np.zeros(d_h)
        self.params["out_W"] = rng.uniform(-0.1, 0.1, (v, d_h))
        self.params["out_b"] = np.zeros(v)

    # -- token plumbing ----------------------------------------------------

    def token_id(self, token: str) -> int:
        return self.token_ids.get(token, self.token_ids[UNK])

    def _tokens_of(self, path) -> list[str]:
        if isinstance(path, SearchPath):
            return list(path.elements)
        return list(path)

    # -- forward -----------------------------------------------------------

    def _gru_step(self, prefix: str, x, h_prev):
        p = self.params
        a_z = p[f"{prefix}_Wz"] @ x + p[f"{prefix}_Uz"] @ h_prev + p[f"{prefix}_bz"]
        a_r = p[f"{prefix}_Wr"] @ x + p[f"{prefix}_Ur"] @ h_prev + p[f"{prefix}_br"]
        z = _sigmoid(a_z)
        r = _sigmoid(a_r)
        a_c = p[f"{prefix}_Wh"] @ x + p[f"{prefix}_Uh"] @ (r * h_prev) + p[f"{prefix}_bh"]
        c = np.tanh(a_c)
        h = (1.0 - z) * h_prev + z * c
        return h, (x, h_prev, z, r, c)

    def _gru_backward(self, prefix: str, cache, dh, grads):
        p = self.params
        x, h_prev, z, r, c = cache
        dz = dh * (c - h_prev)
        dc = dh * z
        dh_prev = dh * (1.0 - z)
        da_c = dc * (1.0 - c * c)
        grads[f"{prefix}_Wh"] += np.outer(da_c, x)
        grads[f"{prefix}_Uh"] += np.outer(da_c, r * h_prev)
        grads[f"{prefix}_bh"] += da_c
        drh = p[f"{prefix}_Uh"].T @ da_c
        dr = drh * h_prev
        dh_prev += drh * r
        da_r = dr * r * (1.0 - r)
        grads[f"{prefix}_Wr"] += np.outer(da_r, x)
        grads[f"{prefix}_Ur"] += np.outer(da_r, h_prev)
        grads[f"{prefix}_br"] += da_r
        dh_prev += p[f"{prefix}_Ur"].T @ da_r
        da_z = dz * z * (1.0 - z)
        grads[f"{prefix}_Wz"] += np.outer(da_z, x)
        grads[f"{prefix}_Uz"] += np.outer(da_z, h_prev)
        grads[f"{prefix}_bz"] += da_z
        dh_prev += p[f"{prefix}_Uz"].T @ da_z
        return dh_prev

    def encode(self, path) -> np.ndarray:
        """Fixed-length code: the encoder's final hidden state."""
        tokens = self._tokens_of(path)
        if not tokens:
            raise DomainError("cannot encode an empty path")
        h = np.zeros(self.hidden_size)
        for tok in tokens:
            x = self.embeddings[self.token_id(tok)]
            h, _ = self._gru_step("enc", x, h)
        return h

    def loss_and_grads(self, path):
        """Mean cross-entropy over the teacher-forced reconstruction of one
        path, with analytic gradients for every trained parameter. Also
        returns the number of correctly argmax-decoded tokens."""
        tokens = self._tokens_of(path)
        if not tokens:
            raise DomainError("cannot train on an empty path")
        token_idx = [self.token_id(t) for t in tokens]
        targets = token_idx + [self.token_ids[EOS]]
        dec_inputs = [self.token_ids[BOS]] + token_idx
        n_steps = len(targets)

        # encoder forward
        h = np.zeros(self.hidden_size)
        enc_caches = []
        for ti in token_idx:
            h, cache = self._gru_step("enc", self.embeddings[ti], h)
            enc_caches.append(cache)

        # decoder forward
        g = h
        dec_caches, probs = [], []
        loss = 0.0
        correct = 0
        for t in range(n_steps):
            g, cache = self._gru_step("dec", self.embeddings[dec_inputs[t]], g)
            dec_caches.append(cache)
            logits = self.params["out_W"] @ g + self.params["out_b"]
            logits -= logits.max()
            e = np.exp(logits)
            p = e / e.sum()
            probs.append(p)
            loss -= np.log(p[targets[t]])
            if int(np.argmax(logits)) == targets[t]:
                correct += 1
        loss /= n_steps

        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        dg = np.zeros(self.hidden_size)
        for t in range(n_steps - 1, -1, -1):
            dlogits = probs[t].copy()
            dlogits[targets[t]] -= 1.0
            dlogits /= n_steps
            _, g_prev, _, _, _ = dec_caches[t]
            g_t = (1.0 - dec_caches[t][2]) * g_prev + dec_caches[t][2] * dec_caches[t][4]
            grads["out_W"] += np.outer(dlogits, g_t)
            grads["out_b"] += dlogits
            dg += self.params["out_W"].T @ dlogits
            dg = self._gru_backward("dec", dec_caches[t], dg, grads)
        # decoder initial state is the encoder's final hidden state
        dh = dg
        for cache in reversed(enc_caches):
            dh = self._gru_backward("enc", cache, dh, grads)
        return float(loss), grads, correct, n_steps

    def train_epoch(self, paths, learning_rate: float = LEARNING_RATE):
        total_loss = 0.0
        correct = 0
        steps = 0
        for path in paths:
            loss, grads, c, n = self.loss_and_grads(path)
            total_loss += loss
            correct += c
            steps += n
            for name in self.TRAINED:
                self.params[name] -= learning_rate * grads[name]
        self.epoch += 1
        mean_loss = total_loss / len(paths)
        self.loss_history.append(mean_loss)
        self.token_accuracy = correct / steps
        return mean_loss

    def reconstruction_accuracy(self, paths) -> float:
        """Teacher-forced argmax token accuracy over a path corpus."""
        correct = 0
        steps = 0
        for path in paths:
            _, _, c, n = self.loss_and_grads(path)
            correct += c
            steps += n
        return correct / steps


def build_vocabulary(paths) -> list[str]:
    tokens: set[str] = set()
    for path in paths:
        elements = path.elements if isinstance(path, SearchPath) else path
        tokens.update(elements)
    return [BOS, EOS, UNK] + sorted(tokens)


def _init_embeddings(vocab, store: EmbeddingStore | None, embed_size: int,
                     seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed + 1)
    if store is not None:
        embed_size = store.dimension
    emb = rng.uniform(-0.1, 0.1, (len(vocab), embed_size))
    if store is not None:
        for i, tok in enumerate(vocab):
            if tok in store:
                emb[i] = store.vector(tok)
    return emb


def train_encoder(paths, hidden_size: int = 32, epochs: int = 200, seed: int = 0,
                  store: EmbeddingStore | None = None, embed_size: int = 16,
                  learning_rate: float = LEARNING_RATE) -> PathEncoder:
    """Train the autoencoder to reconstruct the given path corpus.

    Deterministic for a fixed seed: parameter init is seeded and paths are
    visited in corpus order every epoch.
    """
    paths = list(paths)
    if not paths:
        raise DomainError("path corpus is empty")
    vocab = build_vocabulary(paths)
    emb = _init_embeddings(vocab, store, embed_size, seed)
    encoder = PathEncoder(vocab, hidden_size, emb, seed=seed)
    for _ in range(epochs):
        encoder.train_epoch(paths, learning_rate)
    return encoder


def encode_path(encoder: PathEncoder, path) -> np.ndarray:
    return encoder.encode(path)


def save_encoder(encoder: PathEncoder, path) -> None:
    payload = {
        "version": CHECKPOINT_VERSION,
        "vocab": encoder.vocab,
        "hidden_size": encoder.hidden_size,
        "embed_size": encoder.embed_size,
        "epoch": encoder.epoch,
        "token_accuracy": encoder.token_accuracy,
        "loss_history": encoder.loss_history,
        "embeddings": encoder.embeddings.tolist(),
        "params": {k: v.tolist() for k, v in encoder.params.items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_encoder(path) -> PathEncoder:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise DomainError(f"unsupported encoder checkpoint version: {payload.get('version')}")
    encoder = PathEncoder(payload["vocab"], payload["hidden_size"],
                          np.array(payload["embeddings"]))
    encoder.params = {k: np.array(v) for k, v in payload["params"].items()}
    encoder.epoch = payload["epoch"]
    encoder.token_accuracy = payload["token_accuracy"]
    encoder.loss_history = list(payload["loss_history"])
    return encoder


# ---------------------------------------------------------------------------
# prerequisite features
# ---------------------------------------------------------------------------


class DefaultPrerequisiteScorer:
    """Text-only prerequisite likelihood over course concepts.

    Pv(a, b) = 0.5 * max(0, cos(a, b)) + 0.5 * precedence(b before a), where
    the precedence term is the fraction of videos mentioning b that precede
    the first video mentioning a (0 when either is never mentioned).
    Pv(c, c) = 0 by convention. Values cached per pair.
    """

    def __init__(self, store: EmbeddingStore, course: Course | None = None):
        self.store = store
        self._first_mention: dict[str, int] = {}
        self._mentions: dict[str, list[int]] = {}
        if course is not None:
            for video in course.videos:
                for cid in video.mentioned_concepts:
                    self._mentions.setdefault(cid, []).append(video.position)
                    if cid not in self._first_mention:
                        self._first_mention[cid] = video.position
        self._cache: dict[tuple[str, str], float] = {}

    def pv(self, a: str, b: str) -> float:
        if a == b:
            return 0.0
        key = (a, b)
        if key in self._cache:
            return self._cache[key]
        if a in self.store and b in self.store:
            sim = max(0.0, cosine(self.store.vector(a), self.store.vector(b)))
        else:
            sim = 0.0
        first_a = self._first_mention.get(a)
        b_positions = self._mentions.get(b, [])
        if first_a is None or not b_positions:
            precedence = 0.0
        else:
            precedence = sum(1 for p in b_positions if p < first_a) / len(b_positions)
        value = 0.5 * sim + 0.5 * precedence
        self._cache[key] = value
        return value


def prereq_feature(candidate: Candidate, concepts: CourseConceptSet,
                   store: EmbeddingStore, scorer) -> float:
    """Pv aggregated over the course, anchored at the candidate's search root:
    cos(e, root) * sum over M of Pv(root, c_j), divided by |M|."""
    if not candidate.root:
        raise DomainError(f"candidate {candidate.concept_id!r} has no search root")
    sim = cosine(store.vector(candidate.concept_id), store.vector(candidate.root))
    total = sum(scorer.pv(candidate.root, cj) for cj in concepts.ids)
    return sim * total / len(concepts)


# ---------------------------------------------------------------------------
# feature assembly
# ---------------------------------------------------------------------------

FEATURE_BLOCKS = ("s_e", "Pe", "Pf", "Dr")


@dataclass
class FeatureMatrix:
    """Row-per-candidate feature matrix: [s_e, path code..., Pf, Dr]."""

    ids: list[str]
    matrix: np.ndarray
    hidden_size: int
    errors: dict[str, str] = field(default_factory=dict)

    @property
    def width(self) -> int:
        return 3 + self.hidden_size

    def columns_for(self, block: str) -> list[int]:
        if block == "s_e":
            return [0]
        if block == "Pe":
            return list(range(1, 1 + self.hidden_size))
        if block == "Pf":
            return [1 + self.hidden_size]
        if block == "Dr":
            return [2 + self.hidden_size]
        raise DomainError(f"unknown feature block {block!r}")

    def header(self) -> list[str]:
        return (["id", "s_e"] + [f"pe_{i}" for i in range(self.hidden_size)]
                + ["pf", "dr"])

    def save_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.header())
            for cid, row in zip(self.ids, self.matrix):
                writer.writerow([cid] + [repr(x) for x in row])

    @classmethod
    def load_csv(cls, path) -> "FeatureMatrix":
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            hidden = len(header) - 4
            ids, rows = [], []
            for record in reader:
                ids.append(record[0])
                rows.append([float(x) for x in record[1:]])
        matrix = np.array(rows, dtype=np.float64).reshape(len(ids), 3 + hidden)
        return cls(ids=ids, matrix=matrix, hidden_size=hidden)


def assemble_features(candidates: list[Candidate], encoder: PathEncoder,
                      concepts: CourseConceptSet, store: EmbeddingStore,
                      scorer, deletion_ratios=None) -> FeatureMatrix:
    """Assemble the width-(3 + d_h) matrix for a candidate list.

    A failing candidate becomes an error entry and the batch continues; its
    row is dropped. The deletion ratio column is 0 everywhere when no
    feedback is supplied.
    """
    deletion_ratios = deletion_ratios or {}
    ids, rows, errors = [], [], {}
    for cand in candidates:
        try:
            code = encoder.encode(cand.path)
            pf = prereq_feature(cand, concepts, store, scorer)
            dr = deletion_ratios.get(cand.concept_id, 0.0)
            row = np.concatenate(([cand.score], code, [pf], [dr]))
            if not np.all(np.isfinite(row)):
                raise DomainError("non-finite feature value")
        except Exception as exc:  # per-candidate isolation
            errors[cand.concept_id] = str(exc)
            continue
        ids.append(cand.concept_id)
        rows.append(row)
    matrix = (np.stack(rows) if rows
              else np.empty((0, 3 + encoder.hidden_size)))
    return FeatureMatrix(ids=ids, matrix=matrix, hidden_size=encoder.hidden_size,
                         errors=errors)
