"""Hybrid retrieval: BM25 lexical ranking fused with vector similarity.

The two top-k lists are merged into one candidate set; BM25 scores are
max-normalized over that set, vector distances become similarities via
1/(1+distance), and the final ranking sorts by the weighted combination
lambda * bm25_norm + (1 - lambda) * similarity.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

from .embed import EmbeddingProvider, embed_texts
from .textprep import lemmatize, tokenize
from .vecstore import VectorStore

DEFAULT_K1 = 1.5
DEFAULT_B = 0.75
DEFAULT_FANIN = 10
DEFAULT_LAMBDA = 0.5


def index_tokens(text: str) -> list[str]:
    """Tokenization used on both the index and query sides of BM25."""
    return [lemmatize(tok) for tok in tokenize(text)]


class Bm25Index:
    """Okapi BM25 statistics over a fixed document set.

    Immutable once built; rebuild and swap to change the corpus.
    """

    def __init__(self, k1: float = DEFAULT_K1, b: float = DEFAULT_B):
        self.k1 = k1
        self.b = b
        self.n_docs = 0
        self.avgdl = 0.0
        self.doc_len: dict[str, int] = {}
        self.term_freqs: dict[str, Counter] = {}
        self.df: Counter = Counter()
        self.postings: dict[str, set[str]] = {}

    @classmethod
    def build(cls, docs: Sequence[tuple[str, str]], k1: float = DEFAULT_K1, b: float = DEFAULT_B) -> "Bm25Index":
        if not docs:
            raise ValueError("cannot build an index over zero documents")
        index = cls(k1=k1, b=b)
        for doc_id, text in docs:
            terms = index_tokens(text)
            index.doc_len[doc_id] = len(terms)
            freqs = Counter(terms)
            index.term_freqs[doc_id] = freqs
            for term in freqs:
                index.df[term] += 1
                index.postings.setdefault(term, set()).add(doc_id)
        index.n_docs = len(index.doc_len)
        index.avgdl = sum(index.doc_len.values()) / index.n_docs
        return index

    def idf(self, term: str) -> float:
        df = self.df.get(term, 0)
        return math.log((self.n_docs - df + 0.5) / (df + 0.5) + 1.0)

    def score(self, doc_id: str, query_terms: Sequence[str]) -> float:
        """Sum over query tokens (with multiplicity) of the Okapi term score."""
        freqs = self.term_freqs.get(doc_id)
        if not freqs:
            return 0.0
        dl = self.doc_len[doc_id]
        total = 0.0
        for term in query_terms:
            f = freqs.get(term, 0)
            if f == 0:
                continue
            denom = f + self.k1 * (1.0 - self.b + self.b * dl / self.avgdl)
            total += self.idf(term) * f * (self.k1 + 1.0) / denom
        return total

    def topk(self, query: str, k: int = DEFAULT_FANIN) -> list[tuple[str, float]]:
        """Top-k (id, raw score) pairs, descending; zero-score docs excluded."""
        if k < 1:
            raise ValueError("k must be at least 1")
        terms = index_tokens(query)
        candidates: set[str] = set()
        for term in set(terms):
            candidates.update(self.postings.get(term, ()))
        scored = [(doc_id, self.score(doc_id, terms)) for doc_id in candidates]
        scored = [(doc_id, s) for doc_id, s in scored if s > 0.0]
        scored.sort(key=lambda pair: (-pair[1], pair[0]))
        return scored[:k]


@dataclass
class CandidateScores:
    bm25_raw: float = 0.0
    distance: float | None = None


@dataclass
class ScoredDoc:
    id: str
    document: str
    bm25_raw: float
    bm25_norm: float
    distance: float | None
    similarity: float
    combined: float


def merge_candidates(
    bm25_top: Sequence[tuple[str, float]],
    vec_top: Sequence[tuple[str, float]],
) -> dict[str, CandidateScores]:
    """Union the lexical and vector top-k lists.

    Docs found only by the vector side get bm25_raw = 0; docs found only
    lexically keep no distance (their similarity contribution is 0).
    """
    merged: dict[str, CandidateScores] = {}
    for doc_id, raw in bm25_top:
        merged[doc_id] = CandidateScores(bm25_raw=raw)
    for doc_id, distance in vec_top:
        entry = merged.setdefault(doc_id, CandidateScores())
        entry.distance = distance
    return merged


def fuse(
    candidates: Mapping[str, CandidateScores],
    lam: float = DEFAULT_LAMBDA,
    documents: Mapping[str, str] | None = None,
) -> list[ScoredDoc]:
    """Score and rank a merged candidate set.

    bm25_norm divides by the candidate-set maximum (all zero -> all 0),
    similarity = 1/(1+distance), combined = lam*bm25_norm +
    (1-lam)*similarity. Sorted by combined descending, ties by id.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must be within [0, 1]")
    documents = documents or {}
    max_raw = max((c.bm25_raw for c in candidates.values()), default=0.0)
    scored = []
    for doc_id, cand in candidates.items():
        norm = cand.bm25_raw / max_raw if max_raw > 0.0 else 0.0
        similarity = 1.0 / (1.0 + cand.distance) if cand.distance is not None else 0.0
        combined = lam * norm + (1.0 - lam) * similarity
        scored.append(
            ScoredDoc(
                id=doc_id,
                document=documents.get(doc_id, ""),
                bm25_raw=cand.bm25_raw,
                bm25_norm=norm,
                distance=cand.distance,
                similarity=similarity,
                combined=combined,
            )
        )
    scored.sort(key=lambda d: (-d.combined, d.id))
    return scored


class HybridRetriever:
    """One-stop retrieve(): BM25 top-k and vector top-k, merged and fused."""

    def __init__(
        self,
        index: Bm25Index | None,
        store: VectorStore,
        provider: EmbeddingProvider,
        lam: float = DEFAULT_LAMBDA,
        bm25_fanin: int = DEFAULT_FANIN,
        vector_fanin: int = DEFAULT_FANIN,
    ):
        self.index = index
        self.store = store
        self.provider = provider
        self.lam = lam
        self.bm25_fanin = bm25_fanin
        self.vector_fanin = vector_fanin

    @classmethod
    def build(
        cls,
        store: VectorStore,
        provider: EmbeddingProvider,
        lam: float = DEFAULT_LAMBDA,
        k1: float = DEFAULT_K1,
        b: float = DEFAULT_B,
        bm25_fanin: int = DEFAULT_FANIN,
        vector_fanin: int = DEFAULT_FANIN,
    ) -> "HybridRetriever":
        docs = [(rec.id, rec.document) for rec in store.records()]
        index = Bm25Index.build(docs, k1=k1, b=b) if docs else None
        return cls(index, store, provider, lam=lam, bm25_fanin=bm25_fanin, vector_fanin=vector_fanin)

    def retrieve(self, query: str, k: int, lam: float | None = None) -> list[ScoredDoc]:
        if k < 1:
            raise ValueError("k must be at least 1")
        if self.index is None or len(self.store) == 0:
            return []
        bm25_top = self.index.topk(query, self.bm25_fanin)
        query_vec = embed_texts(self.provider, [query])[0]
        vec_top = self.store.query(query_vec, self.vector_fanin)
        candidates = merge_candidates(bm25_top, vec_top)
        documents = {
            doc_id: (self.store.get(doc_id).document if self.store.get(doc_id) else "")
            for doc_id in candidates
        }
        effective_lam = self.lam if lam is None else lam
        return fuse(candidates, lam=effective_lam, documents=documents)[:k]
