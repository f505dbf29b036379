"""Reference implementations of BLEU, ROUGE-L, METEOR, and an
embedding-based token similarity score.

Each metric exposes its intermediate components (n-gram precisions, LCS
length, match/chunk counts, per-direction means) so tests and reports
can check the arithmetic, not just the final number.
"""
from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .embed import EmbeddingProvider, cosine
from .textprep import lemmatize, tokenize

TokenInput = str | Sequence[str]


def _tokens(value: TokenInput) -> list[str]:
    if isinstance(value, str):
        return tokenize(value)
    return list(value)


# -- BLEU ---------------------------------------------------------------------


@dataclass
class BleuComponents:
    precisions: list[float]
    weights: list[float]
    candidate_len: int
    reference_len: int
    brevity_penalty: float
    bleu: float


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(
    candidate: TokenInput,
    references: TokenInput | Sequence[TokenInput],
    max_n: int = 4,
    weights: Sequence[float] | None = None,
    smooth: bool = False,
) -> BleuComponents:
    """Corpus-standard sentence BLEU with per-reference clipping.

    Modified n-gram precision clips candidate counts at the maximum count
    over all references; the reference length is the one closest to the
    candidate length (ties to the shorter). Any zero precision makes the
    score 0 unless ``smooth`` adds one to numerator and denominator for
    orders above 1.
    """
    cand = _tokens(candidate)
    # a bare string is one reference; otherwise each element is a reference
    refs = [_tokens(references)] if isinstance(references, str) else [_tokens(r) for r in references]
    if not refs:
        raise ValueError("at least one reference is required")
    w = list(weights) if weights is not None else [1.0 / max_n] * max_n
    if len(w) != max_n:
        raise ValueError("need one weight per n-gram order")
    c = len(cand)
    r = min((abs(len(ref) - c), len(ref)) for ref in refs)[1]
    if c == 0:
        return BleuComponents([0.0] * max_n, w, 0, r, 0.0, 0.0)
    precisions = []
    for n in range(1, max_n + 1):
        cand_ngrams = _ngrams(cand, n)
        total = sum(cand_ngrams.values())
        clipped = 0
        if total:
            max_ref: Counter = Counter()
            for ref in refs:
                for gram, count in _ngrams(ref, n).items():
                    if count > max_ref[gram]:
                        max_ref[gram] = count
            clipped = sum(min(count, max_ref[gram]) for gram, count in cand_ngrams.items())
        if smooth and n > 1:
            precisions.append((clipped + 1) / (total + 1))
        else:
            precisions.append(clipped / total if total else 0.0)
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    if any(p == 0.0 for p in precisions):
        score = 0.0
    else:
        score = bp * math.exp(sum(wn * math.log(p) for wn, p in zip(w, precisions)))
    return BleuComponents(precisions, w, c, r, bp, score)


# -- ROUGE-L ------------------------------------------------------------------


@dataclass
class RougeLComponents:
    lcs: int
    precision: float
    recall: float
    beta: float
    f: float


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Longest common subsequence length, classic dynamic programming."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        current = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                current.append(prev[j - 1] + 1)
            else:
                current.append(max(prev[j], current[j - 1]))
        prev = current
    return prev[-1]


def rouge_l(candidate: TokenInput, reference: TokenInput, beta: float = 1.0) -> RougeLComponents:
    """LCS-based F score: P = LCS/|candidate|, R = LCS/|reference|."""
    cand = _tokens(candidate)
    ref = _tokens(reference)
    if not cand and not ref:
        return RougeLComponents(0, 1.0, 1.0, beta, 1.0)
    if not cand or not ref:
        return RougeLComponents(0, 0.0, 0.0, beta, 0.0)
    lcs = lcs_length(cand, ref)
    precision = lcs / len(cand)
    recall = lcs / len(ref)
    denom = recall + beta * beta * precision
    f = (1 + beta * beta) * recall * precision / denom if denom > 0 else 0.0
    return RougeLComponents(lcs, precision, recall, beta, f)


# -- METEOR -------------------------------------------------------------------


@dataclass
class MeteorComponents:
    matches: int
    chunks: int
    precision: float
    recall: float
    alpha: float
    f_mean: float
    gamma: float
    theta: float
    penalty: float
    meteor: float


def _align(cand: list[str], ref: list[str]) -> list[tuple[int, int]]:
    # two matcher stages: exact surface match, then lemma match; each
    # token on either side participates in at most one pair, matched
    # greedily left to right
    pairs: list[tuple[int, int]] = []
    cand_used = [False] * len(cand)
    ref_used = [False] * len(ref)
    for key_fn in (lambda t: t, lemmatize):
        cand_keys = [key_fn(t) for t in cand]
        ref_keys = [key_fn(t) for t in ref]
        for i, key in enumerate(cand_keys):
            if cand_used[i]:
                continue
            for j, ref_key in enumerate(ref_keys):
                if not ref_used[j] and key == ref_key:
                    pairs.append((i, j))
                    cand_used[i] = True
                    ref_used[j] = True
                    break
    pairs.sort()
    return pairs


def _chunk_count(pairs: list[tuple[int, int]]) -> int:
    chunks = 0
    prev: tuple[int, int] | None = None
    for i, j in pairs:
        if prev is None or i != prev[0] + 1 or j != prev[1] + 1:
            chunks += 1
        prev = (i, j)
    return chunks


def meteor(
    candidate: TokenInput,
    reference: TokenInput,
    alpha: float = 0.9,
    gamma: float = 0.5,
    theta: float = 3.0,
) -> MeteorComponents:
    """Unigram alignment score with a fragmentation penalty.

    F_mean = P*R / (alpha*P + (1-alpha)*R); penalty = gamma*(chunks/m)^theta;
    score = F_mean * (1 - penalty). No matches means 0.
    """
    cand = _tokens(candidate)
    ref = _tokens(reference)
    pairs = _align(cand, ref)
    m = len(pairs)
    if m == 0:
        return MeteorComponents(0, 0, 0.0, 0.0, alpha, 0.0, gamma, theta, 0.0, 0.0)
    precision = m / len(cand)
    recall = m / len(ref)
    f_mean = precision * recall / (alpha * precision + (1 - alpha) * recall)
    chunks = _chunk_count(pairs)
    penalty = gamma * (chunks / m) ** theta
    return MeteorComponents(
        m, chunks, precision, recall, alpha, f_mean, gamma, theta, penalty, f_mean * (1 - penalty)
    )


# -- embedding-based score ------------------------------------------------------


@dataclass
class EmbedScoreComponents:
    candidate_max_cosines: list[float]
    reference_max_cosines: list[float]
    precision: float
    recall: float
    f1: float


def embed_score(
    candidate: TokenInput,
    reference: TokenInput,
    provider: EmbeddingProvider,
) -> EmbedScoreComponents:
    """Greedy mean-max token cosine in both directions plus harmonic mean.

    Precision averages, over candidate tokens, the best cosine against
    any reference token; recall is the mirror image.
    """
    cand = _tokens(candidate)
    ref = _tokens(reference)
    if not cand or not ref:
        return EmbedScoreComponents([], [], 0.0, 0.0, 0.0)
    distinct = sorted(set(cand) | set(ref))
    vectors = dict(zip(distinct, provider.embed(distinct)))
    sims = {
        (x, y): cosine(vectors[x], vectors[y]) for x in set(cand) for y in set(ref)
    }
    cand_max = [max(sims[(x, y)] for y in set(ref)) for x in cand]
    ref_max = [max(sims[(x, y)] for x in set(cand)) for y in ref]
    precision = sum(cand_max) / len(cand_max)
    recall = sum(ref_max) / len(ref_max)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return EmbedScoreComponents(cand_max, ref_max, precision, recall, f1)


# -- corpus evaluation -----------------------------------------------------------


@dataclass
class PairScores:
    pair_id: str
    bleu: BleuComponents
    rouge: RougeLComponents
    meteor: MeteorComponents
    embed: EmbedScoreComponents | None

    def row(self) -> dict:
        out = {
            "id": self.pair_id,
            "bleu": self.bleu.bleu,
            "rouge_l": self.rouge.f,
            "meteor": self.meteor.meteor,
        }
        if self.embed is not None:
            out.update(
                embed_precision=self.embed.precision,
                embed_recall=self.embed.recall,
                embed_f1=self.embed.f1,
            )
        return out


@dataclass
class MetricReport:
    pairs: list[PairScores] = field(default_factory=list)

    @property
    def means(self) -> dict[str, float]:
        if not self.pairs:
            return {}
        keys = [k for k in self.pairs[0].row() if k != "id"]
        return {k: sum(p.row()[k] for p in self.pairs) / len(self.pairs) for k in keys}

    def write_csv(self, path: str | Path) -> None:
        rows = [p.row() for p in self.pairs]
        fieldnames = list(rows[0].keys()) if rows else ["id"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=fieldnames)
            writer.writeheader()
            writer.writerows(rows)
            if rows:
                writer.writerow({"id": "mean", **self.means})

    def write_json(self, path: str | Path) -> None:
        payload = {"pairs": [p.row() for p in self.pairs], "means": self.means}
        Path(path).write_text(json.dumps(payload, indent=2), encoding="utf-8")


def evaluate_corpus(
    pairs: Sequence[tuple[str, str | Sequence[str]]],
    provider: EmbeddingProvider | None = None,
    ids: Sequence[str] | None = None,
    max_n: int = 4,
) -> MetricReport:
    """Score (candidate, reference-or-references) pairs with all metrics.

    BLEU consumes every reference; the single-reference metrics evaluate
    against each reference and keep the best score. Passing a provider
    enables the embedding score.
    """
    if not pairs:
        raise ValueError("at least one pair is required")
    report = MetricReport()
    for i, (candidate, references) in enumerate(pairs):
        ref_list = [references] if isinstance(references, str) else list(references)
        pair_id = ids[i] if ids is not None else str(i)
        rouge_best = max((rouge_l(candidate, r) for r in ref_list), key=lambda c: c.f)
        meteor_best = max((meteor(candidate, r) for r in ref_list), key=lambda c: c.meteor)
        embed_best = None
        if provider is not None:
            embed_best = max(
                (embed_score(candidate, r, provider) for r in ref_list), key=lambda c: c.f1
            )
        report.pairs.append(
            PairScores(
                pair_id,
                bleu(candidate, ref_list, max_n=max_n),
                rouge_best,
                meteor_best,
                embed_best,
            )
        )
    return report
