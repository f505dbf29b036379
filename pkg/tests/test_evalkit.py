import math
import random

import numpy as np
import pytest

from campusqa.evalkit import (
    bleu,
    embed_score,
    evaluate_corpus,
    lcs_length,
    meteor,
    rouge_l,
)


class BasisProvider:
    """Maps each distinct token to its own basis vector: exact orthogonality."""

    name = "basis"
    dim = 64

    def __init__(self):
        self._slots = {}

    def fingerprint(self):
        return "basis:64"

    def embed(self, texts):
        out = []
        for t in texts:
            if t not in self._slots:
                self._slots[t] = len(self._slots)
            vec = np.zeros(self.dim)
            vec[self._slots[t] % self.dim] = 1.0
            out.append(vec)
        return out


def brute_force_lcs(a, b):
    # enumeration oracle: best subsequence of `a` that is also a subsequence of `b`
    best = 0
    for mask in range(1 << len(a)):
        sub = [a[i] for i in range(len(a)) if mask >> i & 1]
        it = iter(b)
        if all(tok in it for tok in sub):
            best = max(best, len(sub))
    return best


class TestBleu:
    def test_identical_long_candidate(self):
        text = "the campus shuttle runs every twenty minutes"
        assert bleu(text, [text]).bleu == pytest.approx(1.0, abs=1e-12)

    def test_disjoint_unigrams(self):
        assert bleu("alpha beta gamma delta", ["one two three four"]).bleu == 0.0

    def test_cat_sat_worked_example(self):
        comp = bleu("the cat sat on mat", ["the cat sat on the mat"])
        assert comp.precisions == pytest.approx([1.0, 3 / 4, 2 / 3, 1 / 2], abs=1e-12)
        assert comp.candidate_len == 5
        assert comp.reference_len == 6
        assert comp.brevity_penalty == pytest.approx(math.exp(-0.2), abs=1e-12)
        assert comp.bleu == pytest.approx(0.5789, abs=1e-4)

    def test_empty_candidate(self):
        assert bleu("", ["anything here"]).bleu == 0.0

    def test_short_candidate_zero_without_smoothing(self):
        comp = bleu("two words", ["two words"])
        assert comp.bleu == 0.0  # no 3-grams or 4-grams to match
        assert bleu("two words", ["two words"], smooth=True).bleu > 0.0

    def test_clipping_caps_repeats(self):
        comp = bleu("the the the the", ["the cat"], max_n=1)
        assert comp.precisions[0] == pytest.approx(1 / 4, abs=1e-12)

    def test_closest_reference_length(self):
        comp = bleu("a b c", ["a b", "a b c d e"])
        assert comp.reference_len == 2  # distance 1 beats distance 2
        tie = bleu("a b c", ["a b c d", "a b"])
        assert tie.reference_len == 2  # ties go to the shorter reference

    def test_unigram_bleu_is_unigram_precision(self):
        rng = random.Random(14)
        vocab = ["exam", "room", "credit", "fee", "lab"]
        for _ in range(50):
            n = rng.randrange(1, 8)
            cand = [rng.choice(vocab) for _ in range(n)]
            ref = [rng.choice(vocab) for _ in range(n)]
            comp = bleu(cand, [ref], max_n=1)
            clipped = sum(min(cand.count(w), ref.count(w)) for w in set(cand))
            assert comp.bleu == pytest.approx(clipped / n, abs=1e-12)

    def test_monotone_as_matches_removed(self):
        ref = "students register for courses during advising week every term"
        cand_tokens = ref.split()
        prev = bleu(" ".join(cand_tokens), [ref]).bleu
        for i in range(len(cand_tokens)):
            worse = cand_tokens.copy()
            worse[i] = "zzz"
            score = bleu(" ".join(worse), [ref]).bleu
            assert score <= prev + 1e-12


class TestRougeL:
    def test_identical(self):
        assert rouge_l("a b c d", "a b c d").f == 1.0

    def test_worked_example(self):
        comp = rouge_l("a b c d", "a c d e")
        assert comp.lcs == 3
        assert comp.precision == 0.75
        assert comp.recall == 0.75
        assert comp.f == 0.75

    def test_disjoint(self):
        assert rouge_l("a b", "c d").f == 0.0

    def test_empty_conventions(self):
        assert rouge_l("", "").f == 1.0
        assert rouge_l("", "a b").f == 0.0
        assert rouge_l("a b", "").f == 0.0

    def test_lcs_matches_enumeration_oracle(self):
        rng = random.Random(99)
        vocab = list("abcde")
        for _ in range(60):
            a = [rng.choice(vocab) for _ in range(rng.randrange(0, 10))]
            b = [rng.choice(vocab) for _ in range(rng.randrange(0, 10))]
            assert lcs_length(a, b) == brute_force_lcs(a, b)

    def test_beta_weighting(self):
        comp = rouge_l("a b c d", "a b", beta=2.0)
        # P = 0.5, R = 1.0, beta^2 = 4 -> F = 5*1*0.5 / (1 + 4*0.5)
        assert comp.f == pytest.approx(2.5 / 3.0, abs=1e-12)


class TestMeteor:
    def test_disjoint(self):
        assert meteor("a b", "c d").meteor == 0.0

    def test_identical_ten_tokens(self):
        text = "one two three four five six seven eight nine ten"
        comp = meteor(text, text)
        assert comp.matches == 10
        assert comp.chunks == 1
        assert comp.f_mean == pytest.approx(1.0, abs=1e-12)
        assert comp.penalty == pytest.approx(0.5 * 0.1**3, abs=1e-12)
        assert comp.meteor == pytest.approx(0.9995, abs=1e-6)

    def test_swapped_words_exactly_half(self):
        comp = meteor("cat the", "the cat")
        assert comp.matches == 2
        assert comp.chunks == 2
        assert comp.f_mean == 1.0
        assert comp.penalty == 0.5
        assert comp.meteor == 0.5

    def test_lemma_stage_matches(self):
        comp = meteor("added courses", "add course")
        assert comp.matches == 2
        assert comp.meteor > 0.0

    def test_each_token_matches_at_most_once(self):
        comp = meteor("the the the", "the")
        assert comp.matches == 1

    def test_penalty_monotone_in_chunks(self):
        # same m, increasing fragmentation
        configs = [
            ("a b c d", "a b c d"),   # 1 chunk
            ("a b d c", "a b c d"),   # more chunks
            ("b a d c", "a b c d"),   # most chunks
        ]
        penalties = [meteor(c, r).penalty for c, r in configs]
        assert penalties == sorted(penalties)
        for c, r in configs:
            assert meteor(c, r).matches == 4


class TestEmbedScore:
    def test_identical(self):
        comp = embed_score("a b", "a b", BasisProvider())
        assert comp.precision == comp.recall == comp.f1 == 1.0

    def test_orthogonal_zero(self):
        comp = embed_score("a b", "c d", BasisProvider())
        assert comp.precision == 0.0
        assert comp.recall == 0.0
        assert comp.f1 == 0.0

    def test_half_overlap_precision(self):
        comp = embed_score("a b", "a c", BasisProvider())
        assert comp.precision == pytest.approx(0.5, abs=1e-12)
        assert comp.recall == pytest.approx(0.5, abs=1e-12)
        assert comp.candidate_max_cosines == pytest.approx([1.0, 0.0], abs=1e-12)

    def test_empty_side(self):
        comp = embed_score("", "a b", BasisProvider())
        assert comp.f1 == 0.0


class TestEvaluateCorpus:
    def test_identical_pair_means(self):
        text = "one two three four five six seven eight nine ten"
        report = evaluate_corpus([(text, text)], provider=BasisProvider())
        means = report.means
        assert means["bleu"] == pytest.approx(1.0, abs=1e-12)
        assert means["rouge_l"] == pytest.approx(1.0, abs=1e-12)
        assert means["meteor"] == pytest.approx(0.9995, abs=1e-6)
        assert means["embed_f1"] == pytest.approx(1.0, abs=1e-12)

    def test_empty_candidate_contributes_zeros(self):
        report = evaluate_corpus([("", "some reference")], provider=BasisProvider())
        row = report.pairs[0].row()
        assert row["bleu"] == 0.0
        assert row["rouge_l"] == 0.0
        assert row["meteor"] == 0.0
        assert row["embed_f1"] == 0.0

    def test_row_count_matches_pairs(self):
        pairs = [("a b", "a b"), ("c", "c d"), ("", "x")]
        report = evaluate_corpus(pairs)
        assert len(report.pairs) == len(pairs)

    def test_multiple_references_best_kept(self):
        report = evaluate_corpus([("a b c d", ["z z z", "a b c d"])])
        assert report.pairs[0].rouge.f == 1.0

    def test_csv_and_json_output(self, tmp_path):
        report = evaluate_corpus([("a b", "a b")], provider=BasisProvider(), ids=["p1"])
        report.write_csv(tmp_path / "report.csv")
        report.write_json(tmp_path / "report.json")
        lines = (tmp_path / "report.csv").read_text().strip().splitlines()
        assert lines[0].startswith("id,bleu,rouge_l,meteor")
        assert lines[1].startswith("p1,")
        assert lines[-1].startswith("mean,")
        import json

        payload = json.loads((tmp_path / "report.json").read_text())
        assert payload["pairs"][0]["id"] == "p1"
        assert payload["means"]["rouge_l"] == 1.0

    def test_all_scores_in_unit_interval(self):
        rng = random.Random(1001)
        vocab = ["exam", "credit", "library", "thesis", "room", "fee", "advising"]
        pairs = []
        for _ in range(40):
            cand = " ".join(rng.choice(vocab) for _ in range(rng.randrange(0, 12)))
            ref = " ".join(rng.choice(vocab) for _ in range(rng.randrange(1, 12)))
            pairs.append((cand, ref))
        report = evaluate_corpus(pairs, provider=BasisProvider())
        for pair in report.pairs:
            row = pair.row()
            for key in ("bleu", "rouge_l", "meteor", "embed_f1"):
                assert -1e-12 <= row[key] <= 1.0 + 1e-12
