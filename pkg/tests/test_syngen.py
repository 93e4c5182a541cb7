from collections import Counter

import numpy as np
import pytest

from hyqa.corpus import Document, chunk_generation_passages
from hyqa.mrc import LexicalScorer
from hyqa.sparse import build_sparse_index
from hyqa.syngen import (
    EOS_TOKEN,
    SEP_TOKEN,
    DecodeRejection,
    FilterConfig,
    GenTarget,
    NgramLM,
    QAExample,
    SamplerConfig,
    build_ir_training_set,
    candidate_targets,
    decode_generation_target,
    encode_generation_target,
    generate_examples,
    ict_examples,
    mine_negative,
    roundtrip_filter,
    sample_top_p_top_k,
)


def make_passage(text, pid="p1"):
    import dataclasses

    p = chunk_generation_passages(Document(id=pid, title="", body=text), 288)[0]
    return dataclasses.replace(p, id=pid)


class TestEncodeTarget:
    def test_construction_by_definition(self):
        passage = make_passage("Covid spreads fast. Masks help a lot.")
        start = passage.text.index("Masks")
        ex = QAExample("p1", "What helps?", "Masks", (start, start + 5))
        target = encode_generation_target(passage, ex)
        assert target == GenTarget("masks", "lot", "Masks", "What helps?")

    def test_single_token_sentence(self):
        passage = make_passage("Wait. Masks help a lot.")
        ex = QAExample("p1", "q", "Wait", (0, 4))
        target = encode_generation_target(passage, ex)
        assert target.sentence_first == target.sentence_last == "wait"

    def test_answer_straddling_sentences_errors(self):
        passage = make_passage("Covid spreads fast. Masks help a lot.")
        bad = passage.text.index("fast")
        ex = QAExample("p1", "q", passage.text[bad : bad + 12], (bad, bad + 12))
        with pytest.raises(ValueError):
            encode_generation_target(passage, ex)

    def test_serialization_format(self):
        target = GenTarget("masks", "lot", "Masks", "What helps?")
        assert target.serialize() == "masks lot [SEP] Masks [SEP] What helps?"


class TestDecodeTarget:
    def test_roundtrip(self):
        passage = make_passage("Covid spreads fast. Masks help a lot.")
        start = passage.text.index("Masks")
        ex = QAExample("p1", "what helps", "Masks", (start, start + 5))
        decoded = decode_generation_target(passage, encode_generation_target(passage, ex).serialize())
        assert decoded == ex

    def test_first_matching_sentence_wins(self):
        # Both sentences start "masks" and end "lot".
        passage = make_passage("Masks help a lot. Masks block a lot.")
        decoded = decode_generation_target(passage, "masks lot [SEP] help [SEP] what")
        assert decoded.answer_span[0] < passage.text.index(".")

    def test_answer_not_found_is_rejection(self):
        passage = make_passage("Masks help a lot.")
        result = decode_generation_target(passage, "masks lot [SEP] vaccines [SEP] what")
        assert result == DecodeRejection("answer-not-found")

    def test_unmatched_sentence_is_rejection(self):
        passage = make_passage("Masks help a lot.")
        result = decode_generation_target(passage, "covid spreads [SEP] masks [SEP] what")
        assert result == DecodeRejection("sentence-not-found")

    def test_malformed_serialization_errors(self):
        passage = make_passage("Masks help a lot.")
        with pytest.raises(ValueError):
            decode_generation_target(passage, "masks lot [SEP] only one sep")
        with pytest.raises(ValueError):
            decode_generation_target(passage, "a b c [SEP] x [SEP] q")

    def test_decoded_answer_slices_from_passage(self):
        passage = make_passage("The COVID-19 vaccine works well.")
        decoded = decode_generation_target(passage, "the well [SEP] covid 19 [SEP] what works")
        s, e = decoded.answer_span
        assert passage.text[s:e] == decoded.answer == "COVID-19"


class TestSampler:
    def test_defaults(self):
        config = SamplerConfig()
        assert config.p == 0.95
        assert config.k == 10

    def test_k1_is_greedy(self):
        rng = np.random.default_rng(0)
        masses = np.array([0.2, 0.5, 0.3])
        for _ in range(20):
            assert sample_top_p_top_k(masses, SamplerConfig(k=1), rng) == 1

    def test_identity_filter_samples_everything(self):
        rng = np.random.default_rng(1)
        masses = np.array([0.25, 0.25, 0.25, 0.25])
        seen = {sample_top_p_top_k(masses, SamplerConfig(p=1.0, k=4), rng) for _ in range(200)}
        assert seen == {0, 1, 2, 3}

    def test_nucleus_fixture_frequencies(self):
        rng = np.random.default_rng(2)
        masses = np.array([0.5, 0.3, 0.15, 0.05])
        config = SamplerConfig(p=0.75, k=3)
        counts = Counter(sample_top_p_top_k(masses, config, rng) for _ in range(100_000))
        assert set(counts) == {0, 1}
        assert counts[0] / 100_000 == pytest.approx(0.625, abs=0.01)
        assert counts[1] / 100_000 == pytest.approx(0.375, abs=0.01)

    def test_mass_ties_break_by_index(self):
        rng = np.random.default_rng(3)
        masses = np.array([0.25, 0.25, 0.25, 0.25])
        # k=2, p small: support must be the two lowest-index tokens.
        seen = {sample_top_p_top_k(masses, SamplerConfig(p=0.5, k=2), rng) for _ in range(100)}
        assert seen <= {0, 1}

    def test_empty_distribution_errors(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            sample_top_p_top_k(np.array([]), SamplerConfig(), rng)

    def test_invalid_masses_error(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            sample_top_p_top_k(np.array([0.5, 0.6]), SamplerConfig(), rng)


class PointMassLM:
    """Deterministic distribution emitting a fixed token sequence."""

    def __init__(self, tokens):
        self.vocab = sorted(set(tokens) | {EOS_TOKEN})
        self._tokens = list(tokens)

    def next(self, context):
        pos = len(context)
        tok = self._tokens[pos] if pos < len(self._tokens) else EOS_TOKEN
        masses = np.zeros(len(self.vocab))
        masses[self.vocab.index(tok)] = 1.0
        return masses


class TestGenerate:
    def test_greedy_deterministic_lm_dedups_to_one(self):
        passage = make_passage("Masks help a lot.")
        lm = PointMassLM(["masks", "lot", SEP_TOKEN, "help", SEP_TOKEN, "what", "helps"])
        result = generate_examples(passage, lm, n=5, config=SamplerConfig(k=1, seed=0))
        assert len(result.examples) == 1
        assert result.discards.get("duplicate") == 4
        assert result.examples[0].answer == "help"

    def test_absent_answer_dropped_and_tallied(self):
        passage = make_passage("Masks help a lot.")
        lm = PointMassLM(["masks", "lot", SEP_TOKEN, "vaccines", SEP_TOKEN, "what"])
        result = generate_examples(passage, lm, n=3, config=SamplerConfig(k=1, seed=0))
        assert result.examples == []
        assert result.discards["answer-not-found"] == 3

    def test_fixed_seed_identical_output(self):
        passage = make_passage(
            "Masks help a lot. Vaccines work well. Distancing slows spread."
        )
        rng = np.random.default_rng(0)
        lm = NgramLM(order=3).fit(candidate_targets(passage, rng))
        config = SamplerConfig(seed=7)
        a = generate_examples(passage, lm, n=5, config=config)
        b = generate_examples(passage, lm, n=5, config=config)
        assert a.examples == b.examples
        assert a.discards == b.discards

    def test_every_example_satisfies_answer_invariant(self):
        passage = make_passage(
            "Masks help a lot. Vaccines work well. Distancing slows spread quickly."
        )
        rng = np.random.default_rng(1)
        lm = NgramLM(order=3).fit(candidate_targets(passage, rng))
        result = generate_examples(passage, lm, n=20, config=SamplerConfig(seed=3))
        for ex in result.examples:
            s, e = ex.answer_span
            assert passage.text[s:e] == ex.answer


class TestRoundtripFilter:
    def make_examples(self):
        passages = {
            "good": "Masks block droplets effectively indoors.",
            "bad": "Totally unrelated content about astronomy.",
        }
        examples = [
            QAExample("good", "do masks block droplets", "droplets", (12, 20)),
            QAExample("bad", "do masks block droplets", "content", (18, 25)),
        ]
        return examples, passages

    def test_threshold_extremes(self):
        examples, passages = self.make_examples()
        scorer = LexicalScorer()
        everything = roundtrip_filter(examples, scorer, FilterConfig(float("-inf")), passages)
        nothing = roundtrip_filter(examples, scorer, FilterConfig(float("inf")), passages)
        assert everything.kept == examples
        assert nothing.kept == []

    def test_hand_filtered_set_at_half(self):
        examples, passages = self.make_examples()
        result = roundtrip_filter(examples, LexicalScorer(), FilterConfig(0.5), passages)
        assert result.kept == [examples[0]]
        assert result.scores[0] > 0.5
        assert result.scores[1] == 0.0

    def test_monotone_in_threshold(self):
        examples, passages = self.make_examples()
        scorer = LexicalScorer()
        kept_sets = []
        for t in (float("-inf"), 0.0, 0.5, 7.0, float("inf")):
            kept = roundtrip_filter(examples, scorer, FilterConfig(t), passages).kept
            kept_sets.append({(ex.passage_id, ex.question) for ex in kept})
        for tighter, looser in zip(kept_sets[1:], kept_sets):
            assert tighter <= looser

    def test_default_threshold(self):
        assert FilterConfig().threshold == 7.0

    def test_missing_logits_dropped_not_fatal(self):
        examples, passages = self.make_examples()

        class Sometimes:
            def logits(self, question, pid, text):
                return None if pid == "bad" else LexicalScorer().logits(question, pid, text)

        result = roundtrip_filter(examples, Sometimes(), FilterConfig(0.0), passages)
        assert result.missing == 1
        assert result.scores[1] is None
        assert [ex.passage_id for ex in result.kept] == ["good"]


def mining_fixture():
    texts = {
        "a": "Fever is a common covid symptom reported widely.",
        "b": "Covid symptom lists often include fatigue and cough.",
        "c": "Gardening tips for growing tomatoes at home.",
    }
    passages = [make_passage(t, pid) for pid, t in texts.items()]
    return build_sparse_index(passages), texts


class TestMineNegative:
    def test_skips_answer_bearing_rank_one(self):
        index, texts = mining_fixture()
        # "fever" only in a; query hits a first but a contains the answer.
        neg = mine_negative("fever covid symptom", "fever", index, texts)
        assert neg == "b"

    def test_no_candidate_contains_answer(self):
        index, texts = mining_fixture()
        neg = mine_negative("covid symptom", "vaccination", index, texts)
        assert neg in ("a", "b")  # rank-1 admissible

    def test_all_contain_answer_returns_none(self):
        index, texts = mining_fixture()
        neg = mine_negative("covid symptom", "covid symptom", index, texts)
        assert neg is None


class TestBuildTrainingSet:
    def test_all_negatives_found(self):
        index, texts = mining_fixture()
        passages = {pid: make_passage(t, pid) for pid, t in texts.items()}
        examples = [
            QAExample("a", "what is a common covid symptom", "Fever", (0, 5)),
            QAExample("b", "what do covid symptom lists include", "fatigue", (33, 40)),
        ]
        result = build_ir_training_set(examples, index, passages)
        assert len(result.instances) == 2
        assert result.dropped == 0
        for inst in result.instances:
            assert inst.positive.id not in {n.id for n in inst.hard_negatives}

    def test_unminable_example_dropped(self):
        texts = {"a": "Covid covid covid.", "b": "Covid again covid."}
        passages = {pid: make_passage(t, pid) for pid, t in texts.items()}
        index = build_sparse_index(list(passages.values()))
        examples = [QAExample("a", "covid", "Covid", (0, 5))]
        result = build_ir_training_set(examples, index, passages)
        assert result.instances == []
        assert result.dropped == 1

    def test_unknown_passage_errors(self):
        index, texts = mining_fixture()
        passages = {pid: make_passage(t, pid) for pid, t in texts.items()}
        with pytest.raises(KeyError):
            build_ir_training_set([QAExample("zz", "q", "a", (0, 1))], index, passages)


class TestICT:
    def multi_sentence_passages(self, count):
        return [
            make_passage(
                f"Topic{i} starts here. Middle sentence number {i} follows. Final thought {i} ends.",
                f"p{i}",
            )
            for i in range(count)
        ]

    def test_full_masking_removes_query(self):
        passages = self.multi_sentence_passages(20)
        pairs = ict_examples(passages, mask_prob=1.0, rng=np.random.default_rng(0))
        for query, context in pairs:
            assert query not in context

    def test_no_masking_keeps_full_passage(self):
        passages = self.multi_sentence_passages(20)
        pairs = ict_examples(passages, mask_prob=0.0, rng=np.random.default_rng(0))
        by_id = {p.text for p in passages}
        for _, context in pairs:
            assert context in by_id

    def test_single_sentence_passages_skipped(self):
        passages = [make_passage("Only one sentence here.", "solo")]
        assert ict_examples(passages, rng=np.random.default_rng(0)) == []

    def test_empirical_masking_rate(self):
        passages = self.multi_sentence_passages(10_000)
        rng = np.random.default_rng(42)
        pairs = ict_examples(passages, mask_prob=0.9, rng=rng)
        masked = sum(1 for query, context in pairs if query not in context)
        assert masked / len(pairs) == pytest.approx(0.9, abs=0.01)


class TestNgramLM:
    def test_masses_sum_to_one(self):
        lm = NgramLM(order=2).fit([["a", "b", "c"], ["a", "c"]])
        for ctx in ([], ["a"], ["b"], ["zzz"]):
            assert lm.next(ctx).sum() == pytest.approx(1.0, abs=1e-9)

    def test_learns_transitions(self):
        lm = NgramLM(order=2).fit([["a", "b"], ["a", "b"], ["a", "c"]])
        dist = lm.next(["a"])
        assert dist[lm.vocab.index("b")] == pytest.approx(2 / 3)
        assert dist[lm.vocab.index("c")] == pytest.approx(1 / 3)
