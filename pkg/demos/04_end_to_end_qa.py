"""Run the whole adaptation pipeline on a synthetic collection, then answer
questions with the hybrid retriever and score the run.

Ten topics, twenty passages each; half of each topic's passages contain a
plantable answer phrase. After adaptation the dense index, the BM25 index,
and the trained encoder combine into one QA system.
"""

from hyqa.corpus import Document, tokenize
from hyqa.encoder import TrainConfig
from hyqa.evalkit import GoldSet, paired_t_test
from hyqa.fusion import FusionConfig
from hyqa.mrc import SpanLogits
from hyqa.pipeline import (
    AdaptationConfig,
    PipelineConfig,
    answer_question,
    evaluate_run,
    make_dense_retriever,
    make_hybrid_retriever,
    run_adaptation,
)


def build_corpus():
    docs = []
    for t in range(10):
        animal, place = f"kestrel{t}", f"meadow{t}"
        answer = f"elixir{t}"
        for j in range(20):
            sentences = [
                f"The {animal} roams the {place} every morning.",
                f"Most {animal} groups forage near the {place} border.",
            ]
            if j < 10:
                sentences.append(f"Keepers of the {animal} store {answer} inside the shed.")
            else:
                sentences.append(f"Field notes track the {animal} habits in entry {j}.")
            docs.append(Document(id=f"t{t}d{j}", title=animal, body=" ".join(sentences)))
    return docs


class PlantedAnswerScorer:
    """Stand-in for a trained reading model: spikes the start/end logits at
    the gold answer's token when the passage contains it, flat otherwise.
    In production these logits would come from an external model via the
    precomputed-logits path."""

    def __init__(self, answer_by_question):
        self.answer_by_question = answer_by_question

    def logits(self, question, passage_id, passage_text):
        tokens = [t.surface for t in tokenize(passage_text)]
        start = [0.0] * (len(tokens) + 1)
        end = [0.0] * (len(tokens) + 1)
        answer = self.answer_by_question.get(question)
        if answer in tokens:
            i = tokens.index(answer)
            start[i + 1] = 10.0
            end[i + 1] = 10.0
        return SpanLogits(tuple(start), tuple(end))


def main():
    config = AdaptationConfig(
        seed=0,
        examples_per_passage=8,
        train=TrainConfig(learning_rate=0.1, epochs=40, batch_size=8, seed=0),
    )
    result = run_adaptation(build_corpus(), config)
    counts = result.manifest["counts"]
    print("adaptation counts:", counts)

    texts = {p.id: p.text for p in result.retrieval_passages}
    retriever = make_hybrid_retriever(
        result.sparse_index, result.dense_index, result.encoder, FusionConfig(weight=0.7)
    )
    golds = [
        GoldSet(f"q{t}", f"what do keepers of the kestrel{t} store", (f"elixir{t}",))
        for t in range(10)
    ]
    scorer = PlantedAnswerScorer({g.question: g.answers[0] for g in golds})

    question = golds[3].question
    candidates = answer_question(question, retriever, scorer, texts, PipelineConfig(K=20))
    print(f"\nQ: {question}")
    for c in candidates[:3]:
        print(f"  {c.text!r} from {c.passage_id} (combined {c.combined:.3f})")

    hybrid_report = evaluate_run(golds, retriever, scorer, texts, PipelineConfig(K=20), match_ks=(5, 20))
    dense_report = evaluate_run(
        golds,
        make_dense_retriever(result.dense_index, result.encoder),
        scorer,
        texts,
        PipelineConfig(K=20),
        match_ks=(5, 20),
    )
    print("\nhybrid:\n" + hybrid_report.format_table())
    print("\ndense only:\n" + dense_report.format_table())

    a = [hybrid_report.per_query[g.query_id]["top5_f1"] for g in golds]
    b = [dense_report.per_query[g.query_id]["top5_f1"] for g in golds]
    test = paired_t_test(a, b)
    if test.degenerate:
        print("\npaired t-test: identical per-query scores (degenerate)")
    else:
        print(f"\npaired t-test: t={test.t:.3f} p={test.p_value:.3f}")


if __name__ == "__main__":
    main()
