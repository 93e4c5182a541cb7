"""Generate synthetic QA examples from a passage, filter them by roundtrip
answerability, and mine a BM25 hard negative for each survivor.

This is the data-creation half of domain adaptation: no labeled questions
exist, so the pipeline invents them and keeps only the ones a span scorer
can answer from the source passage.
"""

import dataclasses

import numpy as np

from hyqa.corpus import Document, chunk_generation_passages
from hyqa.mrc import LexicalScorer
from hyqa.sparse import build_sparse_index
from hyqa.syngen import (
    FilterConfig,
    NgramLM,
    SamplerConfig,
    candidate_targets,
    generate_examples,
    mine_negative,
    roundtrip_filter,
)

TEXTS = {
    "reef": (
        "Coral reefs bleach when water warms past a threshold. "
        "Divers log bleaching events along the northern reef. "
        "Recovery takes years once temperatures stabilize."
    ),
    "dunes": (
        "Dune grasses anchor the sand against winter storms. "
        "Rangers replant grasses each autumn along the ridge."
    ),
    "bog": (
        "Peat bogs store carbon for thousands of years. "
        "Drained bogs release that carbon back as gas."
    ),
}


def passage(pid, text):
    p = chunk_generation_passages(Document(id=pid, title="", body=text), 288)[0]
    return dataclasses.replace(p, id=pid)


def main():
    passages = {pid: passage(pid, text) for pid, text in TEXTS.items()}
    index = build_sparse_index(list(passages.values()))

    generated = []
    for i, p in enumerate(passages.values()):
        rng = np.random.default_rng(i)
        lm = NgramLM(order=3).fit(candidate_targets(p, rng))
        result = generate_examples(p, lm, n=6, config=SamplerConfig(seed=i))
        print(f"{p.id}: {len(result.examples)} examples, discards {result.discards}")
        generated.extend(result.examples)

    kept = roundtrip_filter(
        generated, LexicalScorer(), FilterConfig(threshold=1.0), TEXTS
    ).kept
    print(f"\nfilter kept {len(kept)}/{len(generated)} examples")

    for ex in kept[:5]:
        neg = mine_negative(ex.question, ex.answer, index, TEXTS, exclude_id=ex.passage_id)
        print(f"  Q: {ex.question!r}")
        print(f"     answer={ex.answer!r}  positive={ex.passage_id}  negative={neg}")


if __name__ == "__main__":
    main()
