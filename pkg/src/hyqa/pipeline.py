"""End-to-end orchestration: retrieve, score spans, combine, evaluate,
and the full domain-adaptation run (generate -> filter -> mine -> train).

Every run is a deterministic function of its inputs and one seed; the
adaptation run writes a JSON manifest recording config and stage counts so
results can be reproduced and audited.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .corpus import (
    Document,
    Passage,
    chunk_generation_passages,
    chunk_retrieval_passages,
    passage_to_record,
)
from .dense_index import DenseIndex, build_dense_index, dense_search
from .encoder import DESK_PRESET, DualEncoder, TrainConfig, encode_passage, encode_query, train
from .evalkit import GoldSet, MetricReport, match_at_k, top_n_f1
from .fusion import FusionConfig, fuse, minmax_normalize
from .mrc import LexicalScorer, ScorerConfig, SpanScore, best_spans, extract_answer
from .scored import ScoredPassage
from .sparse import BM25Params, SparseIndex, build_sparse_index, sparse_search
from .syngen import (
    FilterConfig,
    NgramLM,
    QAExample,
    SamplerConfig,
    build_ir_training_set,
    candidate_targets,
    generate_examples,
    roundtrip_filter,
)

__all__ = [
    "PipelineConfig",
    "AnswerCandidate",
    "Retriever",
    "answer_question",
    "evaluate_run",
    "AdaptationConfig",
    "AdaptationResult",
    "run_adaptation",
]

K_SPARSE_ONLY = 100  # retrieval depth that works best for BM25 alone
K_HYBRID = 40  # retrieval depth for fused sparse+dense retrieval

Retriever = Callable[[str, int], list[ScoredPassage]]


@dataclass(frozen=True)
class PipelineConfig:
    K: int = K_HYBRID
    ir_weight: float = 0.7
    fusion: FusionConfig = field(default_factory=FusionConfig)
    scorer: ScorerConfig = field(default_factory=ScorerConfig)
    seed: int = 0
    normalization: str = "minmax"  # or "softmax"

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if not 0.0 <= self.ir_weight <= 1.0:
            raise ValueError("ir_weight must lie in [0, 1]")
        if self.normalization not in ("minmax", "softmax"):
            raise ValueError("normalization must be 'minmax' or 'softmax'")


@dataclass(frozen=True)
class AnswerCandidate:
    text: str
    passage_id: str
    span: SpanScore
    ir_score: float
    mrc_score: float
    combined: float


def _normalize(scores: list[float], mode: str) -> list[float]:
    if mode == "softmax":
        arr = np.asarray(scores, dtype=np.float64)
        arr = arr - arr.max()
        exp = np.exp(arr)
        return list(exp / exp.sum())
    return minmax_normalize(scores)


def answer_question(
    question: str,
    retriever: Retriever,
    scorer,
    passage_texts: dict[str, str],
    config: PipelineConfig = PipelineConfig(),
) -> list[AnswerCandidate]:
    """Retrieve top-K passages, take each passage's best span and score,
    normalize IR and span scores over the candidate pool, and rank by their
    convex combination (ties by ascending passage id)."""
    retrieved = retriever(question, config.K)
    raw: list[tuple[ScoredPassage, SpanScore, str]] = []
    for sp in retrieved:
        text = passage_texts[sp.passage_id]
        logits = scorer.logits(question, sp.passage_id, text)
        if logits is None or logits.n == 0:
            continue
        spans = best_spans(logits, ScorerConfig(max_answer_len=config.scorer.max_answer_len, top_n=1))
        if not spans:
            continue
        raw.append((sp, spans[0], extract_answer(text, spans[0])))
    if not raw:
        return []
    ir_norm = _normalize([sp.score for sp, _, _ in raw], config.normalization)
    mrc_norm = _normalize([span.score for _, span, _ in raw], config.normalization)
    w = config.ir_weight
    candidates = [
        AnswerCandidate(
            text=answer,
            passage_id=sp.passage_id,
            span=span,
            ir_score=sp.score,
            mrc_score=span.score,
            combined=w * ir + (1 - w) * mrc,
        )
        for (sp, span, answer), ir, mrc in zip(raw, ir_norm, mrc_norm)
    ]
    candidates.sort(key=lambda c: (-c.combined, c.passage_id))
    return candidates


def evaluate_run(
    golds: Sequence[GoldSet],
    retriever: Retriever,
    scorer,
    passage_texts: dict[str, str],
    config: PipelineConfig = PipelineConfig(),
    match_ks: Sequence[int] = (20, 40, 100),
) -> MetricReport:
    """Retrieval Match@k plus end-to-end Top-1/Top-5 F1, with per-query
    rows for significance testing."""
    report = MetricReport(query_count=len(golds))
    if not golds:
        return report
    sums: dict[str, float] = {}
    depth = max(max(match_ks), config.K)
    for gold in golds:
        retrieved = retriever(gold.question, depth)
        row: dict[str, float] = {}
        for k in match_ks:
            row[f"match@{k}"] = match_at_k(retrieved, gold, k, passage_texts)
        candidates = answer_question(gold.question, lambda q, k: retrieved[:k], scorer, passage_texts, config)
        answers = [c.text for c in candidates]
        row["top1_f1"] = top_n_f1(answers, gold, 1)
        row["top5_f1"] = top_n_f1(answers, gold, 5)
        report.per_query[gold.query_id] = row
        for name, value in row.items():
            sums[name] = sums.get(name, 0.0) + value
    report.metrics = {name: value / len(golds) for name, value in sums.items()}
    return report


def make_sparse_retriever(index: SparseIndex) -> Retriever:
    return lambda question, k: sparse_search(index, question, k)


def make_dense_retriever(index: DenseIndex, encoder: DualEncoder) -> Retriever:
    return lambda question, k: dense_search(index, encode_query(encoder, question), k)


def make_hybrid_retriever(
    sparse_index: SparseIndex,
    dense_index: DenseIndex,
    encoder: DualEncoder,
    fusion_config: FusionConfig,
) -> Retriever:
    def retrieve(question: str, k: int) -> list[ScoredPassage]:
        sparse_results = sparse_search(sparse_index, question, fusion_config.pool_size)
        dense_results = dense_search(dense_index, encode_query(encoder, question), fusion_config.pool_size)
        return fuse(sparse_results, dense_results, fusion_config)[:k]

    return retrieve


@dataclass(frozen=True)
class AdaptationConfig:
    seed: int = 0
    retrieval_max_words: int = 120
    generation_max_tokens: int = 288
    examples_per_passage: int = 5
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    filter: FilterConfig = field(default_factory=lambda: FilterConfig(threshold=1.0))
    scorer: ScorerConfig = field(default_factory=ScorerConfig)
    bm25: BM25Params = field(default_factory=BM25Params)
    train: TrainConfig = DESK_PRESET
    embedding_dim: int = 64
    negative_depth: int = 100


@dataclass
class AdaptationResult:
    encoder: DualEncoder
    sparse_index: SparseIndex
    dense_index: DenseIndex
    retrieval_passages: list[Passage]
    generation_passages: list[Passage]
    examples: list[QAExample]
    filtered: list[QAExample]
    loss_trace: list[float]
    manifest: dict


def run_adaptation(
    documents: Sequence[Document],
    config: AdaptationConfig = AdaptationConfig(),
    output_dir: Optional[Path] = None,
) -> AdaptationResult:
    """Full domain-adaptation chain on a document collection.

    Stages: chunk -> generate synthetic examples -> roundtrip-filter ->
    mine hard negatives -> train the dual encoder -> embed and index the
    retrieval passages. All randomness flows from config.seed; the
    manifest records counts at every stage.
    """
    stage = "chunk"
    try:
        retrieval_passages: list[Passage] = []
        generation_passages: list[Passage] = []
        for doc in documents:
            retrieval_passages.extend(chunk_retrieval_passages(doc, config.retrieval_max_words))
            generation_passages.extend(chunk_generation_passages(doc, config.generation_max_tokens))

        stage = "index-sparse"
        sparse_index = build_sparse_index(retrieval_passages, config.bm25)
        gen_index = build_sparse_index(generation_passages, config.bm25)

        stage = "generate"
        examples: list[QAExample] = []
        discards: dict[str, int] = {}
        for i, passage in enumerate(generation_passages):
            rng = np.random.default_rng(config.seed ^ (i + 1))
            targets = candidate_targets(passage, rng)
            if not targets:
                continue
            lm = NgramLM(order=3).fit(targets)
            per_seq_seed = int(rng.integers(0, 2**31))
            result = generate_examples(
                passage,
                lm,
                n=config.examples_per_passage,
                config=SamplerConfig(p=config.sampler.p, k=config.sampler.k, seed=per_seq_seed),
            )
            examples.extend(result.examples)
            for reason, count in result.discards.items():
                discards[reason] = discards.get(reason, 0) + count

        stage = "filter"
        gen_texts = {p.id: p.text for p in generation_passages}
        scorer = LexicalScorer()
        filtered = roundtrip_filter(examples, scorer, config.filter, gen_texts, config.scorer)

        stage = "mine-negatives"
        gen_passages_by_id = {p.id: p for p in generation_passages}
        training_set = build_ir_training_set(
            filtered.kept, gen_index, gen_passages_by_id, depth=config.negative_depth
        )

        stage = "train-encoder"
        all_texts = [p.text for p in retrieval_passages] + [p.text for p in generation_passages]
        base = DualEncoder.from_texts(all_texts, d=config.embedding_dim, seed=config.seed)
        if not training_set.instances:
            raise RuntimeError("no training instances survived generation and filtering")
        train_config = TrainConfig(
            learning_rate=config.train.learning_rate,
            epochs=config.train.epochs,
            batch_size=config.train.batch_size,
            warmup_steps=config.train.warmup_steps,
            seed=config.seed,
        )
        trained, trace = train(base, training_set.instances, train_config)

        stage = "index-dense"
        embeddings = np.stack([encode_passage(trained, p.text) for p in retrieval_passages])
        dense = build_dense_index([p.id for p in retrieval_passages], embeddings)
    except Exception as e:
        raise RuntimeError(f"adaptation failed at stage {stage!r}: {e}") from e

    manifest = {
        "config": {
            "seed": config.seed,
            "retrieval_max_words": config.retrieval_max_words,
            "generation_max_tokens": config.generation_max_tokens,
            "examples_per_passage": config.examples_per_passage,
            "sampler": {"p": config.sampler.p, "k": config.sampler.k},
            "filter_threshold": config.filter.threshold,
            "bm25": {"k1": config.bm25.k1, "b": config.bm25.b},
            "train": asdict(train_config),
            "embedding_dim": config.embedding_dim,
            "negative_depth": config.negative_depth,
        },
        "counts": {
            "documents": len(documents),
            "retrieval_passages": len(retrieval_passages),
            "generation_passages": len(generation_passages),
            "generated_examples": len(examples),
            "generation_discards": dict(sorted(discards.items())),
            "kept_after_filter": len(filtered.kept),
            "filter_missing_logits": filtered.missing,
            "train_instances": len(training_set.instances),
            "dropped_no_negative": training_set.dropped,
            "vocab_size": len(trained.vocab),
        },
        "loss_trace": [round(x, 10) for x in trace],
    }

    result = AdaptationResult(
        encoder=trained,
        sparse_index=sparse_index,
        dense_index=dense,
        retrieval_passages=retrieval_passages,
        generation_passages=generation_passages,
        examples=examples,
        filtered=filtered.kept,
        loss_trace=trace,
        manifest=manifest,
    )
    if output_dir is not None:
        _persist(result, filtered.scores, Path(output_dir))
    return result


def _persist(result: AdaptationResult, scores, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "retrieval_passages.jsonl", "w") as f:
        for p in result.retrieval_passages:
            f.write(json.dumps(passage_to_record(p), sort_keys=True) + "\n")
    with open(out / "generation_passages.jsonl", "w") as f:
        for p in result.generation_passages:
            f.write(json.dumps(passage_to_record(p), sort_keys=True) + "\n")
    score_by_example = {
        (ex.passage_id, ex.question, ex.answer): s
        for ex, s in zip(result.examples, scores)
    }
    with open(out / "synthetic_examples.jsonl", "w") as f:
        for ex in result.filtered:
            s = score_by_example.get((ex.passage_id, ex.question, ex.answer))
            f.write(
                json.dumps(
                    {
                        "passage_id": ex.passage_id,
                        "question": ex.question,
                        "answer": ex.answer,
                        "span_start": ex.answer_span[0],
                        "span_end": ex.answer_span[1],
                        "answerability": s,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    result.sparse_index.save(out / "sparse.hyqa")
    result.dense_index.save(out / "dense.hyqa")
    result.encoder.save(out / "encoder.hyqa")
    with open(out / "manifest.json", "w") as f:
        json.dump(result.manifest, f, sort_keys=True, indent=2)
        f.write("\n")
