"""Evaluation metrics: answer normalization, EM/F1, Match@k, Top-n F1,
open-version gold-set construction, and the paired t-test.
"""

from __future__ import annotations

import json
import math
import re
import string
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from scipy.special import betainc

from .scored import ScoredPassage

__all__ = [
    "GoldSet",
    "MetricReport",
    "TTestResult",
    "normalize_answer",
    "exact_match",
    "token_f1",
    "match_at_k",
    "top_n_f1",
    "open_version",
    "paired_t_test",
]


@dataclass(frozen=True)
class GoldSet:
    query_id: str
    question: str
    answers: tuple[str, ...]

    def __post_init__(self):
        if not self.answers:
            raise ValueError("GoldSet requires at least one answer")


@dataclass
class MetricReport:
    metrics: dict[str, float] = field(default_factory=dict)
    query_count: int = 0
    per_query: dict[str, dict[str, float]] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {"query_count": self.query_count, "metrics": self.metrics, "per_query": self.per_query},
            sort_keys=True,
            indent=2,
        )

    def format_table(self) -> str:
        width = max((len(k) for k in self.metrics), default=6)
        lines = [f"queries: {self.query_count}"]
        for name in sorted(self.metrics):
            lines.append(f"{name:<{width}}  {self.metrics[name]:.4f}")
        return "\n".join(lines)


_ARTICLES_RE = re.compile(r"\b(a|an|the)\b")
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def normalize_answer(text: str) -> str:
    """Lowercase, strip punctuation, drop articles, collapse whitespace."""
    text = text.lower().translate(_PUNCT_TABLE)
    text = _ARTICLES_RE.sub(" ", text)
    return " ".join(text.split())


def exact_match(prediction: str, golds: Iterable[str]) -> int:
    norm_pred = normalize_answer(prediction)
    return int(any(norm_pred == normalize_answer(g) for g in golds))


def _f1_single(prediction: str, gold: str) -> float:
    pred_tokens = normalize_answer(prediction).split()
    gold_tokens = normalize_answer(gold).split()
    if not pred_tokens and not gold_tokens:
        return 1.0
    if not pred_tokens or not gold_tokens:
        return 0.0
    common = Counter(pred_tokens) & Counter(gold_tokens)
    num_same = sum(common.values())
    if num_same == 0:
        return 0.0
    precision = num_same / len(pred_tokens)
    recall = num_same / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def token_f1(prediction: str, golds: Iterable[str]) -> float:
    return max(_f1_single(prediction, g) for g in golds)


def _contains_answer(passage_text: str, answers: Iterable[str], raw_substring: bool = False) -> bool:
    if raw_substring:
        return any(a in passage_text for a in answers)
    passage_tokens = normalize_answer(passage_text).split()
    for answer in answers:
        ans_tokens = normalize_answer(answer).split()
        if not ans_tokens:
            continue
        n = len(ans_tokens)
        for i in range(len(passage_tokens) - n + 1):
            if passage_tokens[i : i + n] == ans_tokens:
                return True
    return False


def match_at_k(
    retrieved: Sequence[ScoredPassage],
    gold: GoldSet,
    k: int,
    passage_texts: dict[str, str],
    raw_substring: bool = False,
) -> int:
    """1 iff any top-k passage contains a gold answer as a contiguous
    normalized token subsequence (raw substring mode behind a flag)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    for sp in retrieved[:k]:
        if _contains_answer(passage_texts[sp.passage_id], gold.answers, raw_substring):
            return 1
    return 0


def top_n_f1(candidates: Sequence[str], gold: GoldSet, n: int) -> float:
    if not candidates:
        return 0.0
    return max(token_f1(c, gold.answers) for c in candidates[:n])


def open_version(rows: Iterable[tuple[str, str]]) -> list[GoldSet]:
    """Group (question, answer) rows by normalized question; union answers."""
    grouped: dict[str, tuple[str, list[str]]] = {}
    order: list[str] = []
    for question, answer in rows:
        key = normalize_answer(question)
        if key not in grouped:
            grouped[key] = (question, [])
            order.append(key)
        answers = grouped[key][1]
        if answer not in answers:
            answers.append(answer)
    return [
        GoldSet(query_id=f"q{i}", question=grouped[key][0], answers=tuple(grouped[key][1]))
        for i, key in enumerate(order)
    ]


@dataclass(frozen=True)
class TTestResult:
    t: float | None
    p_value: float | None
    df: int
    degenerate: bool = False


def paired_t_test(scores_a: Sequence[float], scores_b: Sequence[float]) -> TTestResult:
    """Two-sided paired t-test; p-value via the regularized incomplete beta."""
    if len(scores_a) != len(scores_b):
        raise ValueError("paired t-test requires equal-length score lists")
    n = len(scores_a)
    if n < 2:
        raise ValueError("paired t-test requires n >= 2")
    diffs = [a - b for a, b in zip(scores_a, scores_b)]
    mean = sum(diffs) / n
    var = sum((d - mean) ** 2 for d in diffs) / (n - 1)
    df = n - 1
    if var == 0.0:
        return TTestResult(t=None, p_value=None, df=df, degenerate=True)
    t = mean / math.sqrt(var / n)
    # Two-sided: P(|T| >= |t|) = I_{df/(df+t^2)}(df/2, 1/2)
    p = float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return TTestResult(t=t, p_value=p, df=df)


def load_gold_jsonl(lines: Iterable[str]) -> list[GoldSet]:
    """Line-delimited JSON {question, answers: [...], id?}."""
    golds = []
    for i, line in enumerate(lines):
        line = line.strip()
        if not line:
            continue
        rec = json.loads(line)
        golds.append(
            GoldSet(
                query_id=rec.get("id", f"q{i}"),
                question=rec["question"],
                answers=tuple(rec["answers"]),
            )
        )
    return golds


def load_gold_squad(data: dict) -> list[GoldSet]:
    """SQuAD-style nested JSON: data -> paragraphs -> qas -> answers."""
    golds = []
    for article in data.get("data", []):
        for para in article.get("paragraphs", []):
            for qa in para.get("qas", []):
                answers = tuple(a["text"] for a in qa.get("answers", []))
                if not answers:
                    continue
                golds.append(
                    GoldSet(query_id=str(qa.get("id", len(golds))), question=qa["question"], answers=answers)
                )
    return golds
