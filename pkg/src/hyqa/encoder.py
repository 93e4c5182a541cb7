"""Dual-encoder retrieval model with exact gradients.

Each tower is an embedding table followed by an affine projection: the text
is tokenized, in-vocabulary token embeddings are mean-pooled, and the mean
passes through a d x d projection with bias. Query/passage similarity is
the raw dot product of the two tower outputs. Training minimizes the
negative log-likelihood of the positive passage against in-batch negatives
(every question in a mini-batch sees its own hard negatives plus the other
questions' positives and hard negatives), with plain SGD and linear warmup.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import container
from .corpus import Passage, tokenize

__all__ = [
    "DualEncoder",
    "IRTrainInstance",
    "TrainConfig",
    "FULL_PRESET",
    "DESK_PRESET",
    "encode_query",
    "encode_passage",
    "similarity",
    "batch_loss",
    "loss_gradient",
    "train",
]

_PARAM_NAMES = ("q_emb", "q_proj", "q_bias", "p_emb", "p_proj", "p_bias")


@dataclass
class DualEncoder:
    vocab: dict[str, int]
    params: dict[str, np.ndarray]
    d: int

    @classmethod
    def create(cls, vocab: Sequence[str], d: int = 64, seed: int = 0) -> "DualEncoder":
        rng = np.random.default_rng(seed)
        v = len(vocab)
        scale = 1.0 / np.sqrt(d)
        params = {
            "q_emb": rng.normal(0.0, scale, size=(v, d)),
            "q_proj": rng.normal(0.0, scale, size=(d, d)),
            "q_bias": np.zeros(d),
            "p_emb": rng.normal(0.0, scale, size=(v, d)),
            "p_proj": rng.normal(0.0, scale, size=(d, d)),
            "p_bias": np.zeros(d),
        }
        return cls(vocab={t: i for i, t in enumerate(vocab)}, params=params, d=d)

    @classmethod
    def from_texts(cls, texts: Sequence[str], d: int = 64, seed: int = 0) -> "DualEncoder":
        """Build the vocabulary from training texts, then initialize."""
        terms = sorted({t.surface for text in texts for t in tokenize(text)})
        return cls.create(terms, d=d, seed=seed)

    def copy(self) -> "DualEncoder":
        return DualEncoder(
            vocab=dict(self.vocab),
            params={k: v.copy() for k, v in self.params.items()},
            d=self.d,
        )

    def save(self, path) -> None:
        meta = {"d": self.d, "vocab": sorted(self.vocab, key=self.vocab.get)}
        container.save(path, "encoder", meta, dict(self.params))

    @classmethod
    def load(cls, path) -> "DualEncoder":
        _, meta, arrays = container.load(path, kind="encoder")
        return cls(
            vocab={t: i for i, t in enumerate(meta["vocab"])},
            params={k: np.array(arrays[k]) for k in _PARAM_NAMES},
            d=meta["d"],
        )


@dataclass(frozen=True)
class IRTrainInstance:
    question: str
    positive: Passage
    hard_negatives: tuple[Passage, ...]

    def __post_init__(self):
        for neg in self.hard_negatives:
            if neg.id == self.positive.id:
                raise ValueError("positive passage listed among its hard negatives")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 6
    batch_size: int = 16
    warmup_steps: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.warmup_steps < 0:
            raise ValueError("warmup_steps must be non-negative")


# Hyperparameters used for adapting the full-size pre-trained retriever,
# and a small preset sized for the desk-scale towers here.
FULL_PRESET = TrainConfig(learning_rate=1e-5, epochs=6, batch_size=128, warmup_steps=1237)
DESK_PRESET = TrainConfig(learning_rate=0.05, epochs=6, batch_size=16, warmup_steps=0)


def _token_indices(encoder: DualEncoder, text: str) -> list[int]:
    return [encoder.vocab[t.surface] for t in tokenize(text) if t.surface in encoder.vocab]


def _mean_embedding(table: np.ndarray, idxs: list[int], d: int) -> np.ndarray:
    if not idxs:
        return np.zeros(d)
    return table[idxs].mean(axis=0)


def _encode(encoder: DualEncoder, text: str, side: str) -> np.ndarray:
    idxs = _token_indices(encoder, text)
    mean = _mean_embedding(encoder.params[f"{side}_emb"], idxs, encoder.d)
    return encoder.params[f"{side}_proj"] @ mean + encoder.params[f"{side}_bias"]


def encode_query(encoder: DualEncoder, text: str) -> np.ndarray:
    return _encode(encoder, text, "q")


def encode_passage(encoder: DualEncoder, text: str) -> np.ndarray:
    return _encode(encoder, text, "p")


def similarity(q_emb: np.ndarray, p_emb: np.ndarray) -> float:
    q = np.asarray(q_emb, dtype=float)
    p = np.asarray(p_emb, dtype=float)
    if q.shape != p.shape:
        raise ValueError(f"dimension mismatch: {q.shape} vs {p.shape}")
    return float(q @ p)


def _batch_forward(encoder: DualEncoder, batch: Sequence[IRTrainInstance]):
    """Shared forward pass: encodes questions and the deduplicated candidate
    pool (all positives + all hard negatives), computes logits and softmax."""
    if not batch:
        raise ValueError("batch must be non-empty")
    cand_texts: list[str] = []
    cand_pos: dict[str, int] = {}

    def cand_index(p: Passage) -> int:
        if p.id not in cand_pos:
            cand_pos[p.id] = len(cand_texts)
            cand_texts.append(p.text)
        return cand_pos[p.id]

    pos_idx = [cand_index(inst.positive) for inst in batch]
    for inst in batch:
        for neg in inst.hard_negatives:
            cand_index(neg)

    q_tok = [_token_indices(encoder, inst.question) for inst in batch]
    p_tok = [_token_indices(encoder, text) for text in cand_texts]
    q_mean = np.stack([_mean_embedding(encoder.params["q_emb"], t, encoder.d) for t in q_tok])
    p_mean = np.stack([_mean_embedding(encoder.params["p_emb"], t, encoder.d) for t in p_tok])
    q_out = q_mean @ encoder.params["q_proj"].T + encoder.params["q_bias"]
    p_out = p_mean @ encoder.params["p_proj"].T + encoder.params["p_bias"]
    logits = q_out @ p_out.T  # B x C
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    losses = -shifted[np.arange(len(batch)), pos_idx] + np.log(exp.sum(axis=1))
    return {
        "pos_idx": pos_idx,
        "q_tok": q_tok,
        "p_tok": p_tok,
        "q_mean": q_mean,
        "p_mean": p_mean,
        "q_out": q_out,
        "p_out": p_out,
        "probs": probs,
        "loss": float(losses.mean()),
    }


def batch_loss(encoder: DualEncoder, batch: Sequence[IRTrainInstance]) -> float:
    """Mean over questions of -log softmax(sim to positive) over the pooled
    in-batch candidates (own positive + all hard negatives + other
    questions' positives)."""
    return _batch_forward(encoder, batch)["loss"]


def loss_gradient(encoder: DualEncoder, batch: Sequence[IRTrainInstance]) -> dict[str, np.ndarray]:
    fwd = _batch_forward(encoder, batch)
    B = len(batch)
    grads = {name: np.zeros_like(encoder.params[name]) for name in _PARAM_NAMES}

    # dL/dlogits: softmax-cross-entropy, averaged over the batch.
    g_logits = fwd["probs"].copy()
    g_logits[np.arange(B), fwd["pos_idx"]] -= 1.0
    g_logits /= B

    g_q_out = g_logits @ fwd["p_out"]          # B x d
    g_p_out = g_logits.T @ fwd["q_out"]        # C x d

    for side, g_out, means, toks in (
        ("q", g_q_out, fwd["q_mean"], fwd["q_tok"]),
        ("p", g_p_out, fwd["p_mean"], fwd["p_tok"]),
    ):
        grads[f"{side}_proj"] += g_out.T @ means
        grads[f"{side}_bias"] += g_out.sum(axis=0)
        g_mean = g_out @ encoder.params[f"{side}_proj"]
        for row, idxs in enumerate(toks):
            if not idxs:
                continue
            share = g_mean[row] / len(idxs)
            for i in idxs:
                grads[f"{side}_emb"][i] += share
    return grads


def train(
    encoder: DualEncoder,
    instances: Sequence[IRTrainInstance],
    config: TrainConfig = DESK_PRESET,
) -> tuple[DualEncoder, list[float]]:
    """Mini-batch SGD with linear warmup; returns (trained copy, per-epoch
    mean loss). Shuffling and every other source of randomness derive from
    config.seed, so a fixed seed reproduces bit-identical parameters."""
    if not instances:
        raise ValueError("training requires at least one instance")
    model = encoder.copy()
    rng = np.random.default_rng(config.seed)
    trace: list[float] = []
    step = 0
    for _ in range(config.epochs):
        order = rng.permutation(len(instances))
        epoch_losses = []
        for start in range(0, len(instances), config.batch_size):
            batch = [instances[i] for i in order[start : start + config.batch_size]]
            grads = loss_gradient(model, batch)
            loss = batch_loss(model, batch)
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite loss {loss} at step {step}")
            epoch_losses.append(loss)
            if config.warmup_steps > 0:
                lr = config.learning_rate * min(1.0, (step + 1) / config.warmup_steps)
            else:
                lr = config.learning_rate
            for name in _PARAM_NAMES:
                model.params[name] -= lr * grads[name]
            step += 1
        trace.append(float(np.mean(epoch_losses)))
    return model, trace


def export_embeddings(encoder: DualEncoder, passages: Sequence[Passage]):
    """Yield JSONL lines {id, vector} of passage embeddings."""
    for p in passages:
        vec = encode_passage(encoder, p.text)
        yield json.dumps({"id": p.id, "vector": [float(x) for x in vec]}, sort_keys=True)
