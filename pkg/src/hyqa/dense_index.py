"""Maximum-inner-product search over passage embeddings.

Two indexes: an exact brute-force scan and a clustered inverted-file (IVF)
index. IVF clusters with Euclidean k-means but ranks probe clusters by
inner product with the query; this asymmetry is deliberate and standard.
Returned scores are always the exact inner products of the stored vectors,
so the IVF index only approximates the candidate set, never the score.
"""

from __future__ import annotations

import numpy as np

from . import container
from .scored import ScoredPassage

__all__ = ["DenseIndex", "IVFIndex", "build_dense_index", "dense_search", "build_ivf_index", "ivf_search"]


class DenseIndex:
    def __init__(self, ids: list[str], matrix: np.ndarray):
        self.ids = ids
        self.matrix = matrix  # N x d

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def d(self) -> int:
        return self.matrix.shape[1] if self.matrix.size else 0

    def save(self, path) -> None:
        container.save(
            path,
            "dense",
            {"ids": self.ids},
            {"matrix": self.matrix.astype("<f4")},
        )

    @classmethod
    def load(cls, path) -> "DenseIndex":
        _, meta, arrays = container.load(path, kind="dense")
        return cls(list(meta["ids"]), np.array(arrays["matrix"], dtype=np.float64))


def build_dense_index(ids: list[str], embeddings: np.ndarray) -> DenseIndex:
    matrix = np.asarray(embeddings, dtype=np.float64)
    if matrix.size == 0:
        matrix = matrix.reshape(0, 0 if matrix.ndim < 2 else matrix.shape[1])
    if matrix.ndim != 2:
        raise ValueError("embeddings must be a 2-D array")
    if len(ids) != matrix.shape[0]:
        raise ValueError(f"{len(ids)} ids but {matrix.shape[0]} embedding rows")
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate passage ids")
    return DenseIndex(list(ids), matrix)


def _rank(index: DenseIndex, q: np.ndarray, candidates: np.ndarray, k: int) -> list[ScoredPassage]:
    """Top-k of `candidates` by score desc, ties by ascending passage id.

    Scores are per-row dot products so exact and clustered search return
    bit-identical values for the same passage.
    """
    scores = np.array([index.matrix[i] @ q for i in candidates])
    id_arr = np.array(index.ids)[candidates]
    order = np.lexsort((id_arr, -scores))
    top = order[:k]
    return [ScoredPassage(str(id_arr[i]), float(scores[i]), "dense") for i in top]


def dense_search(index: DenseIndex, q_emb: np.ndarray, k: int) -> list[ScoredPassage]:
    if k < 1:
        raise ValueError("k must be >= 1")
    if index.n == 0:
        return []
    q = np.asarray(q_emb, dtype=np.float64)
    if q.shape != (index.d,):
        raise ValueError(f"query dimension {q.shape} does not match index d={index.d}")
    return _rank(index, q, np.arange(index.n), k)


class IVFIndex:
    def __init__(self, base: DenseIndex, centroids: np.ndarray, assignment: np.ndarray, n_probe: int):
        self.base = base
        self.centroids = centroids  # C x d
        self.assignment = assignment  # N, cluster index per row
        self.n_probe = n_probe
        self.members = [np.flatnonzero(assignment == c) for c in range(len(centroids))]


def _kmeans(matrix: np.ndarray, C: int, seed: int, iters: int = 25) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    n = matrix.shape[0]
    centroids = matrix[rng.choice(n, size=C, replace=False)].copy()
    assignment = np.zeros(n, dtype=np.int64)
    for _ in range(iters):
        d2 = ((matrix[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_assignment = d2.argmin(axis=1)
        for c in range(C):
            mask = new_assignment == c
            if mask.any():
                centroids[c] = matrix[mask].mean(axis=0)
            else:
                # Re-seed an empty cluster from the largest cluster's
                # farthest member.
                sizes = np.bincount(new_assignment, minlength=C)
                big = int(sizes.argmax())
                members = np.flatnonzero(new_assignment == big)
                far = members[d2[members, big].argmax()]
                centroids[c] = matrix[far]
                new_assignment[far] = c
        if np.array_equal(new_assignment, assignment):
            assignment = new_assignment
            break
        assignment = new_assignment
    return centroids, assignment


def build_ivf_index(index: DenseIndex, C: int, n_probe: int, seed: int = 0) -> IVFIndex:
    if not 1 <= C <= index.n:
        raise ValueError(f"C={C} must lie in [1, N={index.n}]")
    if not 1 <= n_probe <= C:
        raise ValueError(f"n_probe={n_probe} must lie in [1, C={C}]")
    centroids, assignment = _kmeans(index.matrix, C, seed)
    return IVFIndex(index, centroids, assignment, n_probe)


def ivf_search(ivf: IVFIndex, q_emb: np.ndarray, k: int, n_probe: int | None = None) -> list[ScoredPassage]:
    if k < 1:
        raise ValueError("k must be >= 1")
    index = ivf.base
    if index.n == 0:
        return []
    q = np.asarray(q_emb, dtype=np.float64)
    if q.shape != (index.d,):
        raise ValueError(f"query dimension {q.shape} does not match index d={index.d}")
    probes = ivf.n_probe if n_probe is None else n_probe
    probes = min(probes, len(ivf.centroids))
    cluster_scores = ivf.centroids @ q
    chosen = np.argsort(-cluster_scores, kind="stable")[:probes]
    candidates = np.concatenate([ivf.members[c] for c in chosen]) if len(chosen) else np.array([], dtype=np.int64)
    if candidates.size == 0:
        return []
    return _rank(index, q, candidates, k)
