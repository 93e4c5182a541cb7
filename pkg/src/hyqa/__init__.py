"""Hybrid sparse/dense retrieval and extractive question answering.

Subpackages cover the full pipeline: corpus ingestion and chunking,
BM25 inverted-index search, a trainable dual encoder, exact and
clustered maximum-inner-product search, span scoring, synthetic
QA-example generation with roundtrip filtering, score fusion, and
the evaluation metrics used throughout.
"""

__version__ = "0.1.0"
