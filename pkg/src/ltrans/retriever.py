"""Exemplar retrieval and retrieval-quality metrics.

Retrieval ranks reference pairs by cosine similarity of dense embeddings
over the PL/SQL side, with a deterministic tie-break on ascending
reference id. Ranking quality is measured with NDCG@k (linear gain),
MRR@k and hit-style Recall@k against externally supplied graded
relevance judgments.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from .model import MalformedLine, MissingFile, ReferencePair, SampleUnit


class RetrievalError(Exception):
    pass


class DimensionMismatch(RetrievalError):
    pass


class ZeroVector(RetrievalError):
    pass


@dataclass
class RetrievedExemplar:
    pair: ReferencePair
    score: float
    rank: int  # 1-based


@dataclass
class RelevanceJudgments:
    query_id: str
    graded: dict[str, int]  # reference id -> non-negative relevance grade


def cosine_similarity(a: list[float], b: list[float]) -> float:
    if len(a) != len(b):
        raise DimensionMismatch(f"dimensions differ: {len(a)} vs {len(b)}")
    # hypot avoids squaring, and normalizing before the dot product keeps
    # every term O(1); naive sum-of-squares loses the value entirely once
    # components drop into the subnormal range
    norm_a = math.hypot(*a)
    norm_b = math.hypot(*b)
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroVector("cosine similarity undefined for zero vectors")
    value = sum((x / norm_a) * (y / norm_b) for x, y in zip(a, b))
    return max(-1.0, min(1.0, value))


def ensure_embedding(pair: ReferencePair, embedder) -> list[float]:
    """Return the pair's embedding, computing and caching it when missing."""
    if pair.embedding is None:
        pair.embedding = embedder.embed(pair.plsql_source).values
    return pair.embedding


def retrieve_top_k(
    query: SampleUnit,
    refs: list[ReferencePair],
    k: int,
    embedder,
) -> list[RetrievedExemplar]:
    """Top-k reference pairs by descending cosine score, ties by ascending id."""
    if k < 1:
        raise ValueError("k must be positive")
    if not refs:
        raise ValueError("reference set must be non-empty")
    query_vec = embedder.embed(query.plsql_source).values
    scored = [
        (cosine_similarity(query_vec, ensure_embedding(pair, embedder)), pair)
        for pair in refs
    ]
    scored.sort(key=lambda item: (-item[0], item[1].id))
    return [
        RetrievedExemplar(pair=pair, score=score, rank=rank)
        for rank, (score, pair) in enumerate(scored[:k], start=1)
    ]


def ndcg_at_k(ranked_ids: list[str], judgments: RelevanceJudgments, k: int) -> float:
    """Normalized discounted cumulative gain with linear gain; 0 when no grade is positive."""
    if k < 1:
        raise ValueError("k must be positive")
    dcg = sum(
        judgments.graded.get(ranked_id, 0) / math.log2(i + 1)
        for i, ranked_id in enumerate(ranked_ids[:k], start=1)
    )
    ideal = sorted(judgments.graded.values(), reverse=True)[:k]
    idcg = sum(grade / math.log2(i + 1) for i, grade in enumerate(ideal, start=1))
    if idcg == 0.0:
        return 0.0
    return dcg / idcg


def mrr_at_k(ranked_ids: list[str], judgments: RelevanceJudgments, k: int) -> float:
    """Reciprocal rank of the first relevant id within the top k, else 0."""
    if k < 1:
        raise ValueError("k must be positive")
    for i, ranked_id in enumerate(ranked_ids[:k], start=1):
        if judgments.graded.get(ranked_id, 0) > 0:
            return 1.0 / i
    return 0.0


def recall_at_k(ranked_ids: list[str], judgments: RelevanceJudgments, k: int) -> float:
    """1.0 iff any relevant id appears within the top k (hit@k), else 0.0."""
    if k < 1:
        raise ValueError("k must be positive")
    hit = any(judgments.graded.get(ranked_id, 0) > 0 for ranked_id in ranked_ids[:k])
    return 1.0 if hit else 0.0


def load_qrels(path: str | Path) -> dict[str, RelevanceJudgments]:
    """Load graded relevance judgments keyed by query id from a JSONL file."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(path)
    out: dict[str, RelevanceJudgments] = {}
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
                query_id = data["query_id"]
                graded = {str(ref): int(grade) for ref, grade in data["graded"].items()}
            except (ValueError, KeyError, TypeError, AttributeError) as exc:
                raise MalformedLine(path, line_no, str(exc)) from exc
            if any(grade < 0 for grade in graded.values()):
                raise MalformedLine(path, line_no, "relevance grades must be non-negative")
            if query_id in out:
                raise MalformedLine(path, line_no, f"duplicate query_id {query_id!r}")
            out[query_id] = RelevanceJudgments(query_id=query_id, graded=graded)
    return out
