"""mAP and CMC under the usual re-identification protocol."""

from __future__ import annotations

import logging
from typing import Dict, Iterable, Mapping, Optional, Sequence

import numpy as np

from .types import DataError, EvalReport, Observation, RankedList

logger = logging.getLogger(__name__)

DEFAULT_KS = (1, 5, 10)


def relevance_vector(query: Observation, ranked_gallery: Sequence[Observation]) -> np.ndarray:
    """Binary hit vector for a ranked gallery.

    Entries sharing both identity and camera with the query are junk and
    are dropped, so the result can be shorter than the gallery. Unlabeled
    gallery entries count as misses.
    """
    if not query.identity:
        raise DataError(f"query {query.observation_id!r} has no ground-truth identity")
    rel = []
    for g in ranked_gallery:
        same_id = g.identity == query.identity
        if same_id and g.camera == query.camera:
            continue
        rel.append(1 if same_id else 0)
    return np.array(rel, dtype=np.int8)


def average_precision(relevance: Sequence[int]) -> float:
    rel = np.asarray(relevance, dtype=bool)
    n_pos = int(rel.sum())
    if n_pos == 0:
        raise ValueError("average precision is undefined without positives")
    ranks = np.flatnonzero(rel) + 1
    hits = np.arange(1, n_pos + 1)
    return float(np.sum(hits / ranks) / n_pos)


def mean_average_precision(aps: Iterable[float]) -> float:
    aps = list(aps)
    if not aps:
        raise ValueError("no valid queries to average over")
    return float(np.mean(aps))


def cmc(relevances: Iterable[Sequence[int]], ks: Sequence[int] = DEFAULT_KS) -> Dict[int, float]:
    """Top-k accuracy over queries that have at least one positive."""
    ks = [int(k) for k in ks]
    if any(k <= 0 for k in ks):
        raise ValueError(f"ranks must be positive, got {ks}")
    first_hits = []
    for rel in relevances:
        hit = np.flatnonzero(np.asarray(rel, dtype=bool))
        if hit.size:
            first_hits.append(int(hit[0]) + 1)
    if not first_hits:
        return {k: 0.0 for k in ks}
    first = np.array(first_hits)
    return {k: float(np.mean(first <= k)) for k in ks}


def evaluate(
    rankings: Mapping[str, Sequence[str]] | Sequence[RankedList],
    queries: Mapping[str, Observation],
    gallery: Mapping[str, Observation],
    ks: Sequence[int] = DEFAULT_KS,
) -> EvalReport:
    """Score ranked gallery ids per query against ground truth.

    ``rankings`` maps query id to ranked gallery ids (or is a list of
    :class:`RankedList`). Queries with no cross-camera positive are skipped
    and listed in the report.
    """
    if not isinstance(rankings, Mapping):
        rankings = {r.query_id: r.gallery_ids for r in rankings}

    aps: Dict[str, float] = {}
    relevances = []
    skipped = []
    for qid, ranked_ids in rankings.items():
        if qid not in queries:
            raise DataError(f"ranking references unknown query id {qid!r}")
        missing = [gid for gid in ranked_ids if gid not in gallery]
        if missing:
            raise DataError(f"ranking for query {qid!r} references unknown gallery id {missing[0]!r}")
        rel = relevance_vector(queries[qid], [gallery[gid] for gid in ranked_ids])
        if not rel.any():
            skipped.append(qid)
            continue
        aps[qid] = average_precision(rel)
        relevances.append(rel)

    if skipped:
        logger.warning("%d queries without cross-camera positives were skipped", len(skipped))
    return EvalReport(
        mAP=mean_average_precision(aps.values()),
        cmc=cmc(relevances, ks),
        per_query_ap=aps,
        skipped_queries=tuple(skipped),
    )
