"""Fusion of spatial-temporal evidence with visual similarity, and ranking."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .estimation import Mode, Protocol, STModel
from .types import DataError, Observation, RankedEntry, RankedList, SimilarityMatrix


@dataclass(frozen=True)
class FusionParams:
    """Scales of the spatial (``alpha``) and temporal (``beta``) terms."""

    alpha: float = 0.15
    beta: float = 1.0

    def __post_init__(self):
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {v!r}")


DEFAULT_PARAMS = FusionParams()


def _sigmoid(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x))


def fuse(p_spa: float, p_tem: float, params: FusionParams = DEFAULT_PARAMS) -> float:
    """Soft combination of the two constraints, lands in [0.5, 1)."""
    return _sigmoid(params.alpha * p_spa + params.beta * p_tem)


def fuse_coupled(p_st: float, beta: float = 1.0) -> float:
    # the exponent sign is negative so that a larger coupled score raises P
    return _sigmoid(beta * p_st)


def joint_score(S: float, P: float) -> float:
    return S * P


def order_pair(a: Observation, b: Observation) -> Tuple[Observation, Observation]:
    """Return (earlier, later); ties on timestamp go to the lower camera id."""
    if (b.timestamp, b.camera) < (a.timestamp, a.camera):
        return b, a
    return a, b


def st_probability(
    query: Observation,
    gallery: Observation,
    model: Optional[STModel],
    protocol: Protocol = Protocol.P1,
    params: FusionParams = DEFAULT_PARAMS,
    mode: Mode = Mode.PEAK_SCORE,
) -> Tuple[float, float, float]:
    """Spatial score, temporal score and fused factor for one image pair.

    Coupled protocols have a single entangled score; it is reported in both
    the spatial and temporal slots.
    """
    protocol = Protocol(protocol)
    if protocol is Protocol.VISUAL_ONLY:
        return 0.0, 0.0, 1.0
    if model is None:
        raise ValueError(f"protocol {protocol.value} needs a fitted model")

    earlier, later = order_pair(query, gallery)
    delta = later.timestamp - earlier.timestamp
    key = (earlier.camera, earlier.state, later.camera)

    p_tem = model.interval.score(*key, delta, protocol, mode)
    p_tem = min(max(p_tem, 0.0), 1.0)
    if protocol.coupled:
        return p_tem, p_tem, fuse_coupled(p_tem, params.beta)
    p_spa = model.transition.probability(*key, protocol)
    return p_spa, p_tem, fuse(p_spa, p_tem, params)


def rank_gallery(
    query: Observation,
    gallery: Sequence[Observation],
    similarity_row: Sequence[float],
    model: Optional[STModel],
    protocol: Protocol = Protocol.P1,
    params: FusionParams = DEFAULT_PARAMS,
    mode: Mode = Mode.PEAK_SCORE,
) -> RankedList:
    """Score every gallery entry against ``query`` and sort by joint score.

    Ties are broken by ascending gallery position, so the output is a total
    order and identical inputs always give identical lists.
    """
    row = np.asarray(similarity_row, dtype=float)
    if row.shape != (len(gallery),):
        raise DataError(
            f"similarity row of length {row.size} does not match gallery of size {len(gallery)}"
        )
    entries = []
    for idx, (g, S) in enumerate(zip(gallery, row.tolist())):
        p_spa, p_tem, P = st_probability(query, g, model, protocol, params, mode)
        entries.append(RankedEntry(idx, g.observation_id, S, p_spa, p_tem, P, joint_score(S, P)))
    entries.sort(key=lambda e: (-e.joint, e.gallery_index))
    return RankedList(query.observation_id, tuple(entries))


def rank_all(
    queries: Sequence[Observation],
    gallery: Sequence[Observation],
    similarity: SimilarityMatrix,
    model: Optional[STModel],
    protocol: Optional[Protocol] = None,
    params: FusionParams = DEFAULT_PARAMS,
    mode: Mode = Mode.PEAK_SCORE,
) -> List[RankedList]:
    """Rank the whole gallery for every query of ``similarity``.

    Metadata is matched to the matrix by id; queries come out in matrix row
    order and each gallery in matrix column order before sorting.
    """
    if protocol is None:
        protocol = model.protocol if model is not None else Protocol.VISUAL_ONLY
    q_meta = {o.observation_id: o for o in queries}
    g_meta = {o.observation_id: o for o in gallery}
    for ids, meta, what in ((similarity.query_ids, q_meta, "query"), (similarity.gallery_ids, g_meta, "gallery")):
        unknown = [i for i in ids if i not in meta]
        if unknown:
            raise DataError(f"similarity matrix references unknown {what} id {unknown[0]!r}")
    ordered_gallery = [g_meta[g] for g in similarity.gallery_ids]
    return [
        rank_gallery(q_meta[qid], ordered_gallery, row, model, protocol, params, mode)
        for qid, row in zip(similarity.query_ids, similarity.scores)
    ]
