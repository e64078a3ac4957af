"""Domain types shared across fitting, ranking and evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

CameraId = int
StateId = int
# camera id -> number of direction states at that camera
Topology = Mapping[CameraId, int]


class StreidError(Exception):
    """Base class for all errors raised by this package."""


class DataError(StreidError, ValueError):
    """Malformed or inconsistent input data."""


class ValidationError(DataError):
    """An observation violates the declared camera topology."""

    def __init__(self, observation_id: str, reason: str):
        self.observation_id = observation_id
        self.reason = reason
        super().__init__(f"observation {observation_id!r}: {reason}")


@dataclass(frozen=True)
class Observation:
    """A single sighting of a (possibly unlabeled) pedestrian."""

    observation_id: str
    identity: Optional[str]
    camera: CameraId
    timestamp: float
    state: StateId = 0


@dataclass(frozen=True)
class SimilarityMatrix:
    """Dense query x gallery visual similarity scores."""

    query_ids: Tuple[str, ...]
    gallery_ids: Tuple[str, ...]
    scores: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=float)
        if scores.shape != (len(self.query_ids), len(self.gallery_ids)):
            raise DataError(
                f"similarity matrix shape {scores.shape} does not match "
                f"{len(self.query_ids)} queries x {len(self.gallery_ids)} gallery ids"
            )
        if not np.all(np.isfinite(scores)):
            raise DataError("similarity matrix contains non-finite entries")
        scores.setflags(write=False)
        object.__setattr__(self, "query_ids", tuple(self.query_ids))
        object.__setattr__(self, "gallery_ids", tuple(self.gallery_ids))
        object.__setattr__(self, "scores", scores)

    def row(self, query_id: str) -> np.ndarray:
        return self.scores[self.query_ids.index(query_id)]


@dataclass(frozen=True)
class RankedEntry:
    gallery_index: int
    gallery_id: str
    S: float
    p_spa: float
    p_tem: float
    P: float
    joint: float


@dataclass(frozen=True)
class RankedList:
    """Gallery entries of one query ordered by joint score."""

    query_id: str
    entries: Tuple[RankedEntry, ...]

    @property
    def gallery_ids(self) -> List[str]:
        return [e.gallery_id for e in self.entries]


@dataclass(frozen=True)
class EvalReport:
    mAP: float
    cmc: Dict[int, float]
    per_query_ap: Dict[str, float] = field(default_factory=dict)
    skipped_queries: Tuple[str, ...] = ()

    @property
    def n_evaluated(self) -> int:
        return len(self.per_query_ap)


def infer_topology(observations: Iterable[Observation]) -> Dict[CameraId, int]:
    """Smallest topology consistent with the observed (camera, state) pairs."""
    topo: Dict[CameraId, int] = {}
    for obs in observations:
        topo[obs.camera] = max(topo.get(obs.camera, 0), obs.state + 1)
    return dict(sorted(topo.items()))


def validate_observations(
    observations: Sequence[Observation], topology: Topology
) -> Sequence[Observation]:
    """Check cameras, states and timestamps against ``topology``.

    Returns the input unchanged so the call can be chained. Raises
    :class:`ValidationError` naming the first offending observation.
    """
    for obs in observations:
        if obs.camera not in topology:
            raise ValidationError(obs.observation_id, f"unknown camera {obs.camera}")
        n_states = topology[obs.camera]
        if not 0 <= obs.state < n_states:
            raise ValidationError(
                obs.observation_id,
                f"state {obs.state} out of range for camera {obs.camera} "
                f"with {n_states} states",
            )
        if not math.isfinite(obs.timestamp) or obs.timestamp < 0:
            raise ValidationError(
                obs.observation_id, f"invalid timestamp {obs.timestamp!r}"
            )
    return observations
