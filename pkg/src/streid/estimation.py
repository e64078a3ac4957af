"""Fitting of camera transition probabilities and travel-time densities.

Two tables are kept side by side: an instance-level one keyed by the
walking-direction state observed at the earlier camera, and a camera-level
one that ignores the state. Which table is read, and how interval densities
are normalized, is chosen per call through :class:`Protocol`.
"""

from __future__ import annotations

import enum
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .types import CameraId, DataError, Observation, StateId

SQRT_2PI = math.sqrt(2.0 * math.pi)


class Protocol(str, enum.Enum):
    """Fitting/fusion regime.

    ``P1`` instance-level + decoupled fusion (the full method), ``P2``
    camera-level + decoupled, ``P3`` instance-level + coupled normalizer,
    ``P4`` camera-level + coupled. ``VISUAL_ONLY`` ignores spatial-temporal
    information entirely.
    """

    P1 = "p1"
    P2 = "p2"
    P3 = "p3"
    P4 = "p4"
    VISUAL_ONLY = "visual-only"

    @property
    def instance(self) -> bool:
        return self in (Protocol.P1, Protocol.P3)

    @property
    def coupled(self) -> bool:
        return self in (Protocol.P3, Protocol.P4)


class Mode(str, enum.Enum):
    PEAK_SCORE = "peak-score"
    NORMALIZED_DENSITY = "normalized-density"


class TransitionSample(NamedTuple):
    camera_e: CameraId
    state_e: StateId
    camera_l: CameraId
    delta: float


def _sort_key(obs: Observation):
    # equal timestamps resolve by ascending camera id
    return (obs.timestamp, obs.camera, obs.observation_id)


def extract_transitions(observations: Iterable[Observation]) -> List[TransitionSample]:
    """Consecutive same-identity hops, ordered by identity then time."""
    by_identity: Dict[str, List[Observation]] = defaultdict(list)
    for obs in observations:
        if obs.identity is None or obs.identity == "":
            raise DataError(
                f"observation {obs.observation_id!r} has no identity; "
                "transitions can only be extracted from labeled data"
            )
        by_identity[obs.identity].append(obs)

    samples: List[TransitionSample] = []
    for identity in sorted(by_identity):
        track = sorted(by_identity[identity], key=_sort_key)
        for a, b in zip(track, track[1:]):
            samples.append(
                TransitionSample(a.camera, a.state, b.camera, b.timestamp - a.timestamp)
            )
    return samples


def _check_protocol(protocol: Protocol) -> Protocol:
    protocol = Protocol(protocol)
    if protocol is Protocol.VISUAL_ONLY:
        raise ValueError("visual-only protocol carries no spatial-temporal model")
    return protocol


@dataclass(frozen=True)
class TransitionModel:
    """Empirical next-camera distributions with optional additive smoothing.

    ``instance_counts[(i, s)][j]`` counts hops from camera ``i`` in state
    ``s`` to camera ``j``; ``camera_counts[i][j]`` is the same tally
    marginalized over states.
    """

    cameras: Tuple[CameraId, ...]
    instance_counts: Dict[Tuple[CameraId, StateId], Dict[CameraId, int]]
    camera_counts: Dict[CameraId, Dict[CameraId, int]]
    epsilon: float = 0.0

    @property
    def n_cameras(self) -> int:
        return len(self.cameras)

    def _ratio(self, row: Optional[Dict[CameraId, int]], cam_l: CameraId) -> Optional[float]:
        if not row:
            return None
        total = sum(row.values())
        return (row.get(cam_l, 0) + self.epsilon) / (total + self.epsilon * self.n_cameras)

    def instance_row(self, cam_e: CameraId, state: StateId) -> Dict[CameraId, float]:
        row = self.instance_counts.get((cam_e, state))
        if not row:
            return {}
        return {j: self._ratio(row, j) for j in self.cameras}

    def camera_row(self, cam_e: CameraId) -> Dict[CameraId, float]:
        row = self.camera_counts.get(cam_e)
        if not row:
            return {}
        return {j: self._ratio(row, j) for j in self.cameras}

    def probability(
        self, cam_e: CameraId, state: StateId, cam_l: CameraId, protocol: Protocol = Protocol.P1
    ) -> float:
        protocol = _check_protocol(protocol)
        p = None
        if protocol.instance:
            p = self._ratio(self.instance_counts.get((cam_e, state)), cam_l)
        if p is None:
            p = self._ratio(self.camera_counts.get(cam_e), cam_l)
        if p is None:
            p = 1.0 / self.n_cameras if self.n_cameras else 0.0
        return p


def fit_transition_model(
    samples: Sequence[TransitionSample],
    epsilon: float = 0.0,
    cameras: Optional[Iterable[CameraId]] = None,
) -> TransitionModel:
    """Count hops into conditional next-camera probabilities.

    ``cameras`` fixes the camera set used for smoothing and the uniform
    fallback; it defaults to every camera appearing in ``samples``.
    """
    if not samples:
        raise DataError("cannot fit a transition model from zero samples")
    if not (epsilon >= 0 and math.isfinite(epsilon)):
        raise ValueError(f"epsilon must be finite and >= 0, got {epsilon!r}")

    seen = set()
    instance: Dict[Tuple[int, int], Dict[int, int]] = {}
    camera: Dict[int, Dict[int, int]] = {}
    for s in samples:
        seen.update((s.camera_e, s.camera_l))
        row = instance.setdefault((s.camera_e, s.state_e), {})
        row[s.camera_l] = row.get(s.camera_l, 0) + 1
        row = camera.setdefault(s.camera_e, {})
        row[s.camera_l] = row.get(s.camera_l, 0) + 1

    all_cameras = set(cameras) if cameras is not None else set()
    if cameras is not None and not seen <= all_cameras:
        raise DataError(f"samples reference cameras {sorted(seen - all_cameras)} outside {sorted(all_cameras)}")
    all_cameras |= seen
    return TransitionModel(
        cameras=tuple(sorted(all_cameras)),
        instance_counts={k: dict(sorted(v.items())) for k, v in sorted(instance.items())},
        camera_counts={k: dict(sorted(v.items())) for k, v in sorted(camera.items())},
        epsilon=float(epsilon),
    )


def transition_prob(
    model: TransitionModel,
    cam_e: CameraId,
    state: StateId,
    cam_l: CameraId,
    protocol: Protocol = Protocol.P1,
) -> float:
    return model.probability(cam_e, state, cam_l, protocol)


@dataclass(frozen=True)
class IntervalModel:
    """Per-key travel-time samples evaluated through a Gaussian Parzen window.

    ``z_hat_instance`` and ``z_hat_camera`` are the largest sample counts
    over all instance-level and camera-level keys; the coupled protocols use
    them as a shared denominator so that the area under each curve carries
    the relative traffic volume of its key.
    """

    sigma: float
    instance_samples: Dict[Tuple[CameraId, StateId, CameraId], np.ndarray]
    camera_samples: Dict[Tuple[CameraId, CameraId], np.ndarray]
    z_hat_instance: int = field(init=False)
    z_hat_camera: int = field(init=False)
    observed_rows: FrozenSet[Tuple[CameraId, StateId]] = field(init=False, repr=False)

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValueError(f"sigma must be finite and > 0, got {self.sigma!r}")
        for name in ("instance_samples", "camera_samples"):
            table = {}
            for key, arr in sorted(getattr(self, name).items()):
                arr = np.sort(np.asarray(arr, dtype=float))
                arr.setflags(write=False)
                table[key] = arr
            object.__setattr__(self, name, table)
        object.__setattr__(
            self, "z_hat_instance", max((len(v) for v in self.instance_samples.values()), default=0)
        )
        object.__setattr__(
            self, "z_hat_camera", max((len(v) for v in self.camera_samples.values()), default=0)
        )
        object.__setattr__(
            self, "observed_rows", frozenset((i, s) for (i, s, _) in self.instance_samples)
        )

    def count(self, cam_e: CameraId, state: Optional[StateId], cam_l: CameraId) -> int:
        """Z for an instance key, or the camera-level key when ``state`` is None."""
        if state is None:
            arr = self.camera_samples.get((cam_e, cam_l))
        else:
            arr = self.instance_samples.get((cam_e, state, cam_l))
        return 0 if arr is None else len(arr)

    def _resolve(self, cam_e, state, cam_l, protocol: Protocol):
        """Pick the sample set and denominator the protocol calls for."""
        if protocol.instance and (cam_e, state) in self.observed_rows:
            samples = self.instance_samples.get((cam_e, state, cam_l))
            z_hat = self.z_hat_instance
        else:
            samples = self.camera_samples.get((cam_e, cam_l))
            z_hat = self.z_hat_camera
        if samples is None or len(samples) == 0:
            return None, 0
        return samples, (z_hat if protocol.coupled else len(samples))

    def score(
        self,
        cam_e: CameraId,
        state: StateId,
        cam_l: CameraId,
        delta: float,
        protocol: Protocol = Protocol.P1,
        mode: Mode = Mode.PEAK_SCORE,
    ) -> float:
        protocol = _check_protocol(protocol)
        samples, z = self._resolve(cam_e, state, cam_l, protocol)
        if samples is None:
            return 0.0
        u = (samples - delta) / self.sigma
        # fsum is correctly rounded, hence independent of platform and order
        total = math.fsum(np.exp(-0.5 * u * u).tolist())
        value = total / z
        if Mode(mode) is Mode.NORMALIZED_DENSITY:
            value /= self.sigma * SQRT_2PI
        return value

    def curve(
        self,
        cam_e: CameraId,
        state: StateId,
        cam_l: CameraId,
        deltas: Sequence[float],
        protocol: Protocol = Protocol.P1,
        mode: Mode = Mode.NORMALIZED_DENSITY,
    ) -> np.ndarray:
        """Evaluate :meth:`score` on a grid of intervals.

        Vectorized for plotting; sums may differ from :meth:`score` in the
        last ulp since numpy's summation order is used.
        """
        protocol = _check_protocol(protocol)
        deltas = np.asarray(deltas, dtype=float)
        samples, z = self._resolve(cam_e, state, cam_l, protocol)
        if samples is None:
            return np.zeros_like(deltas)
        out = np.empty_like(deltas)
        step = max(1, 2_000_000 // len(samples))
        for start in range(0, deltas.size, step):
            u = (deltas[start:start + step, None] - samples[None, :]) / self.sigma
            out[start:start + step] = np.exp(-0.5 * u * u).sum(axis=1)
        out /= z
        if Mode(mode) is Mode.NORMALIZED_DENSITY:
            out /= self.sigma * SQRT_2PI
        return out


def fit_interval_model(samples: Sequence[TransitionSample], sigma: float = 100.0) -> IntervalModel:
    if not (sigma > 0 and math.isfinite(sigma)):
        raise ValueError(f"sigma must be finite and > 0, got {sigma!r}")
    instance: Dict[Tuple[int, int, int], List[float]] = defaultdict(list)
    camera: Dict[Tuple[int, int], List[float]] = defaultdict(list)
    for s in samples:
        instance[(s.camera_e, s.state_e, s.camera_l)].append(float(s.delta))
        camera[(s.camera_e, s.camera_l)].append(float(s.delta))
    return IntervalModel(
        sigma=float(sigma),
        instance_samples={k: np.array(v) for k, v in sorted(instance.items())},
        camera_samples={k: np.array(v) for k, v in sorted(camera.items())},
    )


def interval_score(
    model: IntervalModel,
    cam_e: CameraId,
    state: StateId,
    cam_l: CameraId,
    delta: float,
    protocol: Protocol = Protocol.P1,
    mode: Mode = Mode.PEAK_SCORE,
) -> float:
    return model.score(cam_e, state, cam_l, delta, protocol, mode)


@dataclass(frozen=True)
class STModel:
    """Transition and interval models fitted from the same training data."""

    transition: TransitionModel
    interval: IntervalModel
    topology: Dict[CameraId, int] = field(default_factory=dict)
    # regime the model was fitted for; rankers use it when none is given
    protocol: Protocol = Protocol.P1

    @property
    def sigma(self) -> float:
        return self.interval.sigma

    @property
    def epsilon(self) -> float:
        return self.transition.epsilon


def fit_st_model(
    observations: Sequence[Observation],
    sigma: float = 100.0,
    epsilon: float = 0.0,
    topology: Optional[Dict[CameraId, int]] = None,
    protocol: Protocol = Protocol.P1,
) -> STModel:
    samples = extract_transitions(observations)
    cameras = sorted(topology) if topology else None
    return STModel(
        transition=fit_transition_model(samples, epsilon, cameras),
        interval=fit_interval_model(samples, sigma),
        topology=dict(sorted((topology or {}).items())),
        protocol=Protocol(protocol),
    )
