"""Synthetic multi-camera pedestrian traffic with known ground truth.

Every generative law here is a modeling choice of this package: pedestrians
walk a Markov chain over (camera, state) with travel times drawn from
Gaussian mixtures, and visual similarities come from two clamped normals
(same identity vs different identity).

Randomness is split into counter-indexed substreams of one master seed, so
identity ``k`` always gets the same trajectory no matter how many other
identities are generated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import yaml

from .types import DataError, Observation, SimilarityMatrix, StreidError

Key = Tuple[int, int, int]

_STREAM_TRAJECTORY = 0
_STREAM_SPLIT = 1
_STREAM_SIMILARITY = 2


class ConfigError(StreidError, ValueError):
    """Invalid scenario configuration; the message starts with the field path."""

    def __init__(self, path: str, reason: str):
        self.path = path
        super().__init__(f"{path}: {reason}")


def substream(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(keys)))


@dataclass(frozen=True)
class GaussianComponent:
    mean: float
    std: float
    weight: float


@dataclass(frozen=True)
class SimilarityNoise:
    intra_mean: float = 0.6
    intra_std: float = 0.15
    inter_mean: float = 0.4
    inter_std: float = 0.15


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    """Ground-truth camera network plus population and noise settings.

    Cameras are numbered ``0 .. len(states) - 1``. ``transitions[i, s, j]``
    is the probability of moving from camera ``i`` in state ``s`` to camera
    ``j``; ``travel[(i, s, j)]`` is the travel-time mixture for every cell
    with positive probability.
    """

    states: Tuple[int, ...]
    transitions: np.ndarray
    travel: Dict[Key, Tuple[GaussianComponent, ...]]
    n_identities: int
    mean_hops: float = 1.0
    hop_law: str = "fixed"
    time_window: float = 3600.0
    train_fraction: float = 0.5
    initial_weights: Optional[Tuple[float, ...]] = None
    arrival_states: Dict[Key, int] = field(default_factory=dict)
    similarity: SimilarityNoise = SimilarityNoise()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(int(n) for n in self.states))
        object.__setattr__(self, "transitions", np.asarray(self.transitions, dtype=float))
        if self.initial_weights is not None:
            object.__setattr__(self, "initial_weights", tuple(float(w) for w in self.initial_weights))
        self.validate()

    def __eq__(self, other):
        if not isinstance(other, ScenarioConfig):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    __hash__ = None

    @property
    def n_cameras(self) -> int:
        return len(self.states)

    @property
    def topology(self) -> Dict[int, int]:
        return {i: n for i, n in enumerate(self.states)}

    def validate(self) -> None:
        C = self.n_cameras
        if C == 0:
            raise ConfigError("cameras.states", "at least one camera is required")
        for i, n in enumerate(self.states):
            if n < 1:
                raise ConfigError(f"cameras.states[{i}]", f"state count must be >= 1, got {n}")
        P = self.transitions
        if P.ndim != 3 or P.shape[0] != C or P.shape[2] != C or P.shape[1] < max(self.states):
            raise ConfigError("transitions", f"expected shape ({C}, >= {max(self.states)}, {C}), got {P.shape}")
        for i, n in enumerate(self.states):
            for s in range(n):
                row = P[i, s]
                where = f"transitions[{i}][{s}]"
                if not np.all(np.isfinite(row)) or np.any(row < 0):
                    raise ConfigError(where, "probabilities must be finite and >= 0")
                if abs(math.fsum(row.tolist()) - 1.0) > 1e-9:
                    raise ConfigError(where, f"row sums to {math.fsum(row.tolist())!r}, expected 1")
                for j in np.flatnonzero(row > 0):
                    key = (i, s, int(j))
                    if key not in self.travel:
                        raise ConfigError("travel", f"no travel law for camera {i} state {s} -> camera {j}")
        for key, law in self.travel.items():
            where = f"travel[{key[0]},{key[1]},{key[2]}]"
            if not law:
                raise ConfigError(where, "empty mixture")
            for c in law:
                if not (c.mean > 0 and math.isfinite(c.mean)):
                    raise ConfigError(where, f"mean must be > 0, got {c.mean}")
                if not (c.std >= 0 and math.isfinite(c.std)):
                    raise ConfigError(where, f"std must be >= 0, got {c.std}")
                if c.weight < 0:
                    raise ConfigError(where, f"weight must be >= 0, got {c.weight}")
            if abs(math.fsum(c.weight for c in law) - 1.0) > 1e-9:
                raise ConfigError(where, "mixture weights must sum to 1")
        for key, st in self.arrival_states.items():
            if not 0 <= st < self.states[key[2]]:
                raise ConfigError(f"arrival_states[{key[0]},{key[1]},{key[2]}]", f"state {st} invalid at camera {key[2]}")
        if self.initial_weights is not None:
            w = self.initial_weights
            if len(w) != C or any(x < 0 for x in w) or abs(math.fsum(w) - 1.0) > 1e-9:
                raise ConfigError("cameras.initial_weights", f"need {C} non-negative weights summing to 1")
        if self.n_identities < 0:
            raise ConfigError("identities.count", "must be >= 0")
        if self.hop_law not in ("fixed", "poisson"):
            raise ConfigError("identities.hop_law", f"unknown hop law {self.hop_law!r}")
        if not self.mean_hops >= 0:
            raise ConfigError("identities.hops", "must be >= 0")
        if not self.time_window >= 0:
            raise ConfigError("identities.time_window", "must be >= 0")
        if not 0 <= self.train_fraction <= 1:
            raise ConfigError("identities.train_fraction", "must lie in [0, 1]")
        sim = self.similarity
        if sim.intra_std < 0 or sim.inter_std < 0:
            raise ConfigError("similarity", "standard deviations must be >= 0")

    # ---- YAML mapping -------------------------------------------------

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "ScenarioConfig":
        def need(mapping, name, path):
            if not isinstance(mapping, Mapping) or name not in mapping:
                raise ConfigError(path, "missing required field")
            return mapping[name]

        cams = need(doc, "cameras", "cameras")
        states = need(cams, "states", "cameras.states")
        if not isinstance(states, list):
            raise ConfigError("cameras.states", "must be a list of per-camera state counts")
        C, S = len(states), max(states, default=0)

        rows = need(doc, "transitions", "transitions")
        P = np.zeros((C, S, C))
        if not isinstance(rows, list) or len(rows) != C:
            raise ConfigError("transitions", f"expected one entry per camera ({C})")
        for i, cam_rows in enumerate(rows):
            if not isinstance(cam_rows, list) or len(cam_rows) != states[i]:
                raise ConfigError(f"transitions[{i}]", f"expected {states[i]} state rows")
            for s, row in enumerate(cam_rows):
                if not isinstance(row, list) or len(row) != C:
                    raise ConfigError(f"transitions[{i}][{s}]", f"expected {C} probabilities")
                try:
                    P[i, s] = [float(x) for x in row]
                except (TypeError, ValueError):
                    raise ConfigError(f"transitions[{i}][{s}]", "probabilities must be numbers") from None

        travel_doc = doc.get("travel", {}) or {}

        def parse_law(law, path):
            if not isinstance(law, list) or not law:
                raise ConfigError(path, "expected a list of [mean, std, weight] components")
            out = []
            for n, comp in enumerate(law):
                if not isinstance(comp, list) or len(comp) != 3:
                    raise ConfigError(f"{path}[{n}]", "expected [mean, std, weight]")
                try:
                    out.append(GaussianComponent(*(float(x) for x in comp)))
                except (TypeError, ValueError):
                    raise ConfigError(f"{path}[{n}]", "components must be numbers") from None
            return tuple(out)

        default = parse_law(travel_doc["default"], "travel.default") if "default" in travel_doc else None
        exact: Dict[Key, Tuple[GaussianComponent, ...]] = {}
        any_state: Dict[Tuple[int, int], Tuple[GaussianComponent, ...]] = {}
        arrival: Dict[Key, int] = {}
        for n, rule in enumerate(travel_doc.get("rules", []) or []):
            path = f"travel.rules[{n}]"
            src = int(need(rule, "from", f"{path}.from"))
            dst = int(need(rule, "to", f"{path}.to"))
            if not (0 <= src < C and 0 <= dst < C):
                raise ConfigError(path, f"camera out of range 0..{C - 1}")
            law = parse_law(need(rule, "law", f"{path}.law"), f"{path}.law")
            state = rule.get("state")
            keys = [(src, int(state), dst)] if state is not None else [(src, s, dst) for s in range(states[src])]
            if state is None:
                any_state[(src, dst)] = law
            else:
                exact[(src, int(state), dst)] = law
            if "arrival_state" in rule:
                for key in keys:
                    arrival[key] = int(rule["arrival_state"])

        travel: Dict[Key, Tuple[GaussianComponent, ...]] = {}
        for i in range(C):
            for s in range(states[i]):
                for j in range(C):
                    law = exact.get((i, s, j)) or any_state.get((i, j)) or default
                    if law is not None and P[i, s, j] > 0:
                        travel[(i, s, j)] = law

        ids = doc.get("identities", {}) or {}
        sim = doc.get("similarity", {}) or {}
        intra = sim.get("intra", [0.6, 0.15])
        inter = sim.get("inter", [0.4, 0.15])
        try:
            return cls(
                states=tuple(int(n) for n in states),
                transitions=P,
                travel=travel,
                n_identities=int(need(ids, "count", "identities.count")),
                mean_hops=float(ids.get("hops", 1)),
                hop_law=str(ids.get("hop_law", "fixed")),
                time_window=float(ids.get("time_window", 3600.0)),
                train_fraction=float(ids.get("train_fraction", 0.5)),
                initial_weights=cams.get("initial_weights"),
                arrival_states=arrival,
                similarity=SimilarityNoise(float(intra[0]), float(intra[1]), float(inter[0]), float(inter[1])),
                seed=int(doc.get("seed", 0)),
            )
        except (TypeError, ValueError, IndexError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError("<root>", str(exc)) from None

    def to_dict(self) -> Dict[str, Any]:
        """Explicit per-cell form; ``from_dict(to_dict())`` reproduces the config."""
        rules = []
        for (i, s, j), law in sorted(self.travel.items()):
            rule = {"from": i, "state": s, "to": j, "law": [[c.mean, c.std, c.weight] for c in law]}
            if (i, s, j) in self.arrival_states:
                rule["arrival_state"] = self.arrival_states[(i, s, j)]
            rules.append(rule)
        cams: Dict[str, Any] = {"states": list(self.states)}
        if self.initial_weights is not None:
            cams["initial_weights"] = list(self.initial_weights)
        sim = self.similarity
        return {
            "seed": self.seed,
            "cameras": cams,
            "transitions": [
                [self.transitions[i, s].tolist() for s in range(n)] for i, n in enumerate(self.states)
            ],
            "travel": {"rules": rules},
            "identities": {
                "count": self.n_identities,
                "hops": self.mean_hops,
                "hop_law": self.hop_law,
                "time_window": self.time_window,
                "train_fraction": self.train_fraction,
            },
            "similarity": {"intra": [sim.intra_mean, sim.intra_std], "inter": [sim.inter_mean, sim.inter_std]},
        }


def load_config(source: Union[str, Path, Mapping[str, Any]]) -> ScenarioConfig:
    if isinstance(source, Mapping):
        return ScenarioConfig.from_dict(source)
    try:
        doc = yaml.safe_load(Path(source).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(str(source), f"not valid YAML: {exc}") from None
    if not isinstance(doc, Mapping):
        raise ConfigError(str(source), "top level must be a mapping")
    return ScenarioConfig.from_dict(doc)


def bundled_config(name: str = "demo") -> ScenarioConfig:
    """Load one of the packaged scenarios (``demo`` or ``ablation``)."""
    try:
        text = resources.files("streid").joinpath(f"data/{name}.yaml").read_text()
    except FileNotFoundError:
        raise ConfigError("--demo", f"no bundled scenario named {name!r}") from None
    return ScenarioConfig.from_dict(yaml.safe_load(text))


@dataclass(frozen=True)
class ScenarioTruth:
    observations: Tuple[Observation, ...]
    config: ScenarioConfig

    def by_identity(self) -> Dict[str, List[Observation]]:
        out: Dict[str, List[Observation]] = {}
        for obs in self.observations:
            out.setdefault(obs.identity, []).append(obs)
        return out


def _draw_travel(rng: np.random.Generator, law: Sequence[GaussianComponent]) -> float:
    weights = np.array([c.weight for c in law])
    for _ in range(1000):
        c = law[rng.choice(len(law), p=weights)]
        delta = rng.normal(c.mean, c.std)
        if delta > 0:
            return float(delta)
    raise ConfigError("travel", "could not draw a positive travel time; check the mixture")


def _identity_label(k: int) -> str:
    return f"id{k:05d}"


def generate_scenario(config: ScenarioConfig) -> ScenarioTruth:
    C = config.n_cameras
    init = np.full(C, 1.0 / C) if config.initial_weights is None else np.array(config.initial_weights)
    observations: List[Observation] = []
    for k in range(config.n_identities):
        rng = substream(config.seed, _STREAM_TRAJECTORY, k)
        label = _identity_label(k)
        cam = int(rng.choice(C, p=init))
        state = int(rng.integers(config.states[cam]))
        t = float(rng.uniform(0.0, config.time_window))
        if config.hop_law == "fixed":
            hops = int(round(config.mean_hops))
        else:
            hops = int(rng.poisson(config.mean_hops))
        observations.append(Observation(f"{label}_000", label, cam, t, state))
        for h in range(1, hops + 1):
            nxt = int(rng.choice(C, p=config.transitions[cam, state]))
            t += _draw_travel(rng, config.travel[(cam, state, nxt)])
            pinned = config.arrival_states.get((cam, state, nxt))
            state = pinned if pinned is not None else int(rng.integers(config.states[nxt]))
            cam = nxt
            observations.append(Observation(f"{label}_{h:03d}", label, cam, t, state))
    return ScenarioTruth(tuple(observations), config)


@dataclass(frozen=True)
class ScenarioSplit:
    train: Tuple[Observation, ...]
    query: Tuple[Observation, ...]
    gallery: Tuple[Observation, ...]


def split_scenario(truth: ScenarioTruth, seed: Optional[int] = None) -> ScenarioSplit:
    """Assign whole identities to train or test; one query per test identity.

    Test identities with a single sighting go to the gallery only.
    """
    seed = truth.config.seed if seed is None else seed
    train, query, gallery = [], [], []
    for k, (label, track) in enumerate(sorted(truth.by_identity().items())):
        rng = substream(seed, _STREAM_SPLIT, k)
        if rng.uniform() < truth.config.train_fraction:
            train.extend(track)
            continue
        q = int(rng.integers(len(track))) if len(track) > 1 else -1
        for n, obs in enumerate(track):
            (query if n == q else gallery).append(obs)
    return ScenarioSplit(tuple(train), tuple(query), tuple(gallery))


def synth_similarity(
    truth: Optional[ScenarioTruth],
    queries: Sequence[Observation],
    gallery: Sequence[Observation],
    noise: Optional[SimilarityNoise] = None,
    seed: Optional[int] = None,
) -> SimilarityMatrix:
    """Draw visual scores: same identity from the intra law, otherwise inter."""
    if noise is None:
        noise = truth.config.similarity
    if seed is None:
        seed = truth.config.seed
    overlap = {o.observation_id for o in queries} & {o.observation_id for o in gallery}
    if overlap:
        raise DataError(f"query and gallery splits overlap, e.g. {sorted(overlap)[0]!r}")
    g_ids = np.array([o.identity for o in gallery], dtype=object)
    scores = np.empty((len(queries), len(gallery)))
    for r, q in enumerate(queries):
        rng = substream(seed, _STREAM_SIMILARITY, r)
        intra = rng.normal(noise.intra_mean, noise.intra_std, size=len(gallery))
        inter = rng.normal(noise.inter_mean, noise.inter_std, size=len(gallery))
        same = g_ids == q.identity if q.identity else np.zeros(len(gallery), dtype=bool)
        scores[r] = np.clip(np.where(same, intra, inter), 0.0, 1.0)
    return SimilarityMatrix(
        tuple(o.observation_id for o in queries), tuple(o.observation_id for o in gallery), scores
    )


def oracle_transition_estimate(
    source: Union[ScenarioTruth, Sequence[Observation]],
) -> Tuple[np.ndarray, np.ndarray]:
    """Brute-force hop counts and ratios, indexed ``[camera_e, state_e, camera_l]``.

    Deliberately naive: for each sighting, scan every sighting of the same
    identity for its immediate successor. Kept free of any code shared with
    :mod:`streid.estimation` so it can serve as an independent check.
    """
    obs = list(source.observations if isinstance(source, ScenarioTruth) else source)
    if not obs:
        return np.zeros((0, 0, 0)), np.zeros((0, 0, 0))
    n_cam = max(o.camera for o in obs) + 1
    n_state = max(o.state for o in obs) + 1
    counts = np.zeros((n_cam, n_state, n_cam), dtype=np.int64)
    groups: Dict[Optional[str], List[Observation]] = {}
    for o in obs:
        groups.setdefault(o.identity, []).append(o)
    for group in groups.values():
        for a in group:
            key_a = (a.timestamp, a.camera, a.observation_id)
            best = None
            for b in group:
                key_b = (b.timestamp, b.camera, b.observation_id)
                if key_b > key_a and (best is None or key_b < best):
                    best = key_b
            if best is not None:
                counts[a.camera, a.state, best[1]] += 1
    totals = counts.sum(axis=2, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        probs = np.where(totals > 0, counts / np.maximum(totals, 1), 0.0)
    return probs, counts
