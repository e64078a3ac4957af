"""CSV and JSON readers/writers for observations, scores, models and reports.

Parsers are strict: a field that does not parse exactly is rejected with its
line number instead of being coerced. Floats are written with ``repr`` so a
write/read cycle is bit-exact.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Union

import numpy as np

from .estimation import IntervalModel, Protocol, STModel, TransitionModel
from .types import DataError, EvalReport, Observation, RankedList, SimilarityMatrix

PathLike = Union[str, Path]

OBSERVATION_HEADER = ["observation_id", "identity", "camera", "timestamp", "state"]
TOPOLOGY_HEADER = ["camera", "n_states"]
RANKING_HEADER = ["query_id", "rank", "gallery_id", "S", "p_spa", "p_tem", "P", "joint"]
MODEL_FORMAT = "streid-model"
MODEL_VERSION = 1


def _fmt(x: float) -> str:
    return repr(float(x))


def _parse_int(text: str, what: str, where: str) -> int:
    t = text.strip()
    if not t or not (t.isdigit() or (t[0] == "-" and t[1:].isdigit())):
        raise DataError(f"{where}: {what} must be an integer, got {text!r}")
    return int(t)


def _parse_float(text: str, what: str, where: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"{where}: {what} must be a number, got {text!r}") from None
    if not math.isfinite(value):
        raise DataError(f"{where}: {what} must be finite, got {text!r}")
    return value


def _open_rows(path: PathLike, header: Sequence[str]):
    fh = open(path, newline="")
    reader = csv.reader(fh)
    first = next(reader, None)
    if first is None or [c.strip() for c in first] != list(header):
        fh.close()
        raise DataError(f"{path}:1: expected header {','.join(header)!r}, got {first!r}")
    return fh, reader


# ---- observations --------------------------------------------------------


def read_observations(path: PathLike) -> List[Observation]:
    fh, reader = _open_rows(path, OBSERVATION_HEADER)
    out: List[Observation] = []
    seen = set()
    with fh:
        for row in reader:
            where = f"{path}:{reader.line_num}"
            if not row:
                continue
            if len(row) != len(OBSERVATION_HEADER):
                raise DataError(f"{where}: expected {len(OBSERVATION_HEADER)} fields, got {len(row)}")
            oid, identity, camera, timestamp, state = row
            if not oid:
                raise DataError(f"{where}: empty observation_id")
            if oid in seen:
                raise DataError(f"{where}: duplicate observation_id {oid!r}")
            seen.add(oid)
            ts = _parse_float(timestamp, "timestamp", where)
            if ts < 0:
                raise DataError(f"{where}: timestamp must be >= 0, got {timestamp!r}")
            cam = _parse_int(camera, "camera", where)
            st = _parse_int(state, "state", where)
            if cam < 0 or st < 0:
                raise DataError(f"{where}: camera and state must be non-negative")
            out.append(Observation(oid, identity or None, cam, ts, st))
    return out


def write_observations(path: PathLike, observations: Iterable[Observation]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(OBSERVATION_HEADER)
        for o in observations:
            w.writerow([o.observation_id, o.identity or "", o.camera, _fmt(o.timestamp), o.state])


def read_topology(path: PathLike) -> Dict[int, int]:
    fh, reader = _open_rows(path, TOPOLOGY_HEADER)
    topo: Dict[int, int] = {}
    with fh:
        for row in reader:
            where = f"{path}:{reader.line_num}"
            if not row:
                continue
            if len(row) != 2:
                raise DataError(f"{where}: expected 2 fields, got {len(row)}")
            cam = _parse_int(row[0], "camera", where)
            n = _parse_int(row[1], "n_states", where)
            if cam < 0 or n < 1 or cam in topo:
                raise DataError(f"{where}: invalid or duplicate topology entry {row!r}")
            topo[cam] = n
    return dict(sorted(topo.items()))


def write_topology(path: PathLike, topology: Dict[int, int]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TOPOLOGY_HEADER)
        for cam, n in sorted(topology.items()):
            w.writerow([cam, n])


# ---- similarity ------------------------------------------------------------


def read_similarity(path: PathLike) -> SimilarityMatrix:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or len(header) < 1:
            raise DataError(f"{path}:1: missing gallery id header row")
        gallery_ids = header[1:]
        query_ids, rows = [], []
        for row in reader:
            where = f"{path}:{reader.line_num}"
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{where}: expected {len(header)} fields, got {len(row)}")
            query_ids.append(row[0])
            rows.append([_parse_float(c, "score", where) for c in row[1:]])
    if len(set(gallery_ids)) != len(gallery_ids) or len(set(query_ids)) != len(query_ids):
        raise DataError(f"{path}: duplicate query or gallery ids")
    scores = np.array(rows, dtype=float).reshape(len(query_ids), len(gallery_ids))
    if np.any(scores < 0):
        raise DataError(f"{path}: similarity scores must be non-negative")
    return SimilarityMatrix(tuple(query_ids), tuple(gallery_ids), scores)


def write_similarity(path: PathLike, sim: SimilarityMatrix) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["query_id", *sim.gallery_ids])
        for qid, row in zip(sim.query_ids, sim.scores):
            w.writerow([qid, *(_fmt(x) for x in row)])


# ---- model -------------------------------------------------------------------


def model_to_dict(model: STModel) -> dict:
    tm, im = model.transition, model.interval
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "protocol": model.protocol.value,
        "sigma": im.sigma,
        "epsilon": tm.epsilon,
        "cameras": list(tm.cameras),
        "topology": [{"camera": c, "n_states": n} for c, n in sorted(model.topology.items())],
        "transitions": {
            "instance": [
                {"camera_e": i, "state_e": s, "counts": [[j, c] for j, c in row.items()]}
                for (i, s), row in tm.instance_counts.items()
            ],
            "camera": [
                {"camera_e": i, "counts": [[j, c] for j, c in row.items()]}
                for i, row in tm.camera_counts.items()
            ],
        },
        "intervals": {
            "z_hat_instance": im.z_hat_instance,
            "z_hat_camera": im.z_hat_camera,
            "instance": [
                {"camera_e": i, "state_e": s, "camera_l": j, "count": len(d), "deltas": d.tolist()}
                for (i, s, j), d in im.instance_samples.items()
            ],
            "camera": [
                {"camera_e": i, "camera_l": j, "count": len(d), "deltas": d.tolist()}
                for (i, j), d in im.camera_samples.items()
            ],
        },
    }


def model_from_dict(doc: dict) -> STModel:
    if doc.get("format") != MODEL_FORMAT or doc.get("version") != MODEL_VERSION:
        raise DataError(f"not a {MODEL_FORMAT} v{MODEL_VERSION} document")
    try:
        tr, iv = doc["transitions"], doc["intervals"]
        transition = TransitionModel(
            cameras=tuple(int(c) for c in doc["cameras"]),
            instance_counts={
                (int(r["camera_e"]), int(r["state_e"])): {int(j): int(c) for j, c in r["counts"]}
                for r in tr["instance"]
            },
            camera_counts={int(r["camera_e"]): {int(j): int(c) for j, c in r["counts"]} for r in tr["camera"]},
            epsilon=float(doc["epsilon"]),
        )
        interval = IntervalModel(
            sigma=float(doc["sigma"]),
            instance_samples={
                (int(r["camera_e"]), int(r["state_e"]), int(r["camera_l"])): np.array(r["deltas"], dtype=float)
                for r in iv["instance"]
            },
            camera_samples={
                (int(r["camera_e"]), int(r["camera_l"])): np.array(r["deltas"], dtype=float) for r in iv["camera"]
            },
        )
        topology = {int(r["camera"]): int(r["n_states"]) for r in doc.get("topology", [])}
        protocol = Protocol(doc.get("protocol", "p1"))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed model document: {exc}") from None
    if interval.z_hat_instance != iv["z_hat_instance"] or interval.z_hat_camera != iv["z_hat_camera"]:
        raise DataError("model document normalizers disagree with its sample lists")
    return STModel(transition, interval, topology, protocol)


def save_model(path: PathLike, model: STModel) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n")


def load_model(path: PathLike) -> STModel:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not valid JSON ({exc})") from None
    return model_from_dict(doc)


# ---- rankings and reports --------------------------------------------------


def write_rankings(path: PathLike, rankings: Iterable[RankedList]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RANKING_HEADER)
        for rl in rankings:
            for rank, e in enumerate(rl.entries, start=1):
                w.writerow(
                    [rl.query_id, rank, e.gallery_id, _fmt(e.S), _fmt(e.p_spa), _fmt(e.p_tem), _fmt(e.P), _fmt(e.joint)]
                )


def read_rankings(path: PathLike) -> Dict[str, List[str]]:
    """Ranked gallery ids per query, in file order of the ``rank`` column."""
    fh, reader = _open_rows(path, RANKING_HEADER)
    ranked: Dict[str, List[tuple]] = {}
    with fh:
        for row in reader:
            where = f"{path}:{reader.line_num}"
            if not row:
                continue
            if len(row) != len(RANKING_HEADER):
                raise DataError(f"{where}: expected {len(RANKING_HEADER)} fields, got {len(row)}")
            rank = _parse_int(row[1], "rank", where)
            ranked.setdefault(row[0], []).append((rank, row[2]))
    out = {}
    for qid, items in ranked.items():
        items.sort()
        if [r for r, _ in items] != list(range(1, len(items) + 1)):
            raise DataError(f"{path}: ranks for query {qid!r} are not 1..{len(items)}")
        out[qid] = [gid for _, gid in items]
    return out


def report_to_dict(report: EvalReport) -> dict:
    return {
        "mAP": report.mAP,
        "cmc": {str(k): v for k, v in sorted(report.cmc.items())},
        "n_queries": report.n_evaluated,
        "n_skipped": len(report.skipped_queries),
        "skipped_queries": list(report.skipped_queries),
    }


def write_report(path: PathLike, report: EvalReport) -> None:
    Path(path).write_text(json.dumps(report_to_dict(report), indent=1) + "\n")


def write_per_query_ap(path: PathLike, report: EvalReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["query_id", "ap"])
        for qid, ap in report.per_query_ap.items():
            w.writerow([qid, _fmt(ap)])
