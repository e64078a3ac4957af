"""Command-line interface: ``streid {simulate,fit,rank,eval,plot-data}``.

Exit codes: 0 success, 1 usage or validation error, 2 data error.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import math
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import io
from .estimation import Mode, Protocol, fit_st_model
from .evaluation import DEFAULT_KS, evaluate
from .fusion import FusionParams, rank_all
from .simulator import (
    ConfigError,
    bundled_config,
    generate_scenario,
    load_config,
    split_scenario,
    synth_similarity,
)
from .types import DataError, infer_topology, validate_observations

log = logging.getLogger("streid")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> List[float]:
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("expected at least one value")
    return values


def _int_list(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _check_positive(name: str, value: float) -> None:
    if not (math.isfinite(value) and value > 0):
        raise UsageError(f"--{name} must be a finite number > 0, got {value}")


def _check_non_negative(name: str, value: float) -> None:
    if not (math.isfinite(value) and value >= 0):
        raise UsageError(f"--{name} must be a finite number >= 0, got {value}")


# ---- commands ----------------------------------------------------------------


def cmd_simulate(args) -> int:
    if args.config is not None:
        config = load_config(args.config)
    else:
        config = bundled_config(args.demo)
    if args.seed is not None:
        doc = config.to_dict()
        doc["seed"] = args.seed
        config = load_config(doc)

    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    truth = generate_scenario(config)
    split = split_scenario(truth)
    sim = synth_similarity(truth, split.query, split.gallery)

    io.write_observations(out / "train.csv", split.train)
    io.write_observations(out / "query.csv", split.query)
    io.write_observations(out / "gallery.csv", split.gallery)
    io.write_topology(out / "topology.csv", config.topology)
    io.write_similarity(out / "similarity.csv", sim)
    (out / "truth.json").write_text(
        json.dumps(
            {"config": config.to_dict(), "identities": {k: [o.observation_id for o in v] for k, v in sorted(truth.by_identity().items())}},
            indent=1,
        )
        + "\n"
    )
    print(
        f"wrote {len(split.train)} train, {len(split.query)} query, "
        f"{len(split.gallery)} gallery observations to {out}"
    )
    return EXIT_OK


def cmd_fit(args) -> int:
    _check_positive("sigma", args.sigma)
    _check_non_negative("epsilon", args.epsilon)
    protocol = Protocol(args.protocol)

    train = io.read_observations(args.train)
    topology = io.read_topology(args.topology) if args.topology else infer_topology(train)
    validate_observations(train, topology)
    model = fit_st_model(train, args.sigma, args.epsilon, topology, protocol)
    io.save_model(args.output, model)

    print("camera_e,state_e,samples")
    for (i, s), row in model.transition.instance_counts.items():
        print(f"{i},{s},{sum(row.values())}")
    print(f"saved model to {args.output}", file=sys.stderr)
    return EXIT_OK


def _grid_path(base: Path, alpha: float, beta: float) -> Path:
    return base.with_name(f"{base.stem}_a{alpha:g}_b{beta:g}{base.suffix}")


def cmd_rank(args) -> int:
    for a in args.alpha:
        _check_non_negative("alpha", a)
    for b in args.beta:
        _check_non_negative("beta", b)
    protocol = Protocol(args.protocol) if args.protocol else None
    mode = Mode(args.mode)
    if protocol is not Protocol.VISUAL_ONLY and args.model is None:
        raise UsageError("--model is required unless --protocol visual-only")

    model = io.load_model(args.model) if args.model else None
    queries = io.read_observations(args.query)
    gallery = io.read_observations(args.gallery)
    if model is not None and model.topology:
        validate_observations(queries, model.topology)
        validate_observations(gallery, model.topology)
    sim = io.read_similarity(args.similarity)

    grid = list(itertools.product(args.alpha, args.beta))
    base = Path(args.output)
    for alpha, beta in grid:
        params = FusionParams(alpha, beta)
        rankings = rank_all(queries, gallery, sim, model, protocol, params, mode)
        path = base if len(grid) == 1 else _grid_path(base, alpha, beta)
        io.write_rankings(path, rankings)
        print(f"wrote {path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    if any(k <= 0 for k in args.cmc_ks) or not args.cmc_ks:
        raise UsageError(f"--cmc-ks must be positive integers, got {args.cmc_ks}")
    rankings = io.read_rankings(args.ranking)
    queries = {o.observation_id: o for o in io.read_observations(args.query)}
    gallery = {o.observation_id: o for o in io.read_observations(args.gallery)}
    report = evaluate(rankings, queries, gallery, args.cmc_ks)

    print(f"mAP: {report.mAP:.6f}")
    for k, acc in sorted(report.cmc.items()):
        print(f"CMC@{k}: {acc:.6f}")
    print(f"queries: {report.n_evaluated} evaluated, {len(report.skipped_queries)} skipped")
    if args.report:
        io.write_report(args.report, report)
    if args.per_query:
        io.write_per_query_ap(args.per_query, report)
    return EXIT_OK


def cmd_plot_data(args) -> int:
    protocol = Protocol(args.protocol)
    if protocol is Protocol.VISUAL_ONLY:
        raise UsageError("plot-data needs a spatial-temporal protocol (p1..p4)")
    mode = Mode(args.mode)
    if args.step is not None:
        _check_positive("step", args.step)

    model = io.load_model(args.model)
    iv = model.interval
    keys = []
    for cam_e, cam_l in args.pair:
        if protocol.instance:
            if args.state:
                states = args.state
            else:
                states = sorted(s for (i, s, j) in iv.instance_samples if i == cam_e and j == cam_l)
                if not states:
                    raise DataError(f"model has no samples for camera {cam_e} -> camera {cam_l}")
            for s in states:
                if (cam_e, s, cam_l) not in iv.instance_samples:
                    raise DataError(f"model has no samples for camera {cam_e} state {s} -> camera {cam_l}")
                keys.append((cam_e, s, cam_l))
        else:
            if (cam_e, cam_l) not in iv.camera_samples:
                raise DataError(f"model has no samples for camera {cam_e} -> camera {cam_l}")
            keys.append((cam_e, None, cam_l))

    def samples_of(key):
        i, s, j = key
        return iv.camera_samples[(i, j)] if s is None else iv.instance_samples[key]

    sigma = iv.sigma
    lo = args.delta_min if args.delta_min is not None else min(samples_of(k)[0] for k in keys) - 6 * sigma
    hi = args.delta_max if args.delta_max is not None else max(samples_of(k)[-1] for k in keys) + 6 * sigma
    step = args.step if args.step is not None else sigma / 50
    if hi <= lo:
        raise UsageError(f"empty interval range [{lo}, {hi}]")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    deltas = lo + step * np.arange(n)

    with open(args.output, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["camera_e", "state_e", "camera_l", "delta", "value"])
        for i, s, j in keys:
            # camera-level protocols ignore the state argument
            values = iv.curve(i, 0 if s is None else s, j, deltas, protocol, mode)
            for d, v in zip(deltas.tolist(), values.tolist()):
                w.writerow([i, "" if s is None else s, j, repr(d), repr(v)])
    print(f"wrote {len(keys)} curves x {n} points to {args.output}")
    return EXIT_OK


# ---- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="streid", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    protocols = [x.value for x in Protocol]
    modes = [x.value for x in Mode]

    s = sub.add_parser("simulate", help="generate a synthetic scenario")
    src = s.add_mutually_exclusive_group()
    src.add_argument("config", nargs="?", help="scenario YAML file")
    src.add_argument("--demo", default="demo", help="bundled scenario name (demo, ablation)")
    s.add_argument("--seed", type=int, help="override the config's master seed")
    s.add_argument("-o", "--output", required=True, help="output directory")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="fit transition and interval models")
    f.add_argument("train", help="training observation CSV")
    f.add_argument("--topology", help="CSV of camera,n_states (default: inferred)")
    f.add_argument("--sigma", type=float, default=100.0)
    f.add_argument("--epsilon", type=float, default=0.0)
    f.add_argument("--protocol", choices=protocols[:4], default="p1")
    f.add_argument("-o", "--output", required=True, help="model JSON path")
    f.set_defaults(func=cmd_fit)

    r = sub.add_parser("rank", help="rank galleries with the joint metric")
    r.add_argument("--model")
    r.add_argument("--query", required=True)
    r.add_argument("--gallery", required=True)
    r.add_argument("--similarity", required=True)
    r.add_argument("--alpha", type=_float_list, default=[0.15], help="one value or a comma list (grid)")
    r.add_argument("--beta", type=_float_list, default=[1.0], help="one value or a comma list (grid)")
    r.add_argument("--protocol", choices=protocols, default=None, help="default: the model's protocol (p1)")
    r.add_argument("--mode", choices=modes, default="peak-score")
    r.add_argument("-o", "--output", required=True)
    r.set_defaults(func=cmd_rank)

    e = sub.add_parser("eval", help="compute mAP and CMC for a ranking file")
    e.add_argument("ranking")
    e.add_argument("--query", required=True)
    e.add_argument("--gallery", required=True)
    e.add_argument("--cmc-ks", type=_int_list, default=list(DEFAULT_KS))
    e.add_argument("--report", help="write the report as JSON")
    e.add_argument("--per-query", help="write per-query AP CSV")
    e.set_defaults(func=cmd_eval)

    d = sub.add_parser("plot-data", help="export interval distribution curves")
    d.add_argument("--model", required=True)
    d.add_argument("--pair", nargs=2, type=int, action="append", required=True, metavar=("CAM_E", "CAM_L"))
    d.add_argument("--state", type=int, action="append", help="restrict to these states (default: all)")
    d.add_argument("--protocol", choices=protocols[:4], default="p1")
    d.add_argument("--mode", choices=modes, default="normalized-density")
    d.add_argument("--delta-min", type=float)
    d.add_argument("--delta-max", type=float)
    d.add_argument("--step", type=float, help="grid step (default sigma/50)")
    d.add_argument("-o", "--output", required=True)
    d.set_defaults(func=cmd_plot_data)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
