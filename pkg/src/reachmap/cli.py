"""Command-line entry point: gen, fit, predict, bench, map.

Exit codes: 0 success, 1 domain or I/O error (one ``error: <kind>: <detail>``
line on stderr), 2 usage error.  Every file write is atomic (temp file plus
rename) and no command mutates its inputs.  Randomness never comes from the
clock: fitting and generation require an explicit ``--seed`` and benchmarks a
``master_seed`` in their config.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

from . import __version__
from .domain import (
    Workspace,
    features_from_xyz,
    load_dataset_csv,
    save_dataset_csv,
    validate_dataset,
)
from .errors import MissingSeed, ReachmapError
from .evaluation import (
    MODEL_KINDS,
    bench_config_from_json,
    bench_rows_to_csv,
    format_bench_table,
    model_entry,
    run_benchmark,
)
from .fileio import write_bytes_atomic, write_text_atomic
from .mapgen import build_grid, difficulty_map, export_map_csv, render_svg_slice
from .model_io import load_model, save_model
from .synth import generate_dataset, load_dgp_config, save_dgp_config


@dataclass(frozen=True)
class Generate:
    dgp_config: str
    n0: int
    n1: int
    seed: Optional[int]
    out: str


@dataclass(frozen=True)
class Fit:
    data: str
    model: str
    hyper: dict
    seed: Optional[int]
    out: str


@dataclass(frozen=True)
class Predict:
    model: str
    x: float
    y: float
    z: float


@dataclass(frozen=True)
class Bench:
    config: str
    out: str


@dataclass(frozen=True)
class MapCmd:
    model: str
    z_slice: float
    resolution: float
    out_svg: Optional[str]
    out_csv: Optional[str]


Command = Union[Generate, Fit, Predict, Bench, MapCmd]

# which fit flags each model kind accepts
_FIT_FLAGS = {
    "causal_tree": ("max_depth", "min_group_leaf", "honest_fraction"),
    "causal_forest": (
        "max_depth",
        "min_group_leaf",
        "honest_fraction",
        "n_trees",
        "subsample_ratio",
    ),
    "t_cart": ("max_depth", "min_leaf"),
    "t_forest": ("n_trees", "max_depth", "min_leaf", "features_per_split"),
    "t_knn": ("k", "standardize"),
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reachmap",
        description=(
            "Personalized reaching-task difficulty: synthetic data generation, "
            "honest causal trees and T-learner baselines, benchmarking, and "
            "difficulty maps."
        ),
    )
    parser.add_argument("--version", action="version", version=f"reachmap {__version__}")
    parser.add_argument(
        "--threads",
        type=int,
        default=os.cpu_count() or 1,
        help="upper bound on worker parallelism (current implementation runs "
        "single-threaded; the flag is an accepted cap, default: available cores)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="draw a synthetic dataset from a DGP config")
    p.add_argument("--dgp", required=True, help="path to a DGP text config")
    p.add_argument("--n0", type=int, required=True, help="number of control samples")
    p.add_argument("--n1", type=int, required=True, help="number of individual samples")
    p.add_argument("--seed", type=int, help="generation seed (required to run)")
    p.add_argument("--out", required=True, help="output dataset CSV path; a "
                   "<out>.truth.cfg sidecar records the generating process")

    p = sub.add_parser("fit", help="fit a model on a dataset CSV")
    p.add_argument("--data", required=True, help="dataset CSV path")
    p.add_argument("--model", required=True, choices=MODEL_KINDS)
    p.add_argument("--seed", type=int, help="fitting seed (required to run)")
    p.add_argument("--out", required=True, help="output model JSON path")
    p.add_argument("--max-depth", type=int, dest="max_depth",
                   help="tree depth limit (causal_tree/causal_forest default 6, "
                   "t_cart/t_forest default 8)")
    p.add_argument("--min-group-leaf", type=int, dest="min_group_leaf",
                   help="per-group minimum leaf size for causal models (default 5)")
    p.add_argument("--honest-fraction", type=float, dest="honest_fraction",
                   help="fraction of data used to choose the partition (default 0.5)")
    p.add_argument("--n-trees", type=int, dest="n_trees",
                   help="ensemble size (causal_forest default 50, t_forest default 100)")
    p.add_argument("--subsample-ratio", type=float, dest="subsample_ratio",
                   help="causal_forest per-tree subsample ratio (default 0.7)")
    p.add_argument("--min-leaf", type=int, dest="min_leaf",
                   help="t_cart/t_forest minimum leaf size (default 5)")
    p.add_argument("--features-per-split", type=int, dest="features_per_split",
                   help="t_forest features sampled per split (default 2)")
    p.add_argument("--k", type=int, help="t_knn neighbour count (default 5)")
    p.add_argument("--standardize", action="store_true", default=None,
                   help="t_knn: z-score features before distances (default off)")

    p = sub.add_parser("predict", help="evaluate a saved model at one task point")
    p.add_argument("--model", required=True, help="model JSON path")
    p.add_argument("--x", type=float, required=True)
    p.add_argument("--y", type=float, required=True)
    p.add_argument("--z", type=float, required=True)

    p = sub.add_parser("bench", help="run the multi-run benchmark protocol")
    p.add_argument("--config", required=True, help="benchmark JSON config path")
    p.add_argument("--out", required=True, help="output CSV path (table prints to stdout)")

    p = sub.add_parser("map", help="render difficulty maps from a saved model")
    p.add_argument("--model", required=True, help="model JSON path")
    p.add_argument("--z-slice", type=float, required=True, dest="z_slice")
    p.add_argument("--resolution", type=float, default=0.05,
                   help="grid cell size in meters (default 0.05)")
    p.add_argument("--out-svg", dest="out_svg", help="output SVG path")
    p.add_argument("--out-csv", dest="out_csv", help="output CSV path")
    return parser


def parse_args(argv: Optional[Sequence[str]] = None) -> Command:
    """Strict argv parsing into a Command; usage problems exit with code 2."""
    parser = _build_parser()
    ns = parser.parse_args(argv)

    if ns.threads < 1:
        parser.error(f"--threads must be >= 1, got {ns.threads}")
    for flag in ("x", "y", "z", "z_slice", "resolution", "honest_fraction",
                 "subsample_ratio"):
        value = getattr(ns, flag, None)
        if value is not None and not math.isfinite(value):
            parser.error(f"--{flag.replace('_', '-')} must be finite, got {value}")

    if ns.command == "gen":
        return Generate(ns.dgp, ns.n0, ns.n1, ns.seed, ns.out)
    if ns.command == "fit":
        hyper = {}
        for flag in (
            "max_depth",
            "min_group_leaf",
            "honest_fraction",
            "n_trees",
            "subsample_ratio",
            "min_leaf",
            "features_per_split",
            "k",
            "standardize",
        ):
            value = getattr(ns, flag)
            if value is None:
                continue
            if flag not in _FIT_FLAGS[ns.model]:
                parser.error(
                    f"--{flag.replace('_', '-')} does not apply to model {ns.model!r}"
                )
            hyper[flag] = value
        return Fit(ns.data, ns.model, hyper, ns.seed, ns.out)
    if ns.command == "predict":
        return Predict(ns.model, ns.x, ns.y, ns.z)
    if ns.command == "bench":
        return Bench(ns.config, ns.out)
    if ns.command == "map":
        if ns.out_svg is None and ns.out_csv is None:
            parser.error("map needs at least one of --out-svg / --out-csv")
        return MapCmd(ns.model, ns.z_slice, ns.resolution, ns.out_svg, ns.out_csv)
    raise AssertionError(f"unhandled command {ns.command!r}")  # pragma: no cover


def _require_seed(seed: Optional[int], what: str) -> int:
    if seed is None:
        raise MissingSeed(
            f"{what} draws random numbers; pass an explicit --seed "
            "(implicit time-based seeding is not supported)"
        )
    return seed


def run_command(cmd: Command) -> int:
    if isinstance(cmd, Generate):
        seed = _require_seed(cmd.seed, "dataset generation")
        spec = load_dgp_config(cmd.dgp_config)
        dataset, truth = generate_dataset(spec, cmd.n0, cmd.n1, seed)
        save_dataset_csv(dataset, cmd.out)
        save_dgp_config(truth.spec, Path(cmd.out).with_suffix(".truth.cfg"))
        print(f"wrote {len(dataset)} samples to {cmd.out}")
        return 0

    if isinstance(cmd, Fit):
        seed = _require_seed(cmd.seed, "model fitting")
        dataset = load_dataset_csv(cmd.data)
        validate_dataset(dataset, require_both_groups=True)
        entry = model_entry(cmd.model, **cmd.hyper)
        model = entry.fit(dataset, seed)
        save_model(model, cmd.out)
        print(f"wrote {cmd.model} model to {cmd.out}")
        return 0

    if isinstance(cmd, Predict):
        model = load_model(cmd.model)
        est = model.predict(features_from_xyz(cmd.x, cmd.y, cmd.z))
        leaf = "none" if est.leaf_id is None else str(est.leaf_id)
        print(f"tau_hat_s={est.tau_hat:.9f} leaf_id={leaf}")
        return 0

    if isinstance(cmd, Bench):
        with open(cmd.config, "r", encoding="utf-8") as f:
            cfg = bench_config_from_json(f.read())
        rows = run_benchmark(cfg)
        write_text_atomic(cmd.out, bench_rows_to_csv(rows))
        sys.stdout.write(
            format_bench_table(rows, [e.describe for e in cfg.models])
        )
        return 0

    if isinstance(cmd, MapCmd):
        model = load_model(cmd.model)
        # model documents carry no workspace; maps use the standard region
        grid = build_grid(Workspace(), cmd.resolution, cmd.z_slice)
        m = difficulty_map(model, grid)
        if cmd.out_svg is not None:
            write_bytes_atomic(cmd.out_svg, render_svg_slice(m))
        if cmd.out_csv is not None:
            write_bytes_atomic(cmd.out_csv, export_map_csv(m))
        print(f"mapped {len(m)} cells at z={cmd.z_slice}")
        return 0

    raise AssertionError(f"unhandled command {cmd!r}")  # pragma: no cover


def main(argv: Optional[Sequence[str]] = None) -> int:
    cmd = parse_args(argv)
    try:
        return run_command(cmd)
    except ReachmapError as e:
        print(f"error: {e.kind}: {e}", file=sys.stderr)
        return 1
    except ValueError as e:
        print(f"error: InvalidValue: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: IOError: {e}", file=sys.stderr)
        return 1


def entry() -> None:  # console_scripts hook
    sys.exit(main())
