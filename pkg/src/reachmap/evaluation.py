"""Benchmark protocol: held-out r-squared, multi-run averaging, significance.

Each run draws a fresh training set from the generating process, fits every
configured model on that same set, and scores predictions at freshly drawn
holdout points against the analytic ground-truth effect.  Per-model r-squared
values across runs aggregate into mean, standard error and a two-sided paired
t-test against the reference model (the first configured one), giving a table
with one row per model.

On synthetic benches the ground truth is the exact generating-process effect.
For externally supplied datasets without a known effect,
:func:`matched_holdout_truth` builds surrogate per-point values by comparing
each held-out individual outcome to its k nearest held-out control outcomes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, Sequence

import numpy as np
from scipy import stats as _scipy_stats

from .baselines import CartSpec, ForestSpec, KnnSpec, fit_t_learner
from .causal_tree import (
    CausalTreeParams,
    DifficultyEstimate,
    fit_causal_forest,
    fit_causal_tree,
)
from .domain import Dataset, GroupLabel, TaskFeatures, canonical_order, validate_dataset
from .errors import (
    BenchmarkError,
    InsufficientSamples,
    LengthMismatch,
    MalformedConfig,
    ReachmapError,
    ZeroVariance,
)
from .synth import DgpSpec, dgp_from_mapping, generate_dataset, sample_workspace_point, true_tau


class DifficultyPredictor(Protocol):
    def predict(self, p: TaskFeatures) -> DifficultyEstimate: ...


# --- metrics -----------------------------------------------------------------


def r_squared(truth: Sequence[float], pred: Sequence[float]) -> float:
    """Coefficient of determination 1 - RSS/TSS; may be negative, never > 1."""
    t = np.asarray(truth, dtype=np.float64)
    p = np.asarray(pred, dtype=np.float64)
    if t.shape != p.shape or t.ndim != 1:
        raise LengthMismatch(f"truth has {t.size} values, pred has {p.size}")
    if t.size < 2 or t.max() == t.min():
        raise ZeroVariance("ground truth is constant; r^2 is undefined")
    rss = float(np.sum((t - p) ** 2))
    tss = float(np.sum((t - np.mean(t)) ** 2))
    return 1.0 - rss / tss


def std_error(values: Sequence[float]) -> float:
    """Standard error of the mean: sample sd (n-1 denominator) over sqrt(n)."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        raise InsufficientSamples(f"std_error needs >= 2 values, got {v.size}")
    return float(np.std(v, ddof=1) / math.sqrt(v.size))


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> float:
    """Two-sided paired t-test p-value on d = a - b with n-1 degrees of freedom.

    Degenerate rule: when every d_i is identical the p-value is 1.0 for zero
    mean difference and 0.0 otherwise.
    """
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatch(f"a has {x.size} values, b has {y.size}")
    if x.size < 2:
        raise InsufficientSamples(f"paired t-test needs >= 2 pairs, got {x.size}")
    d = x - y
    if np.all(d == d[0]):
        return 1.0 if d[0] == 0.0 else 0.0
    n = d.size
    t = float(np.mean(d) / (np.std(d, ddof=1) / math.sqrt(n)))
    return float(2.0 * _scipy_stats.t.sf(abs(t), n - 1))


def matched_holdout_truth(
    holdout: Dataset, k: int = 5
) -> list[tuple[TaskFeatures, float]]:
    """Surrogate ground truth for datasets without a known effect.

    For each held-out Individual sample, the surrogate effect is its outcome
    minus the mean outcome of its k nearest held-out Control samples (Euclidean
    in feature space; all controls are used when fewer than k exist).  Returns
    (features, tau) pairs in holdout order of the individual samples.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    validate_dataset(holdout, require_both_groups=True)
    controls = holdout.restrict_to_group(GroupLabel.CONTROL)
    order = canonical_order(controls)
    ctl_feats = controls.features[order]
    ctl_outcomes = controls.outcomes[order]
    kk = min(k, len(controls))

    out: list[tuple[TaskFeatures, float]] = []
    for i in np.nonzero(holdout.groups == int(GroupLabel.INDIVIDUAL))[0]:
        s = holdout.sample_at(int(i))
        diff = ctl_feats - s.features.as_array()
        d2 = np.einsum("ij,ij->i", diff, diff)
        nearest = np.lexsort((np.arange(d2.size), d2))[:kk]
        out.append((s.features, s.outcome - float(np.mean(ctl_outcomes[nearest]))))
    return out


# --- benchmark ---------------------------------------------------------------


@dataclass(frozen=True)
class ModelEntry:
    """A named model: ``fit(dataset, seed)`` returns a fitted predictor.

    The seed is derived per run from the benchmark's master seed, so the same
    entry can be reused across runs and benches.  ``describe`` spells out the
    resolved hyperparameters for the benchmark report.
    """

    name: str
    fit: Callable[[Dataset, int], DifficultyPredictor]
    describe: str = ""


@dataclass(frozen=True)
class BenchConfig:
    dgp: DgpSpec
    models: tuple[ModelEntry, ...]
    n_control: int
    n_individual: int
    runs: int = 10
    holdout_points: int = 500
    master_seed: int = field(kw_only=True)

    def __post_init__(self) -> None:
        if not self.models:
            raise ValueError("at least one model is required")
        if self.runs < 2:
            raise ValueError(f"runs must be >= 2 for significance tests, got {self.runs}")
        if self.n_control < 1 or self.n_individual < 1:
            raise ValueError("per-group sample counts must be >= 1")
        if self.holdout_points < 2:
            raise ValueError(f"holdout_points must be >= 2, got {self.holdout_points}")


@dataclass(frozen=True)
class BenchRow:
    model_name: str
    mean_r2: float
    stderr_r2: float
    p_vs_reference: Optional[float]  # None on the reference row


def _run_seeds(master_seed: int, run: int) -> tuple[int, int, int]:
    """(data_seed, holdout_seed, fit_seed) for one run.

    The fit seed is shared by every model in the run: entries are pure
    functions of (training data, seed), so the same entry configured twice
    produces identical rows.
    """
    state = np.random.SeedSequence(master_seed, spawn_key=(run,)).generate_state(3)
    return int(state[0]), int(state[1]), int(state[2])


def run_benchmark(cfg: BenchConfig) -> list[BenchRow]:
    """Execute the multi-run protocol; rows come back in configured model order.

    The first model is the reference: its row carries no p-value, every other
    row reports the paired t-test of its per-run r-squared against the
    reference's.  All models see identical training data and holdout points
    within a run.  Deterministic given the master seed.
    """
    n_models = len(cfg.models)
    per_model_r2: list[list[float]] = [[] for _ in range(n_models)]

    for run in range(cfg.runs):
        data_seed, holdout_seed, fit_seed = _run_seeds(cfg.master_seed, run)
        try:
            train, _ = generate_dataset(
                cfg.dgp, cfg.n_control, cfg.n_individual, data_seed
            )
            rng = np.random.default_rng(holdout_seed)
            points = [
                sample_workspace_point(cfg.dgp.workspace, rng)
                for _ in range(cfg.holdout_points)
            ]
            truth = [true_tau(cfg.dgp, p) for p in points]
        except (ReachmapError, ValueError) as e:
            raise BenchmarkError(f"run {run}: {type(e).__name__}: {e}") from e

        for i, entry in enumerate(cfg.models):
            try:
                model = entry.fit(train, fit_seed)
                preds = [model.predict(p).tau_hat for p in points]
                per_model_r2[i].append(r_squared(truth, preds))
            except (ReachmapError, ValueError) as e:
                raise BenchmarkError(
                    f"run {run}, model {entry.name!r}: {type(e).__name__}: {e}"
                ) from e

    reference = per_model_r2[0]
    rows = []
    for i, entry in enumerate(cfg.models):
        r2s = per_model_r2[i]
        rows.append(
            BenchRow(
                model_name=entry.name,
                mean_r2=float(np.mean(r2s)),
                stderr_r2=std_error(r2s),
                p_vs_reference=None if i == 0 else paired_t_test(r2s, reference),
            )
        )
    return rows


# --- model registry ----------------------------------------------------------

MODEL_KINDS = ("causal_tree", "causal_forest", "t_cart", "t_forest", "t_knn")


def model_entry(kind: str, name: Optional[str] = None, **hyper) -> ModelEntry:
    """Build a ModelEntry for one of the known kinds.

    Accepted hyperparameters match the underlying spec types: causal_tree and
    causal_forest take max_depth / min_group_leaf / honest_fraction (the forest
    also n_trees / subsample_ratio); t_cart takes max_depth / min_leaf;
    t_forest adds n_trees / features_per_split; t_knn takes k / standardize.
    Seeds are supplied at fit time, not here.
    """
    label = name or kind

    def take(allowed: tuple[str, ...]) -> dict:
        unknown = set(hyper) - set(allowed)
        if unknown:
            raise ValueError(
                f"model kind {kind!r} does not accept {sorted(unknown)}"
            )
        return dict(hyper)

    def described(template, fit) -> ModelEntry:
        resolved = ", ".join(f"{k}={v}" for k, v in sorted(template.items()))
        return ModelEntry(label, fit, f"{kind}({resolved})")

    if kind == "causal_tree":
        kw = take(("max_depth", "min_group_leaf", "honest_fraction"))
        probe = CausalTreeParams(seed=0, **kw)
        return described(
            {
                "max_depth": probe.max_depth,
                "min_group_leaf": probe.min_group_leaf,
                "honest_fraction": probe.honest_fraction,
            },
            lambda d, seed: fit_causal_tree(d, CausalTreeParams(seed=seed, **kw)),
        )
    if kind == "causal_forest":
        kw = take(
            ("max_depth", "min_group_leaf", "honest_fraction", "n_trees", "subsample_ratio")
        )
        n_trees = int(kw.pop("n_trees", 50))
        ratio = float(kw.pop("subsample_ratio", 0.7))
        probe = CausalTreeParams(seed=0, **kw)
        return described(
            {
                "max_depth": probe.max_depth,
                "min_group_leaf": probe.min_group_leaf,
                "honest_fraction": probe.honest_fraction,
                "n_trees": n_trees,
                "subsample_ratio": ratio,
            },
            lambda d, seed: fit_causal_forest(
                d, CausalTreeParams(seed=seed, **kw), n_trees, ratio
            ),
        )
    if kind == "t_cart":
        kw = take(("max_depth", "min_leaf"))
        probe = CartSpec(seed=0, **kw)
        return described(
            {"max_depth": probe.max_depth, "min_leaf": probe.min_leaf},
            lambda d, seed: fit_t_learner(d, CartSpec(seed=seed, **kw)),
        )
    if kind == "t_forest":
        kw = take(("n_trees", "max_depth", "min_leaf", "features_per_split"))
        probe = ForestSpec(seed=0, **kw)
        return described(
            {
                "n_trees": probe.n_trees,
                "max_depth": probe.max_depth,
                "min_leaf": probe.min_leaf,
                "features_per_split": probe.features_per_split,
            },
            lambda d, seed: fit_t_learner(d, ForestSpec(seed=seed, **kw)),
        )
    if kind == "t_knn":
        kw = take(("k", "standardize"))
        probe = KnnSpec(seed=0, **kw)
        return described(
            {"k": probe.k, "standardize": probe.standardize},
            lambda d, seed: fit_t_learner(d, KnnSpec(seed=seed, **kw)),
        )
    raise ValueError(f"unknown model kind {kind!r}; known: {', '.join(MODEL_KINDS)}")


def bench_config_from_json(text: str) -> BenchConfig:
    """Parse a benchmark config document.

    Shape: {"dgp": {<flat DGP keys>}, "models": [{"kind": ..., "name": ...,
    <hyperparameters>}, ...], "n_control": int, "n_individual": int,
    "runs": int, "holdout_points": int, "master_seed": int}.  The first model
    is the reference row.  Per-run fitting seeds are derived from master_seed,
    so model entries carry no seeds.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise MalformedConfig(f"invalid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise MalformedConfig("top level must be an object")

    known = {
        "dgp",
        "models",
        "n_control",
        "n_individual",
        "runs",
        "holdout_points",
        "master_seed",
    }
    unknown = set(doc) - known
    if unknown:
        raise MalformedConfig(f"unknown keys {sorted(unknown)}")
    for key in ("dgp", "models", "n_control", "n_individual", "master_seed"):
        if key not in doc:
            raise MalformedConfig(f"missing required key {key!r}")
    if not isinstance(doc["dgp"], dict):
        raise MalformedConfig("'dgp' must be an object")
    if not isinstance(doc["models"], list) or not doc["models"]:
        raise MalformedConfig("'models' must be a non-empty list")

    def req_int(key: str, default=None) -> int:
        v = doc.get(key, default)
        if isinstance(v, bool) or not isinstance(v, int):
            raise MalformedConfig(f"{key!r} must be an integer, got {v!r}")
        return v

    entries = []
    for i, m in enumerate(doc["models"]):
        if not isinstance(m, dict):
            raise MalformedConfig(f"models[{i}] must be an object")
        m = dict(m)
        kind = m.pop("kind", None)
        if not isinstance(kind, str):
            raise MalformedConfig(f"models[{i}]: missing string 'kind'")
        name = m.pop("name", None)
        if name is not None and not isinstance(name, str):
            raise MalformedConfig(f"models[{i}]: 'name' must be a string")
        try:
            entries.append(model_entry(kind, name, **m))
        except (TypeError, ValueError) as e:
            raise MalformedConfig(f"models[{i}]: {e}") from None

    try:
        return BenchConfig(
            dgp=dgp_from_mapping(doc["dgp"]),
            models=tuple(entries),
            n_control=req_int("n_control"),
            n_individual=req_int("n_individual"),
            runs=req_int("runs", 10),
            holdout_points=req_int("holdout_points", 500),
            master_seed=req_int("master_seed"),
        )
    except ValueError as e:
        raise MalformedConfig(str(e)) from None


# --- output formats ----------------------------------------------------------

BENCH_CSV_HEADER = "model,mean_r2,stderr_r2,p_vs_reference"


def bench_rows_to_csv(rows: Sequence[BenchRow]) -> str:
    lines = [BENCH_CSV_HEADER]
    for row in rows:
        p = "" if row.p_vs_reference is None else repr(row.p_vs_reference)
        lines.append(f"{row.model_name},{row.mean_r2!r},{row.stderr_r2!r},{p}")
    return "\n".join(lines) + "\n"


def _format_p(p: Optional[float]) -> str:
    if p is None:
        return "--"
    if p < 0.001:
        return "<.001"
    return f"{p:.3f}"


def format_bench_table(
    rows: Sequence[BenchRow], descriptions: Sequence[str] = ()
) -> str:
    """Aligned plain-text table: model, avg r2, std err r2, p-value.

    ``descriptions`` (one per row, optional) lists each model's resolved
    hyperparameters in a footer so reported numbers are reproducible.
    """
    header = ("Model", "avg r2", "std err r2", "p-value")
    body = [
        (row.model_name, f"{row.mean_r2:.3f}", f"{row.stderr_r2:.3f}", _format_p(row.p_vs_reference))
        for row in rows
    ]
    widths = [
        max(len(header[c]), *(len(r[c]) for r in body)) for c in range(len(header))
    ]
    def fmt(cells) -> str:
        first = cells[0].ljust(widths[0])
        rest = [c.rjust(w) for c, w in zip(cells[1:], widths[1:])]
        return "  ".join([first, *rest]).rstrip()

    lines = [fmt(header), fmt(tuple("-" * w for w in widths))]
    lines.extend(fmt(r) for r in body)
    lines.append("")
    lines.append("ground truth: analytic effect of the synthetic generating process")
    for row, desc in zip(rows, descriptions):
        if desc:
            lines.append(f"{row.model_name}: {desc}")
    return "\n".join(lines) + "\n"
