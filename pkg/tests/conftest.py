"""Shared test helpers: random dataset builders and independent oracles.

The oracles here deliberately avoid the library's own code paths: routing and
means are recomputed with plain Python loops and ``statistics`` functions so
the production vectorised implementations are checked against a second,
independently written route.
"""

from __future__ import annotations

import statistics
from fractions import Fraction
from typing import Optional

import numpy as np

from reachmap import Dataset
from reachmap.causal_tree import CausalTree, Internal, Leaf


def make_dataset(features, groups, outcomes) -> Dataset:
    return Dataset(
        np.asarray(features, dtype=np.float64).reshape(len(groups), 4),
        np.asarray(groups, dtype=np.int8),
        np.asarray(outcomes, dtype=np.float64),
    )


def random_dataset(
    rng: np.random.Generator,
    n_control: int,
    n_individual: int,
    effect: float = 0.0,
    spread: float = 1.0,
) -> Dataset:
    """Continuous random dataset: uniform features, positive noisy outcomes."""
    n = n_control + n_individual
    xyz = rng.uniform(-0.3, 0.3, size=(n, 3))
    xyz[:, 1] = np.abs(xyz[:, 1])
    xyz[:, 2] = np.abs(xyz[:, 2])
    feats = np.column_stack([xyz, np.sqrt((xyz**2).sum(axis=1))])
    groups = np.array([0] * n_control + [1] * n_individual, dtype=np.int8)
    outcomes = 2.0 + spread * rng.uniform(0.0, 1.0, size=n)
    outcomes[groups == 1] += effect
    return Dataset(feats, groups, outcomes)


# --- independent oracles -------------------------------------------------------


def oracle_two_mean(dataset: Dataset) -> float:
    """Leaf effect recomputed with plain-Python means."""
    ind = [dataset.outcomes[i] for i in range(len(dataset)) if dataset.groups[i] == 1]
    ctl = [dataset.outcomes[i] for i in range(len(dataset)) if dataset.groups[i] == 0]
    return statistics.fmean(ind) - statistics.fmean(ctl)


def oracle_best_split(
    split_d: Dataset, est_d: Dataset, min_group_leaf: int
) -> Optional[tuple[int, float, float]]:
    """Exhaustive candidate enumeration in exact rational arithmetic.

    Returns (feature_index, threshold, gain) of the best valid candidate with
    strictly positive gain, first-in-(feature, threshold)-order on exact ties,
    or None when no such candidate exists.
    """
    m = min_group_leaf
    n = len(split_d)
    best = None
    best_gain = Fraction(0)
    for f in range(4):
        values = sorted(set(float(v) for v in split_d.features[:, f]))
        for lo, hi in zip(values, values[1:]):
            thr = (lo + hi) / 2.0
            sides: dict[str, list[Fraction]] = {
                "L1": [], "L0": [], "R1": [], "R0": [],
            }
            for i in range(n):
                side = "L" if split_d.features[i, f] < thr else "R"
                sides[side + str(int(split_d.groups[i]))].append(
                    Fraction(float(split_d.outcomes[i]))
                )
            if min(len(v) for v in sides.values()) < m:
                continue
            e_counts = {"L1": 0, "L0": 0, "R1": 0, "R0": 0}
            for i in range(len(est_d)):
                side = "L" if est_d.features[i, f] < thr else "R"
                e_counts[side + str(int(est_d.groups[i]))] += 1
            if min(e_counts.values()) < m:
                continue
            tau_l = sum(sides["L1"]) / len(sides["L1"]) - sum(sides["L0"]) / len(sides["L0"])
            tau_r = sum(sides["R1"]) / len(sides["R1"]) - sum(sides["R0"]) / len(sides["R0"])
            n_l = len(sides["L1"]) + len(sides["L0"])
            n_r = n - n_l
            gain = Fraction(n_l * n_r, (n_l + n_r) ** 2) * (tau_l - tau_r) ** 2
            if gain > best_gain:
                best_gain = gain
                best = (f, thr, float(gain))
    return best


def oracle_route(tree: CausalTree, features) -> Leaf:
    """Independent routing: value < threshold goes left, else right."""
    vec = (features.x, features.y, features.z, features.dist)
    node = tree.root
    while isinstance(node, Internal):
        node = (
            node.left
            if vec[node.split.feature_index] < node.split.threshold
            else node.right
        )
    assert isinstance(node, Leaf)
    return node


def tree_skeleton(tree: CausalTree):
    """Structure only: nested (feature, threshold) tuples, leaves as None."""

    def rec(node):
        if isinstance(node, Leaf):
            return None
        return (node.split.feature_index, node.split.threshold, rec(node.left), rec(node.right))

    return rec(tree.root)


def tree_leaf_values(tree: CausalTree) -> list[float]:
    def rec(node):
        if isinstance(node, Leaf):
            return [node.tau_hat]
        return rec(node.left) + rec(node.right)

    return rec(tree.root)
