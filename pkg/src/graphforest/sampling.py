"""Deterministic random selection of node/feature subspaces and neighbor caps.

Every draw is a pure function of (master_seed, model_index), so any
number of workers can sample concurrently with no coordination and an
ensemble is reproducible from its master seed alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSubspaceError
from .graph import Graph

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MAX_REDRAWS = 16


def mix64(value: int) -> int:
    """Bijective 64-bit mixer (xor-shift/multiply finalizer)."""
    z = value & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(master_seed: int, model_index: int) -> int:
    """Per-model seed: injective in model_index for a fixed master seed.

    Both stages are bijections on 64-bit ints, so distinct model indices
    (and distinct master seeds at a fixed index) can never collide.
    """
    if model_index < 0:
        raise ValueError("model_index must be non-negative")
    return mix64((master_seed & _MASK64) ^ mix64(((model_index + 1) * _GOLDEN) & _MASK64))


def _ceil_fraction(fraction: float, count: int) -> int:
    # guard against fp products like 0.1 * 600 = 60.0000000000000003
    return max(1, math.ceil(fraction * count - 1e-9))


@dataclass(frozen=True, eq=False)
class SubspaceSpec:
    """One base model's random subspace: node subset, feature subset, seed."""

    model_index: int
    node_subset: np.ndarray
    feature_subset: np.ndarray
    node_fraction: float
    feature_fraction: float
    seed: int

    def __post_init__(self):
        self.node_subset.flags.writeable = False
        self.feature_subset.flags.writeable = False


def sample_subspace(g: Graph, node_fraction: float, feature_fraction: float,
                    model_index: int, master_seed: int) -> SubspaceSpec:
    """Draw one subspace uniformly without replacement.

    The node subset has ceil(node_fraction * n) members, the feature
    subset ceil(feature_fraction * d). If the graph has labeled training
    nodes and the sampled subset covers fewer than two classes, the draw
    is repeated with seed+1 up to 16 times before raising
    DegenerateSubspaceError.
    """
    if not (0.0 < node_fraction <= 1.0 and 0.0 < feature_fraction <= 1.0):
        raise ValueError("sampling fractions must lie in (0, 1]")
    take_nodes = _ceil_fraction(node_fraction, g.num_nodes)
    take_dims = _ceil_fraction(feature_fraction, g.num_features)
    base_seed = derive_seed(master_seed, model_index)

    train_labels = g.labels[g.train_nodes]
    need_guard = bool((train_labels >= 0).any())

    for attempt in range(_MAX_REDRAWS + 1):
        seed = (base_seed + attempt) & _MASK64
        rng = np.random.default_rng(seed)
        node_subset = np.sort(rng.choice(g.num_nodes, size=take_nodes, replace=False))
        feature_subset = np.sort(rng.choice(g.num_features, size=take_dims, replace=False))
        if not need_guard or _training_class_count(g, node_subset) >= 2:
            return SubspaceSpec(
                model_index=model_index,
                node_subset=node_subset.astype(np.int64),
                feature_subset=feature_subset.astype(np.int64),
                node_fraction=node_fraction,
                feature_fraction=feature_fraction,
                seed=int(seed),
            )
    raise DegenerateSubspaceError(
        f"model {model_index}: sampled training nodes cover < 2 classes after "
        f"{_MAX_REDRAWS} redraws (node_fraction too small or labels too sparse)",
        model_index=model_index,
    )


def _training_class_count(g: Graph, node_subset: np.ndarray) -> int:
    mask = np.zeros(g.num_nodes, dtype=bool)
    mask[node_subset] = True
    sampled_train = g.train_nodes[mask[g.train_nodes]]
    labels = g.labels[sampled_train]
    return int(np.unique(labels[labels >= 0]).size)


def sample_neighbors(neigh, cap: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform subset of at most ``cap`` neighbors; all of them if few enough."""
    if cap < 1:
        raise ValueError("neighbor cap must be >= 1")
    arr = np.asarray(neigh, dtype=np.int64)
    if arr.size <= cap:
        return arr
    pick = rng.choice(arr.size, size=cap, replace=False)
    return np.sort(arr[pick])
