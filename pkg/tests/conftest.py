import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from graphforest import SbmConfig, build_graph, generate_sbm


@pytest.fixture
def triangle():
    return build_graph([(0, 1), (1, 2), (0, 2)], np.eye(3))


@pytest.fixture
def path3():
    # 0 - 1 - 2
    return build_graph([(0, 1), (1, 2)], np.eye(3))


@pytest.fixture
def star4():
    # center 0 with leaves 1..3
    return build_graph([(0, 1), (0, 2), (0, 3)], np.eye(4))


def random_graph(rng, n, d=4, edge_prob=0.3, num_classes=3, labeled=True):
    iu, ju = np.triu_indices(n, k=1)
    mask = rng.random(iu.size) < edge_prob
    edges = np.column_stack([iu[mask], ju[mask]])
    feats = rng.normal(size=(n, d))
    labels = rng.integers(0, num_classes, size=n) if labeled else None
    return build_graph(edges, feats, labels=labels,
                       num_classes=num_classes if labeled else None)


@pytest.fixture(scope="session")
def sbm_small():
    # separable-by-construction 2-class fixture
    return generate_sbm(SbmConfig(num_nodes=60, num_classes=2, p_in=0.3,
                                  p_out=0.02, feature_dim=12, signal=1.0,
                                  noise_sd=1.0, train_fraction=0.3, seed=7))
