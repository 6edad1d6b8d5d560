import numpy as np
import pytest

from graphot import build_graph


@pytest.fixture
def star():
    return build_graph(
        {
            "vertices": ["a", "b", "c", "d"],
            "edges": [
                {"id": "e1", "init": "a", "term": "c", "length": 1.0},
                {"id": "e2", "init": "b", "term": "c", "length": 1.0},
                {"id": "f", "init": "c", "term": "d", "length": 1.0},
            ],
        }
    )


@pytest.fixture
def unit_interval():
    return build_graph({"vertices": ["l", "r"], "edges": [{"id": "I", "init": "l", "term": "r", "length": 1.0}]})


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
