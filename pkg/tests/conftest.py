import numpy as np
import pytest

from odcal import data_path
from odcal.network import Network, ODPair, Route, Segment, load_network


def make_segment(sid, v_max=15.0, v_min=2.0, q_max=1800.0, a1=2.0, a2=1.0):
    return Segment(sid, 200.0, v_max, v_min, q_max, a1, a2)


def tiny_doc():
    """1 OD, routes a-b (0.6) and a-c (0.4)."""
    return {
        "segments": [
            {"id": s, "length_m": 100.0, "v_max_ms": 15.0, "v_min_ms": 2.0, "q_max_vph": 1800.0,
             "alpha1": 2.0, "alpha2": 1.0}
            for s in ("a", "b", "c")
        ],
        "od_pairs": [
            {"id": 1, "origin": "o", "dest": "d", "x_upper_vph": 1000.0,
             "routes": [{"segments": ["a", "b"], "prob": 0.6}, {"segments": ["a", "c"], "prob": 0.4}]}
        ],
    }


@pytest.fixture
def tiny_net():
    return load_network(tiny_doc())


@pytest.fixture(scope="session")
def demo_net():
    return load_network(data_path())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
