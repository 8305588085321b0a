"""Kernel lane agreement: the numba lane and the fallback lane must produce
identical numbers.  The lane is fixed at import time by FPPLAB_NO_NUMBA, so
the opposite lane runs in a subprocess.
"""

import json
import os
import subprocess
import sys

import numpy as np
import pytest

from fpplab.fpp import IidModel, fpp_distances
from fpplab.kernels import USE_NUMBA, dijkstra
from fpplab.lattice import build_box
from fpplab.rcm import homogeneous_environment, monte_carlo_green
from fpplab.rng import RngStream

_CHECK = r"""
import json
import numpy as np
from fpplab.fpp import IidModel, fpp_distances
from fpplab.lattice import build_box
from fpplab.rcm import homogeneous_environment, monte_carlo_green
from fpplab.rng import RngStream
from fpplab.kernels import USE_NUMBA

rng = RngStream(seed=314)
box = build_box(3, (7, 7, 7))
w = IidModel(law=("bernoulli-zero", 0.3), mode="edge").sample(box, rng)
dm = fpp_distances(w, [box.center_vertex()])
env = homogeneous_environment(box, h=0.15)
occ = monte_carlo_green(env, box.center_vertex(), 500, rng.split(1))
print(json.dumps({
    "numba": USE_NUMBA,
    "distances": dm.distances.tolist(),
    "occ": occ.tolist(),
}))
"""


def _run_other_lane():
    env = dict(os.environ, FPPLAB_NO_NUMBA="0" if os.environ.get("FPPLAB_NO_NUMBA") == "1" else "1")
    out = subprocess.run([sys.executable, "-c", _CHECK], env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def test_lanes_bit_identical():
    other = _run_other_lane()
    assert other["numba"] != USE_NUMBA or not USE_NUMBA  # numba may be missing entirely
    rng = RngStream(seed=314)
    box = build_box(3, (7, 7, 7))
    w = IidModel(law=("bernoulli-zero", 0.3), mode="edge").sample(box, rng)
    dm = fpp_distances(w, [box.center_vertex()])
    env = homogeneous_environment(box, h=0.15)
    occ = monte_carlo_green(env, box.center_vertex(), 500, rng.split(1))
    np.testing.assert_array_equal(dm.distances, np.asarray(other["distances"]))
    np.testing.assert_array_equal(occ, np.asarray(other["occ"]))


def _line_graph(weights):
    n = len(weights) + 1
    rows, cols, data = [], [], []
    for i, w in enumerate(weights):
        rows += [i, i + 1]
        cols += [i + 1, i]
        data += [w, w]
    import scipy.sparse as sp

    g = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
    return g.indptr.astype(np.int64), g.indices.astype(np.int64), g.data


def test_dijkstra_zero_weight_edges():
    indptr, indices, data = _line_graph([0.0, 0.0, 1.0, 0.0])
    dist = dijkstra(indptr, indices, data, np.array([0]), np.array([0.0]))
    np.testing.assert_allclose(dist, [0.0, 0.0, 0.0, 1.0, 1.0])


def test_dijkstra_inf_edges_block():
    indptr, indices, data = _line_graph([1.0, np.inf, 1.0])
    dist = dijkstra(indptr, indices, data, np.array([0]), np.array([0.0]))
    assert dist[1] == 1.0
    assert np.isinf(dist[2]) and np.isinf(dist[3])


def test_dijkstra_multi_source_init_offsets():
    indptr, indices, data = _line_graph([1.0, 1.0, 1.0])
    dist = dijkstra(indptr, indices, data, np.array([0, 3]), np.array([10.0, 0.0]))
    # the large source offset is undercut by the path from the other source
    np.testing.assert_allclose(dist, [3.0, 2.0, 1.0, 0.0])


def test_dijkstra_validation():
    indptr, indices, data = _line_graph([1.0])
    with pytest.raises(ValueError):
        dijkstra(indptr, indices, data, np.array([], dtype=np.int64), np.array([]))
    with pytest.raises(ValueError):
        dijkstra(indptr, indices, data, np.array([5]), np.array([0.0]))
    with pytest.raises(ValueError):
        dijkstra(indptr, indices, -data, np.array([0]), np.array([0.0]))
