import numpy as np
import pytest

from fpplab.environments import (
    ExpDecay,
    IndicatorBelow,
    InterlacementSampler,
    TabulatedDecreasing,
    dirichlet_green,
    dirichlet_green_column,
    dirichlet_laplacian,
    equilibrium_measure,
    sample_gff_batch,
    sample_gff_dirichlet,
    sample_iid_weights,
    weights_from_field,
)
from fpplab.lattice import build_box
from fpplab.rng import RngStream


def test_laplacian_row_sums_interior():
    box = build_box(2, (5, 5))
    lap = dirichlet_laplacian(box).toarray()
    rows = lap.sum(axis=1)
    deg = box.outside_degree
    np.testing.assert_allclose(rows, deg.astype(float))
    np.testing.assert_allclose(lap, lap.T)


def test_green_single_vertex_exact():
    box = build_box(2, (1, 1))
    assert dirichlet_green(box, (0, 0), (0, 0)) == pytest.approx(0.25, abs=1e-14)


def test_green_two_vertex_path():
    box = build_box(1, (2,))
    g11 = dirichlet_green(box, (0,), (0,))
    g12 = dirichlet_green(box, (0,), (1,))
    assert g11 == pytest.approx(2.0 / 3.0, abs=1e-12)
    assert g12 == pytest.approx(1.0 / 3.0, abs=1e-12)


def test_green_symmetry():
    box = build_box(2, (4, 3))
    for a, b in [((0, 0), (3, 2)), ((1, 1), (2, 0))]:
        assert dirichlet_green(box, a, b) == pytest.approx(dirichlet_green(box, b, a), rel=1e-12)


def test_green_column_matches_pointwise():
    box = build_box(2, (4, 4))
    col = dirichlet_green_column(box, 5)
    for i in range(box.n_vertices):
        x = box.vertex_coords(i)
        y = box.vertex_coords(5)
        assert col[i] == pytest.approx(dirichlet_green(box, x, y), rel=1e-10)


def test_gff_reproducible_and_var():
    box = build_box(3, (5, 5, 5))
    rng = RngStream(seed=11)
    f1 = sample_gff_dirichlet(box, rng)
    f2 = sample_gff_dirichlet(box, rng)
    np.testing.assert_array_equal(f1.values, f2.values)
    vals = sample_gff_batch(box, rng, 3000)
    ci = int(box.vertex_index(box.center_vertex()))
    emp = vals[:, ci].var()
    oracle = dirichlet_green_column(box, ci)[ci]
    assert abs(emp - oracle) < 4 * oracle * np.sqrt(2.0 / 3000)


def test_gff_single_site_variance():
    box = build_box(3, (1, 1, 1))
    vals = sample_gff_batch(box, RngStream(seed=12), 20000)[:, 0]
    assert abs(vals.var() - 1.0 / 6.0) < 0.01


def test_gff_batch_matches_splits():
    box = build_box(2, (4, 4))
    rng = RngStream(seed=13)
    batch = sample_gff_batch(box, rng, 3)
    for r in range(3):
        np.testing.assert_array_equal(batch[r], sample_gff_dirichlet(box, rng.split(r)).values)


@pytest.mark.parametrize(
    "law,mode,mean",
    [
        (("constant", 2.0), "edge", 2.0),
        (("bernoulli-zero", 0.3), "vertex", 0.7),
        (("exponential", 2.0), "edge", 0.5),
        (("lognormal", 0.0, 1.0), "vertex", np.exp(0.5)),
    ],
)
def test_iid_weights_mean(law, mode, mean):
    box = build_box(2, (40, 40))
    w = sample_iid_weights(box, law, mode, RngStream(seed=14))
    n = box.n_edges if mode == "edge" else box.n_vertices
    assert w.values.size == n
    assert np.all(w.values >= 0)
    assert abs(w.values.mean() - mean) < 5 * max(1.0, mean) / np.sqrt(n)


def test_iid_invalid_law():
    box = build_box(2, (3, 3))
    rng = RngStream(seed=1)
    with pytest.raises(ValueError):
        sample_iid_weights(box, ("exponential", -1.0), "edge", rng)
    with pytest.raises(ValueError):
        sample_iid_weights(box, ("nope", 1.0), "edge", rng)


def test_functionals_decreasing():
    for f in (IndicatorBelow(0.5), ExpDecay(1.0), TabulatedDecreasing((-1.0, 0.0, 1.0), (3.0, 1.0, 0.0))):
        xs = np.linspace(-3, 3, 41)
        ys = np.asarray([f(x) for x in xs], dtype=float)
        assert np.all(np.diff(ys) <= 1e-12)
        assert np.all(ys >= 0)


def test_tabulated_validation():
    with pytest.raises(ValueError):
        TabulatedDecreasing((0.0, 0.0), (1.0, 0.0))
    with pytest.raises(ValueError):
        TabulatedDecreasing((0.0, 1.0), (0.0, 1.0))


def test_weights_from_field_vertex_and_edge():
    box = build_box(2, (3, 3))
    field = sample_gff_dirichlet(box, RngStream(seed=15))
    f = ExpDecay(1.0)
    wv = weights_from_field(field, f, level_shift=0.3, mode="vertex")
    np.testing.assert_allclose(wv.values, np.exp(-(field.values + 0.3)), rtol=1e-12)
    we = weights_from_field(field, f, level_shift=0.3, mode="edge")
    lo, hi, _ = box.edge_endpoints
    np.testing.assert_allclose(we.values, 0.5 * (wv.values[lo] + wv.values[hi]), rtol=1e-12)


def test_level_shift_monotone_pointwise():
    # raising the level shift lowers every weight for a decreasing functional
    box = build_box(2, (6, 6))
    field = sample_gff_dirichlet(box, RngStream(seed=16))
    f = ExpDecay(0.7)
    w_lo = weights_from_field(field, f, level_shift=0.0)
    w_hi = weights_from_field(field, f, level_shift=0.8)
    assert np.all(w_hi.values <= w_lo.values + 1e-15)


def test_singleton_capacity_times_green_is_one():
    box = build_box(3, (1, 1, 1))
    ambient = build_box(3, (15, 15, 15))
    k = ambient.vertex_index(ambient.center_vertex())
    eq = equilibrium_measure(np.asarray([k]), ambient)
    g = dirichlet_green_column(ambient, int(k))[int(k)]
    assert eq.capacity * g == pytest.approx(1.0, abs=1e-10)
    del box


def test_equilibrium_measure_supported_on_set():
    ambient = build_box(3, (9, 9, 9))
    target = build_box(3, (3, 3, 3), offset=(3, 3, 3))
    idx = ambient.vertex_index(target.vertex_coords(np.arange(target.n_vertices)))
    eq = equilibrium_measure(idx, ambient)
    assert np.all(eq.weights >= -1e-12)
    assert eq.capacity == pytest.approx(eq.weights.sum(), rel=1e-12)
    # interior of the target carries no equilibrium mass
    center = ambient.vertex_index(np.array([4, 4, 4]))
    pos = {int(v): j for j, v in enumerate(eq.k_indices)}
    assert eq.weights[pos[int(center)]] == pytest.approx(0.0, abs=1e-10)


def test_interlacement_requires_d3_and_margin():
    with pytest.raises(ValueError):
        InterlacementSampler(build_box(2, (3, 3)), ambient_margin=5, u=1.0)
    with pytest.raises(ValueError):
        InterlacementSampler(build_box(3, (5, 5, 5)), ambient_margin=1, u=1.0)
    with pytest.raises(ValueError):
        InterlacementSampler(build_box(3, (3, 3, 3)), ambient_margin=5, u=0.0)


def test_interlacement_occupation_nonnegative_reproducible():
    sampler = InterlacementSampler(build_box(3, (3, 3, 3)), ambient_margin=4, u=0.8)
    rng = RngStream(seed=17)
    occ1 = sampler.sample(rng.split(0))
    occ2 = sampler.sample(rng.split(0))
    np.testing.assert_array_equal(occ1.values, occ2.values)
    assert np.all(occ1.values >= 0)
    assert occ1.values.size == 27


def test_interlacement_monotone_in_u_on_average():
    box = build_box(3, (3, 3, 3))
    lo = InterlacementSampler(box, ambient_margin=4, u=0.5)
    hi = InterlacementSampler(box, ambient_margin=4, u=2.0)
    rng = RngStream(seed=18)
    m_lo = np.mean([lo.sample(rng.split(r)).values.mean() for r in range(200)])
    m_hi = np.mean([hi.sample(rng.split(r)).values.mean() for r in range(200)])
    assert m_hi > m_lo
