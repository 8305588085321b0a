"""Acceptance suite: quantitative end-to-end checks with pinned tolerances.

Each test prints one `[criterion N] name: PASS/FAIL` line.  Oracles are
computed independently of the implementation under test (dense solves,
high-precision summation, exhaustive path enumeration, closed forms).
"""

import json
import math

import mpmath
import numpy as np
import pytest
from scipy.integrate import quad_vec

from fpplab import analysis, cli, fpp, rcm
from fpplab.environments import (
    IndicatorBelow,
    InterlacementSampler,
    PassageWeights,
    dirichlet_green,
    dirichlet_green_column,
    dirichlet_laplacian,
    sample_gff_batch,
    sample_gff_dirichlet,
    weights_from_field,
)
from fpplab.fpp import IidModel, fpp_distances
from fpplab.lattice import build_box
from fpplab.rng import RngStream

from test_fpp import brute_force_distance


def _report(num, name, ok, detail):
    print(f"\n[criterion {num}] {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"criterion {num} ({name}): {detail}"


# -- 1: GFF covariance oracle ---------------------------------------------


def test_criterion_1_gff_covariance():
    box = build_box(3, (9, 9, 9))
    replicas = 10_000
    vals = sample_gff_batch(box, RngStream(seed=101), replicas)

    picker = np.random.default_rng(11)
    pairs = [(int(picker.integers(box.n_vertices)), int(picker.integers(box.n_vertices))) for _ in range(20)]
    worst = 0.0
    for a, b in pairs:
        prod = vals[:, a] * vals[:, b]
        emp = prod.mean()
        se = prod.std(ddof=1) / math.sqrt(replicas)
        oracle = dirichlet_green_column(box, b)[a]
        worst = max(worst, abs(emp - oracle) / se)

    single = build_box(3, (1, 1, 1))
    g0 = dirichlet_green(single, (0, 0, 0), (0, 0, 0))
    exact = abs(g0 - 1.0 / 6.0)

    ok = worst <= 4.0 and exact < 1e-12
    _report(1, "gff covariance oracle", ok, f"worst |z| = {worst:.2f} over 20 pairs, |g - 1/(2d)| = {exact:.1e}")


# -- 2: FPP exactness ------------------------------------------------------


def test_criterion_2_fpp_exactness():
    rng = np.random.default_rng(202)
    mismatches = 0
    tables = 0
    while tables < 200:
        d = int(rng.integers(1, 4))
        sides = tuple(int(rng.integers(1, 4)) for _ in range(d))
        box = build_box(d, sides)
        if box.n_vertices < 2:
            continue
        tables += 1
        mode = "edge" if (rng.random() < 0.5 and box.n_edges > 0) else "vertex"
        n = box.n_edges if mode == "edge" else box.n_vertices
        vals = rng.choice([0.0, 0.25, 1.0, 3.0], size=n)
        w = PassageWeights(box=box, mode=mode, values=vals)
        src = box.vertex_coords(int(rng.integers(box.n_vertices)))
        dm = fpp_distances(w, [src])
        for t in range(box.n_vertices):
            ref = brute_force_distance(w, src, box.vertex_coords(t))
            if not (dm.distances[t] == ref or abs(dm.distances[t] - ref) < 1e-12):
                mismatches += 1
    _report(2, "fpp exactness vs path enumeration", mismatches == 0, f"{mismatches} mismatches over {tables} tables")


# -- 3: i.i.d. zero-weight criterion ---------------------------------------


def test_criterion_3_iid_criterion():
    rng = RngStream(seed=303)
    sub = IidModel(law=("bernoulli-zero", 0.1), mode="edge")
    est = fpp.estimate_time_constant(sub, (1, 0), (64, 128), replicas=200, rng=rng.split(0))
    mu_sub = est.mu_hat
    ci_excludes_zero = est.mu_hat - est.mu_half_width > 0.0

    sup = IidModel(law=("bernoulli-zero", 0.9), mode="edge")
    est2 = fpp.estimate_time_constant(sup, (1, 0), (64, 128), replicas=200, rng=rng.split(1))
    mu_sup = est2.mu_hat

    ok = mu_sub >= 0.2 and ci_excludes_zero and mu_sup <= 0.02
    _report(
        3,
        "iid zero-weight criterion",
        ok,
        f"p=0.1: mu = {mu_sub:.3f} +/- {est.mu_half_width:.3f}; p=0.9: mu = {mu_sup:.4f}",
    )


# -- 4: GFF level-set FPP --------------------------------------------------


def test_criterion_4_gff_level_set_fpp():
    rng = RngStream(seed=404)

    curve = analysis.crossing_curve(
        analysis.GffSampler(dimension=3),
        scale=64,
        h_grid=[0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5],
        replicas=20,
        rng=rng.split(0),
    )
    h_star = curve.h_star_proxy
    assert np.isfinite(h_star), "crossing curve never dropped below threshold"

    box = build_box(3, (128, 128, 128))
    src = np.array([13, 64, 64])
    tgt = np.array([113, 64, 64])
    span = 100.0
    replicas = 8
    mono_failures = 0
    mu_lo = np.empty(replicas)
    mu_hi = np.empty(replicas)
    for r in range(replicas):
        field = sample_gff_dirichlet(box, rng.split(100 + r))
        f = IndicatorBelow(h_star + 0.5)
        # raising the level shift lowers every weight, hence every distance
        dists = []
        for shift in (0.0, 0.5, 1.0):
            dm = fpp_distances(weights_from_field(field, f, shift), [src])
            dists.append(dm.distances)
        for a, b in zip(dists, dists[1:]):
            mono_failures += int(np.any(b > a + 1e-12))
        mu_hi[r] = dists[0][box.vertex_index(tgt)] / span  # f threshold h*+0.5
        mu_lo[r] = dists[2][box.vertex_index(tgt)] / span  # effective threshold h*-0.5

    m_hi, hw_hi = analysis.confidence_interval(mu_hi)
    m_lo = float(mu_lo.mean())
    ok = mono_failures == 0 and m_hi > hw_hi and m_lo <= 0.02
    _report(
        4,
        "gff level-set fpp",
        ok,
        f"h*({curve.scale}) = {h_star:.2f}; mono failures = {mono_failures}; "
        f"mu(h*+0.5) = {m_hi:.3f} +/- {hw_hi:.3f}; mu(h*-0.5) = {m_lo:.4f}",
    )


# -- 5: Green-kernel oracles ----------------------------------------------


def test_criterion_5_green_oracles():
    box = build_box(3, (5, 5, 5))
    env = rcm.homogeneous_environment(box, h=0.3)
    c = box.center_vertex()
    col = rcm.solve_green(env, c)
    g_ref = col.values[col.y_index]

    samples = rcm.monte_carlo_green(env, c, 100_000, RngStream(seed=505), target=c)
    se = samples.std(ddof=1) / math.sqrt(len(samples))
    z = abs(samples.mean() - g_ref) / se

    # quadrature of the exact heat kernel: g(x, .) = int_0^inf p(t, x, .) dt
    ev = rcm.HeatKernelEvaluator(env, "exact-small")
    xi = int(box.vertex_index(c))

    def integrand(s):
        t = s / (1.0 - s)
        return ev.slice(xi, t).values / (1.0 - s) ** 2

    quad, _ = quad_vec(integrand, 0.0, 1.0, epsabs=1e-12, epsrel=1e-10)
    rel = float(np.max(np.abs(quad - col.values) / np.maximum(col.values, 1e-300)))

    ok = z <= 4.0 and rel <= 1e-6
    _report(5, "green-kernel oracles", ok, f"MC |z| = {z:.2f}; quadrature max rel err = {rel:.2e}")


# -- 6: sqrt(h) decay ------------------------------------------------------


def _decay_ratio_spread(env_factory, h_values):
    fits = rcm.fit_green_decay(env_factory, h_values, distances=[8, 10, 12, 14, 16, 20])
    ratios = np.array([f.ratio_to_sqrt_h for f in fits])
    return float(ratios.max() / ratios.min()), ratios


def test_criterion_6_sqrt_h_decay():
    box = build_box(3, (48, 48, 48))
    h_values = [0.04, 0.16, 0.64]

    spread_h, ratios_h = _decay_ratio_spread(lambda h: rcm.homogeneous_environment(box, h=h), h_values)

    field = sample_gff_dirichlet(box, RngStream(seed=606))

    spread_g, ratios_g = _decay_ratio_spread(lambda h: rcm.build_gff_rcm(field, beta=0.25, h=h), h_values)

    ok = spread_h <= 1.3 and spread_g <= 1.6
    _report(
        6,
        "sqrt(h) green decay",
        ok,
        f"homogeneous spread = {spread_h:.3f} (ratios {np.round(ratios_h, 3)}); "
        f"gff spread = {spread_g:.3f} (ratios {np.round(ratios_g, 3)})",
    )


# -- 7: polynomial prefactor at h = 0 --------------------------------------


def test_criterion_7_polynomial_prefactor():
    box = build_box(3, (48, 48, 48))
    env = rcm.homogeneous_environment(box, h=0.0)
    pairs = rcm.symmetric_axis_pairs(box, [8, 10, 12, 14, 16, 20])
    rs, gs = rcm.green_samples(env, pairs, boundary="far-field")
    slope = float(np.polyfit(np.log(rs), np.log(gs), 1)[0])
    ok = abs(slope - (-1.0)) <= 0.15
    _report(7, "polynomial green prefactor", ok, f"log-log slope = {slope:.3f}, target -1.0 +/- 0.15")


# -- 8: heat-kernel exponent ----------------------------------------------


def test_criterion_8_heat_kernel_exponent():
    box = build_box(3, (40, 40, 40))
    field = sample_gff_dirichlet(box, RngStream(seed=808))
    env = rcm.build_gff_rcm(field, beta=0.25, h=0.0)
    t_grid = [8.0, 16.0, 32.0, 64.0]
    ev = rcm.HeatKernelEvaluator(env, "krylov")
    c = box.center_vertex()
    ondiag = [ev.slice(c, t).values[int(box.vertex_index(c))] for t in t_grid]
    fit = analysis.heat_kernel_shape_fit(t_grid, ondiag)
    ok = abs(fit.ondiag_slope - (-1.5)) <= 0.25
    _report(8, "heat-kernel on-diagonal exponent", ok, f"slope = {fit.ondiag_slope:.3f}, target -1.5 +/- 0.25")


# -- 9: interlacements ----------------------------------------------------


def test_criterion_9_interlacements():
    box = build_box(3, (5, 5, 5))
    replicas = 10_000
    worst_vac = 0.0
    worst_camp = 0.0
    for i, u in enumerate((0.5, 1.0, 2.0)):
        sampler = InterlacementSampler(box, ambient_margin=5, u=u)
        ambient = sampler.ambient
        center = box.center_vertex()
        ci = int(box.vertex_index(center))
        rng = RngStream(seed=909 + i)
        occ_center = np.empty(replicas)
        for r in range(replicas):
            occ_center[r] = sampler.sample(rng.split(r)).values[ci]

        # vacancy oracle: P(L_x = 0) = exp(-u * cap({x})) = exp(-u / g(x, x))
        gxx = dirichlet_green(ambient, center, center)
        p0 = math.exp(-u / gxx)
        p_hat = float(np.mean(occ_center == 0.0))
        se_v = math.sqrt(p0 * (1.0 - p0) / replicas)
        worst_vac = max(worst_vac, abs(p_hat - p0) / se_v)

        # Campbell oracle: E L_y = u * sum_z e_K(z) g(z, y)
        e_vec = np.zeros(ambient.n_vertices)
        e_vec[sampler.eq.k_indices] = sampler.eq.weights
        lap = dirichlet_laplacian(ambient)
        import scipy.sparse.linalg as spla

        ge = spla.spsolve(lap.tocsc(), e_vec)
        oracle = u * ge[int(ambient.vertex_index(center))]
        se_c = occ_center.std(ddof=1) / math.sqrt(replicas)
        worst_camp = max(worst_camp, abs(occ_center.mean() - oracle) / se_c)

    ok = worst_vac <= 4.0 and worst_camp <= 4.0
    _report(
        9,
        "interlacement occupation oracles",
        ok,
        f"worst vacancy |z| = {worst_vac:.2f}; worst Campbell |z| = {worst_camp:.2f} over u in (0.5, 1, 2)",
    )


# -- 10: schedule invariants ----------------------------------------------


def test_criterion_10_schedule_invariants():
    mpmath.mp.dps = 40
    picker = np.random.default_rng(1010)
    bad = 0
    worst_err = 0.0
    for _ in range(100):
        delta = float(picker.uniform(1.0001, 4.0))
        rho = float(picker.uniform(0.01, 3.0))
        big_k = int(picker.integers(0, 12))
        l0 = float(picker.uniform(0.5, 50.0))
        s = fpp.build_scale_schedule(delta, rho, big_k, l0, k_max=40)
        if not s.invariants_hold():
            bad += 1
            continue
        if np.any(s.lengths < 2.0 ** np.arange(41) * l0 * (1 - 1e-12)):
            bad += 1
            continue
        for k in (0, 7, 23, 40):
            eps_hp = mpmath.zeta(delta, k + 6)
            a_hp = mpmath.mpf(1)
            for i in range(k):
                a_hp *= 2 * (1 - mpmath.mpf(1) / mpmath.mpf(i + 6) ** delta)
            err = max(
                abs(s.eps_k[k] - float(eps_hp)) / float(eps_hp),
                abs(s.a_k[k] - float(a_hp)) / float(a_hp),
            )
            worst_err = max(worst_err, err)
        if worst_err > 1e-12:
            bad += 1
    _report(10, "scale schedule invariants", bad == 0, f"{bad} failures / 100 draws; worst seq err = {worst_err:.2e}")


# -- 11: metric comparability ----------------------------------------------


def test_criterion_11_metric_comparability():
    box = build_box(3, (41, 41, 41), offset=(-20, -20, -20))
    coords = box.vertex_coords(np.arange(box.n_vertices)).astype(np.float64)
    euclid = np.linalg.norm(coords, axis=1)
    far = euclid >= 16.0
    minima = []
    for r in range(10):
        field = sample_gff_dirichlet(box, RngStream(seed=1111).split(r))
        env = rcm.build_gff_rcm(field, beta=0.25, h=0.0)
        dm = rcm.theta_metric(env, [np.zeros(3, dtype=np.int64)])
        ratio = dm.distances[far] / euclid[far]
        minima.append(float(np.min(ratio)))
    minima = np.asarray(minima)
    spread = float((minima.max() - minima.min()) / minima.min())
    ok = np.all(minima > 0) and spread <= 0.25
    _report(
        11,
        "intrinsic metric comparability",
        ok,
        f"min ratios in [{minima.min():.4f}, {minima.max():.4f}], spread = {100 * spread:.1f}%",
    )


# -- 12: determinism -------------------------------------------------------


def test_criterion_12_determinism(tmp_path):
    configs = [
        {
            "experiment": "schedule-diagnostics",
            "delta": 2,
            "rho": 1,
            "big_k": 0,
            "l0": 10,
            "k_max": 20,
            "seed": 1,
        },
        {"experiment": "gff-covariance", "sides": [7, 7, 7], "replicas": 500, "seed": 2},
        {
            "experiment": "green-decay",
            "environment": {"kind": "homogeneous", "dimension": 3, "side": 24},
            "h_grid": [0.25, 1.0],
            "distances": [6, 8, 10],
            "min_distance": 6,
            "seed": 3,
        },
    ]
    identical = True
    for i, cfg in enumerate(configs):
        p = tmp_path / f"c{i}.json"
        p.write_text(json.dumps(cfg))
        outs = []
        for run in ("a", "b"):
            out = tmp_path / f"r{i}{run}"
            assert cli.main(["run", str(p), "--out", str(out)]) == 0
            bodies = b"".join(sorted(f.read_bytes() for f in out.glob("*.csv")))
            outs.append(bodies)
        identical = identical and outs[0] == outs[1]
    _report(12, "byte-identical reruns", identical, f"{len(configs)} configs, CSV bodies compared byte-for-byte")
