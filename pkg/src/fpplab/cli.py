"""Config-driven experiment runner.

``fpplab run <config.json>`` executes one experiment and writes a manifest,
CSV tables, and a JSON summary into the output directory.  ``fpplab validate
<config.json>`` reports precondition violations without computing anything.
Exit codes: 0 success, 1 runtime failure, 2 invalid config.  The worker count
(``--workers`` or ``FPPLAB_WORKERS``) changes wall-clock only, never results:
replica r always draws from the same split stream and reductions run in
replica order.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis, fpp, io, rcm
from .environments import (
    ExpDecay,
    IndicatorBelow,
    TabulatedDecreasing,
    InterlacementSampler,
    dirichlet_green_column,
    sample_gff_dirichlet,
)
from .lattice import build_box
from .rng import RngStream

EXPERIMENT_KINDS = (
    "gff-covariance",
    "fpp-time-constant",
    "shape",
    "crossing",
    "decoupling",
    "green-decay",
    "heat-kernel",
    "interlacement-occupation",
    "schedule-diagnostics",
)

SCHEMA_VERSION = 1


def _default_workers() -> int:
    try:
        return max(1, int(os.environ.get("FPPLAB_WORKERS", "1")))
    except ValueError:
        return 1


def _replica_map(fn, replicas: int, workers: int) -> list:
    """fn(r) for r in range(replicas), results in replica order."""
    if workers <= 1:
        return [fn(r) for r in range(replicas)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(replicas)))


def _parse_functional(spec: dict):
    kind = spec.get("type")
    if kind == "indicator-below":
        return IndicatorBelow(float(spec["h"]))
    if kind == "exp-decay":
        return ExpDecay(float(spec["gamma"]))
    if kind == "tabulated":
        return TabulatedDecreasing(np.asarray(spec["knots"], float), np.asarray(spec["values"], float))
    raise ValueError(f"unknown functional type {kind!r}")


def _parse_model(spec: dict):
    kind = spec.get("kind")
    if kind == "iid":
        return fpp.IidModel(law=tuple(spec["law"]), mode=spec.get("mode", "edge"))
    if kind == "gff":
        return fpp.GffFunctionalModel(
            functional=_parse_functional(spec["functional"]),
            level_shift=float(spec.get("level_shift", 0.0)),
            mode=spec.get("mode", "vertex"),
        )
    raise ValueError(f"unknown model kind {kind!r}")


# -- validation ------------------------------------------------------------


def validate_config(cfg: dict) -> list[str]:
    """All violated preconditions; empty list means the config is runnable."""
    errors = []
    kind = cfg.get("experiment")
    if kind not in EXPERIMENT_KINDS:
        errors.append(f"experiment must be one of {EXPERIMENT_KINDS}, got {kind!r}")
        return errors
    if not isinstance(cfg.get("seed", 0), int):
        errors.append("seed must be an integer")
    reps = cfg.get("replicas", 1)
    if not isinstance(reps, int) or reps < 1:
        errors.append("replicas must be a positive integer")

    if kind == "gff-covariance":
        sides = cfg.get("sides", [])
        if not sides or any(int(s) < 1 for s in sides):
            errors.append("sides must be positive")
    elif kind == "fpp-time-constant":
        try:
            _parse_model(cfg.get("model", {}))
        except (ValueError, KeyError) as e:
            errors.append(f"model: {e}")
        levels = cfg.get("n_levels", [])
        if len(levels) < 1 or any(b <= a for a, b in zip(levels, levels[1:])):
            errors.append("n_levels must be non-empty and strictly increasing")
        if not any(cfg.get("direction", [])):
            errors.append("direction must be a nonzero integer vector")
    elif kind == "shape":
        try:
            _parse_model(cfg.get("model", {}))
        except (ValueError, KeyError) as e:
            errors.append(f"model: {e}")
        t_levels = cfg.get("t_levels", [])
        if len(t_levels) < 2 or any(b <= a for a, b in zip(t_levels, t_levels[1:])):
            errors.append("t_levels must have >= 2 strictly increasing entries")
    elif kind == "crossing":
        if int(cfg.get("scale", 0)) < 1:
            errors.append("scale must be >= 1")
        grid = cfg.get("h_grid", [])
        if len(grid) < 1 or any(b <= a for a, b in zip(grid, grid[1:])):
            errors.append("h_grid must be non-empty and strictly increasing")
    elif kind == "decoupling":
        if cfg.get("u_hat", 0.0) >= cfg.get("u", 0.0):
            errors.append("u_hat must be < u")
        if int(cfg.get("separation", 0)) < 1:
            errors.append("separation must be >= 1")
        if int(cfg.get("window", 0)) < 1:
            errors.append("window must be >= 1")
    elif kind == "green-decay":
        env = cfg.get("environment", {})
        d = int(env.get("dimension", 3))
        if d < 3:
            errors.append("green-decay requires d >= 3")
        for h in cfg.get("h_grid", [0.0]):
            if not 0.0 <= float(h) <= 1.0:
                errors.append(f"h must lie in [0, 1], got {h}")
    elif kind == "heat-kernel":
        for h in [cfg.get("environment", {}).get("h", 0.0)]:
            if not 0.0 <= float(h) <= 1.0:
                errors.append(f"h must lie in [0, 1], got {h}")
        t_grid = cfg.get("t_grid", [])
        if len(t_grid) < 1 or any(float(t) < 0 for t in t_grid):
            errors.append("t_grid must be non-empty with t >= 0")
    elif kind == "interlacement-occupation":
        d = int(cfg.get("dimension", 3))
        if d < 3:
            errors.append("interlacements require d >= 3")
        if float(cfg.get("u", 0.0)) <= 0:
            errors.append("u must be > 0")
    elif kind == "schedule-diagnostics":
        if float(cfg.get("delta", 0.0)) <= 1.0:
            errors.append("delta must be > 1")
        if float(cfg.get("rho", 0.0)) <= 0:
            errors.append("rho must be > 0")
        if float(cfg.get("l0", 0.0)) <= 0:
            errors.append("L0 must be > 0")
    return errors


# -- experiment runners ----------------------------------------------------


def _env_from_config(spec: dict, rng: RngStream):
    kind = spec.get("kind", "homogeneous")
    d = int(spec.get("dimension", 3))
    side = int(spec.get("side", 16))
    box = build_box(d, (side,) * d)
    h = float(spec.get("h", 0.0))
    if kind == "homogeneous":
        return rcm.homogeneous_environment(box, a=float(spec.get("a", 1.0)), h=h)
    if kind == "gff":
        field = sample_gff_dirichlet(box, rng)
        return rcm.build_gff_rcm(field, beta=float(spec.get("beta", 0.25)), h=h)
    raise ValueError(f"unknown environment kind {kind!r}")


def _run_schedule(cfg, out, rng, workers):
    sched = fpp.build_scale_schedule(
        delta=float(cfg["delta"]),
        rho=float(cfg["rho"]),
        big_k=int(cfg.get("big_k", 0)),
        l0=float(cfg["l0"]),
        k_max=int(cfg.get("k_max", 20)),
        eps=float(cfg.get("eps", 1.0)),
    )
    ok = sched.invariants_hold()
    rows = [
        (k, sched.lengths[k], sched.rho_k[k], sched.eps_k[k], sched.a_k[k], sched.ratio[k], int(ok))
        for k in range(sched.k_max + 1)
    ]
    io.write_csv(out / "schedule.csv", ["k", "L_k", "rho_k", "eps_k", "a_k", "ratio", "invariants_ok"], rows)
    return {"invariants_hold": ok, "ratio_bound": sched.ratio_bound}


def _run_gff_covariance(cfg, out, rng, workers):
    sides = tuple(int(s) for s in cfg["sides"])
    box = build_box(len(sides), sides)
    replicas = int(cfg["replicas"])
    center = box.center_vertex()
    ci = int(box.vertex_index(center))
    pairs = cfg.get("pairs")
    if pairs is None:
        others = [center]
        for ax in range(box.d):
            nb = center.copy()
            nb[ax] += 1
            if bool(box.contains(nb)):
                others.append(nb)
        pairs = [[center.tolist(), o.tolist() if hasattr(o, "tolist") else o] for o in others]
    idx_pairs = [(int(box.vertex_index(np.asarray(a))), int(box.vertex_index(np.asarray(b)))) for a, b in pairs]
    track = sorted({i for p in idx_pairs for i in p} | {ci})
    pos = {v: i for i, v in enumerate(track)}

    def one(r):
        f = sample_gff_dirichlet(box, rng.split(r))
        return f.values[track]

    vals = np.asarray(_replica_map(one, replicas, workers))
    rows = []
    worst_z = 0.0
    for (a, b) in idx_pairs:
        emp = float(np.mean(vals[:, pos[a]] * vals[:, pos[b]]))
        oracle = float(dirichlet_green_column(box, b)[a])
        se = float(np.std(vals[:, pos[a]] * vals[:, pos[b]], ddof=1) / np.sqrt(replicas))
        z = abs(emp - oracle) / se if se > 0 else 0.0
        worst_z = max(worst_z, z)
        rows.append((a, b, emp, oracle, se, z))
    io.write_csv(out / "covariance.csv", ["x", "y", "empirical", "oracle", "stderr", "z"], rows)
    return {"worst_z": worst_z, "passes_4sigma": worst_z <= 4.0, "replicas": replicas}


def _run_time_constant(cfg, out, rng, workers):
    model = _parse_model(cfg["model"])
    est = fpp.estimate_time_constant(
        model,
        direction=tuple(cfg["direction"]),
        n_levels=tuple(cfg["n_levels"]),
        replicas=int(cfg["replicas"]),
        rng=rng,
        pad=cfg.get("pad"),
    )
    rows = [
        (n, est.means[j], est.variances[j], est.means[j] - est.half_widths[j], est.means[j] + est.half_widths[j], est.replicas - est.censored[j])
        for j, n in enumerate(est.n_levels)
    ]
    io.write_csv(out / "time_constant.csv", ["level", "mean", "variance", "ci_low", "ci_high", "replicas"], rows)
    return {
        "mu_hat": est.mu_hat,
        "mu_half_width": est.mu_half_width,
        "censored": est.censored.tolist(),
        "box_sides": list(est.box_sides),
        "subadditive_decreasing": est.subadditive_decreasing,
    }


def _run_shape(cfg, out, rng, workers):
    model = _parse_model(cfg["model"])
    report = fpp.shape_convergence(
        model, t_levels=tuple(cfg["t_levels"]), replicas=int(cfg["replicas"]), rng=rng, radius=cfg.get("radius")
    )
    rows = []
    for r in range(report.hausdorff_gaps.shape[0]):
        for j in range(report.hausdorff_gaps.shape[1]):
            rows.append((r, report.t_levels[j], report.t_levels[j + 1], report.hausdorff_gaps[r, j]))
    io.write_csv(out / "shape_gaps.csv", ["replica", "t_from", "t_to", "hausdorff_gap"], rows)
    # final-t ball of replica 0 in coordinate form
    w = model.sample(build_box(2, (2 * report.radius + 1,) * 2, offset=(-report.radius,) * 2), rng.split(0))
    ball = fpp.shape_ball(w, np.zeros(2, dtype=np.int64), report.t_levels[-1])
    io.write_csv(out / "shape_ball.csv", [f"x{i}" for i in range(ball.shape[1])], [tuple(p) for p in ball])
    return {
        "mean_final_gap": float(report.hausdorff_gaps[:, -1].mean()),
        "mean_convexity_defect": float(report.convexity_defect.mean()),
    }


def _run_crossing(cfg, out, rng, workers):
    d = int(cfg.get("dimension", 3))
    sampler = analysis.GffSampler(dimension=d) if cfg.get("sampler", "gff") == "gff" else analysis.IidGaussianSampler(dimension=d)
    curve = analysis.crossing_curve(
        sampler,
        scale=int(cfg["scale"]),
        h_grid=cfg["h_grid"],
        replicas=int(cfg["replicas"]),
        rng=rng,
        threshold=float(cfg.get("threshold", 0.05)),
    )
    rows = [
        (h, curve.probabilities[j], curve.ci_low[j], curve.ci_high[j], curve.replicas)
        for j, h in enumerate(curve.h_grid)
    ]
    io.write_csv(out / "crossing.csv", ["h", "probability", "ci_low", "ci_high", "replicas"], rows)
    return {"h_star_proxy": curve.h_star_proxy, "scale": curve.scale}


def _run_decoupling(cfg, out, rng, workers):
    d = int(cfg.get("dimension", 3))
    sampler = analysis.GffSampler(dimension=d) if cfg.get("sampler", "gff") == "gff" else analysis.IidGaussianSampler(dimension=d)
    rep = analysis.decoupling_check(
        sampler,
        window=int(cfg["window"]),
        separation=int(cfg["separation"]),
        u=float(cfg["u"]),
        u_hat=float(cfg["u_hat"]),
        f1=analysis.MinAbove(float(cfg.get("f1_level", 0.0))),
        f2=analysis.MinAbove(float(cfg.get("f2_level", 0.0))),
        replicas=int(cfg["replicas"]),
        rng=rng,
        tolerance=float(cfg.get("tolerance", 0.0)),
    )
    io.write_csv(
        out / "decoupling.csv",
        ["window", "separation", "u", "u_hat", "joint_uhat", "f1_u", "f2_u", "slack", "slack_half_width", "holds"],
        [(rep.window, rep.separation, rep.u, rep.u_hat, rep.mean_joint_uhat, rep.mean_f1_u, rep.mean_f2_u, rep.slack, rep.slack_half_width, int(rep.holds))],
    )
    return {"holds": rep.holds, "slack": rep.slack, "slack_half_width": rep.slack_half_width}


def _run_green_decay(cfg, out, rng, workers):
    env_spec = dict(cfg.get("environment", {"kind": "homogeneous", "dimension": 3, "side": 24}))

    def factory(h):
        spec = dict(env_spec)
        spec["h"] = h
        return _env_from_config(spec, rng.split(0))

    fits = rcm.fit_green_decay(
        factory,
        h_grid=[float(h) for h in cfg.get("h_grid", [0.25, 0.5, 1.0])],
        distances=cfg.get("distances"),
        boundary=cfg.get("boundary", "far-field"),
        min_distance=int(cfg.get("min_distance", 8)),
    )
    rows = [(f.h, f.c_hat, f.stderr, f.ratio_to_sqrt_h) for f in fits]
    io.write_csv(out / "green_decay.csv", ["h", "c_hat", "stderr", "ratio_to_sqrt_h"], rows)
    return {"ratios": [f.ratio_to_sqrt_h for f in fits]}


def _run_heat_kernel(cfg, out, rng, workers):
    env = _env_from_config(dict(cfg.get("environment", {"kind": "homogeneous", "dimension": 3, "side": 12})), rng.split(0))
    t_grid = [float(t) for t in cfg["t_grid"]]
    evaluator = rcm.HeatKernelEvaluator(env, cfg.get("method", "auto"))
    x = env.box.center_vertex()
    rows = []
    ondiag = []
    for t in t_grid:
        sl = evaluator.slice(x, t)
        ondiag.append(sl.values[sl.x_index])
        rows.append((t, sl.values[sl.x_index], sl.mass))
        if cfg.get("save_slices"):
            io.write_array(out / f"heat_t{t:g}.bin", sl.values, {"t": t, "x_index": sl.x_index})
    io.write_csv(out / "heat_kernel.csv", ["t", "ondiag", "mass"], rows)
    summary = {"t_grid": t_grid, "ondiag": [float(v) for v in ondiag]}
    if len(t_grid) >= 3 and t_grid[-1] / t_grid[0] >= 8.0:
        fit = analysis.heat_kernel_shape_fit(t_grid, ondiag)
        summary["ondiag_slope"] = fit.ondiag_slope
        summary["ondiag_stderr"] = fit.ondiag_stderr
    return summary


def _run_interlacement(cfg, out, rng, workers):
    d = int(cfg.get("dimension", 3))
    side = int(cfg.get("side", 5))
    box = build_box(d, (side,) * d)
    margin = int(cfg.get("ambient_margin", (side + 1) // 2 + side))
    sampler = InterlacementSampler(box, ambient_margin=margin, u=float(cfg["u"]))
    replicas = int(cfg["replicas"])

    def one(r):
        occ = sampler.sample(rng.split(r))
        return occ.values

    vals = np.asarray(_replica_map(one, replicas, workers))
    mean_occ = vals.mean(axis=0)
    vacancy = float(np.mean(np.all(vals == 0.0, axis=1)))
    cap = sampler.capacity
    expected_vacancy = float(np.exp(-float(cfg["u"]) * cap))
    rows = [(i, mean_occ[i]) for i in range(mean_occ.size)]
    io.write_csv(out / "occupation.csv", ["vertex", "mean_occupation"], rows)
    return {
        "capacity": float(cap),
        "vacancy": vacancy,
        "expected_vacancy": expected_vacancy,
        "replicas": replicas,
    }


_RUNNERS = {
    "schedule-diagnostics": _run_schedule,
    "gff-covariance": _run_gff_covariance,
    "fpp-time-constant": _run_time_constant,
    "shape": _run_shape,
    "crossing": _run_crossing,
    "decoupling": _run_decoupling,
    "green-decay": _run_green_decay,
    "heat-kernel": _run_heat_kernel,
    "interlacement-occupation": _run_interlacement,
}


# -- entry points ----------------------------------------------------------


def run_experiment(cfg: dict, out_dir, workers: int = 1) -> dict:
    """Execute one validated config; returns the JSON summary."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = int(cfg.get("seed", 0))
    rng = RngStream(seed=seed)
    t0 = time.perf_counter()
    summary = _RUNNERS[cfg["experiment"]](cfg, out, rng, workers)
    elapsed = time.perf_counter() - t0
    (out / "summary.json").write_text(json.dumps(io._jsonable(summary), indent=2, sort_keys=True) + "\n")
    manifest = io.RunManifest(
        experiment=cfg["experiment"],
        config=cfg,
        seed=seed,
        outputs=sorted(str(p.name) for p in out.iterdir() if p.name not in ("manifest.json",)),
        notes={
            "schema_version": SCHEMA_VERSION,
            "generator_family": "philox4x64",
            "wall_clock_seconds": elapsed,
            "workers": workers,
        },
    )
    manifest.write(out / "manifest.json")
    return summary


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fpplab", description="Correlated-environment FPP and RCM experiment runner")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "validate"):
        p = sub.add_parser(name)
        p.add_argument("config", type=Path)
        if name == "run":
            p.add_argument("--workers", type=int, default=_default_workers())
            p.add_argument("--seed", type=int, default=None, help="override the config seed")
            p.add_argument("--out", type=Path, default=None, help="output directory (default: runs/<config hash prefix>)")
    args = parser.parse_args(argv)

    try:
        cfg = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as e:
        print(json.dumps({"status": "error", "stage": "parse", "error": str(e)}))
        return 2

    errors = validate_config(cfg)
    if args.command == "validate":
        print(json.dumps({"status": "ok" if not errors else "invalid", "errors": errors}, indent=2))
        return 0 if not errors else 2
    if errors:
        print(json.dumps({"status": "invalid", "stage": "validate", "errors": errors}))
        return 2

    if args.seed is not None:
        cfg["seed"] = args.seed
    out = args.out if args.out is not None else Path("runs") / io.config_hash(cfg)[:12]
    try:
        summary = run_experiment(cfg, out, workers=args.workers)
    except Exception as e:  # noqa: BLE001 - converted to a machine-readable report
        report = {"status": "error", "stage": cfg["experiment"], "error": str(e), "type": type(e).__name__}
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / "error.json").write_text(json.dumps(report, indent=2) + "\n")
        print(json.dumps(report))
        return 1
    print(json.dumps({"status": "ok", "out": str(out), "summary": io._jsonable(summary)}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
