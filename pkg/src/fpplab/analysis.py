"""Statistical machinery: confidence intervals, sprinkled decoupling checks,
crossing-probability curves with a finite-size critical-level proxy, and
heat-kernel shape fits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .environments import ScalarField, sample_gff_dirichlet
from .lattice import LatticeBox, build_box, crossing_event, label_clusters
from .rng import RngStream


# -- intervals -------------------------------------------------------------


def confidence_interval(samples, level: float = 0.95) -> tuple[float, float]:
    """Normal-approximation CI: (mean, half-width)."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size < 2:
        raise ValueError("need at least 2 samples")
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    z = norm.ppf(0.5 + level / 2.0)
    half = z * x.std(ddof=1) / np.sqrt(x.size)
    return float(x.mean()), float(half)


def wilson_interval(successes: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a Bernoulli proportion."""
    if trials < 1:
        raise ValueError("need at least one trial")
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    z = norm.ppf(0.5 + level / 2.0)
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * np.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return float(center - half), float(center + half)


# -- functionals on sub-boxes ---------------------------------------------


@dataclass(frozen=True)
class MinAbove:
    """1 if min of the field over the window is >= h; increasing, {0,1}."""

    h: float

    def __call__(self, values: np.ndarray) -> float:
        return float(values.min() >= self.h)


@dataclass(frozen=True)
class FracAbove:
    """Fraction of window vertices with field >= h; increasing, [0,1]."""

    h: float

    def __call__(self, values: np.ndarray) -> float:
        return float((values >= self.h).mean())


@dataclass(frozen=True)
class ConstantOne:
    def __call__(self, values: np.ndarray) -> float:
        return 1.0


# -- decoupling / sprinkling ----------------------------------------------


@dataclass
class CorrelationReport:
    window: int
    separation: int
    u: float
    u_hat: float
    mean_joint_uhat: float  # E^uhat[f1 f2]
    mean_f1_u: float
    mean_f2_u: float
    slack: float  # E^u[f1] E^u[f2] + tol - E^uhat[f1 f2]
    slack_half_width: float
    tolerance: float
    replicas: int
    holds: bool


def decoupling_check(
    sampler,
    window: int,
    separation: int,
    u: float,
    u_hat: float,
    f1,
    f2,
    replicas: int,
    rng: RngStream,
    tolerance: float = 0.0,
    ci_level: float = 0.95,
) -> CorrelationReport:
    """Empirical sprinkled product inequality on two separated windows.

    The field is sampled once per replica (common random numbers); levels act
    as additive shifts, so u_hat < u is the increasing-functional direction.
    The check is E^{u_hat}[f1 f2] <= E^u[f1] E^u[f2] + tolerance, with a
    jackknife CI on the slack.
    """
    if u_hat >= u:
        raise ValueError("u_hat must be < u")
    if separation < 1:
        raise ValueError("windows overlap: separation must be >= 1")
    if replicas < 2:
        raise ValueError("need >= 2 replicas")

    side = 2 * window + separation + 2 * max(2, window)
    d = getattr(sampler, "dimension", 2)
    box = build_box(d, (side,) * d)
    base1 = np.zeros(d, dtype=np.int64) + max(2, window)
    base2 = base1.copy()
    base2[0] += window + separation
    idx1 = _window_indices(box, base1, window)
    idx2 = _window_indices(box, base2, window)

    joint = np.empty(replicas)
    m1 = np.empty(replicas)
    m2 = np.empty(replicas)
    for r in range(replicas):
        field = sampler.sample(box, rng.split(r))
        v1, v2 = field.values[idx1], field.values[idx2]
        joint[r] = f1(v1 + u_hat) * f2(v2 + u_hat)
        m1[r] = f1(v1 + u)
        m2[r] = f2(v2 + u)

    slack = m1.mean() * m2.mean() + tolerance - joint.mean()
    # jackknife over replicas for the slack half-width
    n = replicas
    jk = np.empty(n)
    s1, s2, sj = m1.sum(), m2.sum(), joint.sum()
    for i in range(n):
        jk[i] = ((s1 - m1[i]) / (n - 1)) * ((s2 - m2[i]) / (n - 1)) + tolerance - (sj - joint[i]) / (n - 1)
    z = norm.ppf(0.5 + ci_level / 2.0)
    half = float(z * np.sqrt(max(n - 1, 1) * np.var(jk)))
    return CorrelationReport(
        window=window,
        separation=separation,
        u=u,
        u_hat=u_hat,
        mean_joint_uhat=float(joint.mean()),
        mean_f1_u=float(m1.mean()),
        mean_f2_u=float(m2.mean()),
        slack=float(slack),
        slack_half_width=half,
        tolerance=tolerance,
        replicas=replicas,
        holds=bool(slack >= -half),
    )


def _window_indices(box: LatticeBox, base, window: int) -> np.ndarray:
    ranges = [np.arange(b, b + window) for b in np.asarray(base)]
    grids = np.meshgrid(*ranges, indexing="ij")
    coords = np.stack([g.ravel() for g in grids], axis=-1)
    return box.vertex_index(coords)


@dataclass(frozen=True)
class GffSampler:
    dimension: int = 3

    def sample(self, box: LatticeBox, rng: RngStream) -> ScalarField:
        return sample_gff_dirichlet(box, rng)


@dataclass(frozen=True)
class IidGaussianSampler:
    """i.i.d. standard normals per vertex; exact-factorization baseline."""

    dimension: int = 3

    def sample(self, box: LatticeBox, rng: RngStream) -> ScalarField:
        vals = rng.normals(box.n_vertices, tag=5)
        return ScalarField(box=box, values=vals, provenance={"sampler": "iid-gaussian", **rng.provenance()})


# -- crossing curves and the critical-level proxy -------------------------


@dataclass
class CrossingCurve:
    scale: int
    h_grid: tuple
    probabilities: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    replicas: int
    h_star_proxy: float  # smallest grid h with p < threshold (nan if none)
    threshold: float


def crossing_curve(
    sampler, scale: int, h_grid, replicas: int, rng: RngStream, threshold: float = 0.05
) -> CrossingCurve:
    """Empirical P(Q_L <-> complement of Q_2L in {phi >= h}) over a level grid.

    The field is sampled on a cube of radius 2L+1 so the target of the
    crossing (the first layer outside Q_2L) is inside the sampled region.
    Per replica the crossing indicator is non-increasing in h exactly, since
    super-level sets are nested.
    """
    h_grid = tuple(float(h) for h in h_grid)
    if len(h_grid) == 0:
        raise ValueError("h grid must be non-empty")
    if any(b <= a for a, b in zip(h_grid, h_grid[1:])):
        raise ValueError("h grid must be strictly increasing")
    L = int(scale)
    radius = 2 * L + 1
    d = getattr(sampler, "dimension", 3)
    box = build_box(d, (2 * radius + 1,) * d, offset=(-radius,) * d)
    coords = box.vertex_coords(np.arange(box.n_vertices))
    linf = np.abs(coords).max(axis=1)
    inner = np.nonzero(linf <= L)[0]
    outer = np.nonzero(linf > 2 * L)[0]

    hits = np.zeros(len(h_grid), dtype=np.int64)
    for r in range(replicas):
        field = sampler.sample(box, rng.split(r))
        for j, h in enumerate(h_grid):
            lab = label_clusters(box, field.values >= h, mode="vertex")
            if crossing_event(lab, inner, outer):
                hits[j] += 1
            else:
                # nested level sets: no crossing at h implies none above
                break
    probs = hits / replicas
    lo = np.empty(len(h_grid))
    hi = np.empty(len(h_grid))
    for j, k in enumerate(hits):
        lo[j], hi[j] = wilson_interval(int(k), replicas)
    below = np.nonzero(probs < threshold)[0]
    h_star = float(h_grid[below[0]]) if below.size else float("nan")
    return CrossingCurve(
        scale=L,
        h_grid=h_grid,
        probabilities=probs,
        ci_low=lo,
        ci_high=hi,
        replicas=replicas,
        h_star_proxy=h_star,
        threshold=threshold,
    )


def crossing_curves(sampler, scales, h_grid, replicas: int, rng: RngStream, threshold: float = 0.05) -> list[CrossingCurve]:
    """One crossing curve per scale L; replica r reuses stream r at every L."""
    return [crossing_curve(sampler, L, h_grid, replicas, rng, threshold) for L in scales]


# -- heat kernel shape fits ------------------------------------------------


@dataclass
class HeatKernelShapeFit:
    t_grid: tuple
    ondiag_slope: float
    ondiag_stderr: float
    gaussian_slopes: np.ndarray  # per t, slope of log p vs |x-y|^2/t
    gaussian_slope_mean: float


def heat_kernel_shape_fit(t_grid, ondiag_values, offdiag_by_t=None) -> HeatKernelShapeFit:
    """Fit the on-diagonal power and the Gaussian off-diagonal exponent.

    ``ondiag_values[j]`` is p(t_j, x, x).  ``offdiag_by_t[j]`` is a pair of
    arrays (squared distances |x-y|^2, p(t_j, x, y)) restricted to the
    regime |x-y| <= t_j.
    """
    t = np.asarray(t_grid, dtype=np.float64)
    if t.size < 3 or t[-1] / t[0] < 8.0:
        raise ValueError("t grid must span at least a factor 8 with >= 3 points")
    y = np.log(np.asarray(ondiag_values, dtype=np.float64))
    coef, cov = np.polyfit(np.log(t), y, 1, cov=True)
    slopes = np.array([])
    if offdiag_by_t:
        acc = []
        for (r2, p), tj in zip(offdiag_by_t, t):
            r2 = np.asarray(r2, dtype=np.float64)
            p = np.asarray(p, dtype=np.float64)
            keep = (p > 0) & (np.sqrt(r2) <= tj)
            if keep.sum() >= 3:
                acc.append(np.polyfit(r2[keep] / tj, np.log(p[keep]), 1)[0])
            else:
                acc.append(np.nan)
        slopes = np.asarray(acc)
    return HeatKernelShapeFit(
        t_grid=tuple(t.tolist()),
        ondiag_slope=float(coef[0]),
        ondiag_stderr=float(np.sqrt(cov[0, 0])),
        gaussian_slopes=slopes,
        gaussian_slope_mean=float(np.nanmean(slopes)) if slopes.size else float("nan"),
    )
