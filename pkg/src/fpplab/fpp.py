"""First passage percolation: distance maps, time-constant and limit-shape
estimation, zero-cluster criteria, growth exponents, and the renormalization
scale schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.sparse as sparse
from scipy.special import zeta

from . import analysis
from .environments import PassageWeights, sample_gff_dirichlet, sample_iid_weights, weights_from_field
from .kernels import dijkstra
from .lattice import LatticeBox, build_box, label_clusters
from .rng import RngStream


@dataclass
class DistanceMap:
    """Per-vertex distances from a source set under a chosen metric."""

    box: LatticeBox
    sources: np.ndarray  # dense indices
    distances: np.ndarray
    metric: str = "fpp-edge"

    def at(self, coords) -> float:
        return float(self.distances[self.box.vertex_index(coords)])


def _edge_csr(box: LatticeBox, edge_weights: np.ndarray):
    lo, hi, _ = box.edge_endpoints
    n = box.n_vertices
    rows = np.concatenate([lo, hi])
    cols = np.concatenate([hi, lo])
    data = np.concatenate([edge_weights, edge_weights])
    # scipy drops explicit zeros/inf handling is ours: keep inf entries, they
    # are skipped by the kernel. csr_matrix would sum duplicates; none here.
    g = sparse.csr_matrix((data, (rows, cols)), shape=(n, n))
    return g.indptr.astype(np.int64), g.indices.astype(np.int64), g.data


def _vertex_csr(box: LatticeBox, vertex_weights: np.ndarray):
    lo, hi, _ = box.edge_endpoints
    n = box.n_vertices
    rows = np.concatenate([lo, hi])
    cols = np.concatenate([hi, lo])
    data = vertex_weights[cols]
    g = sparse.csr_matrix((data, (rows, cols)), shape=(n, n))
    return g.indptr.astype(np.int64), g.indices.astype(np.int64), g.data


def fpp_distances(weights: PassageWeights, sources) -> DistanceMap:
    """Exact shortest-path FPP distances from a source set.

    Edge mode minimizes the sum of edge times along the path.  Vertex mode
    charges every visited vertex including both endpoints, so the distance at
    a source equals its own passage time.
    """
    box = weights.box
    src = np.atleast_2d(np.asarray(sources))
    if src.shape[-1] == box.d and src.ndim == 2:
        src_idx = np.asarray([box.vertex_index(s) for s in src], dtype=np.int64)
    else:
        src_idx = np.asarray(sources, dtype=np.int64).ravel()
    if src_idx.size == 0:
        raise ValueError("sources must be non-empty")

    if weights.mode == "edge":
        indptr, indices, data = _edge_csr(box, weights.values)
        init = np.zeros(src_idx.size)
        metric = "fpp-edge"
    else:
        indptr, indices, data = _vertex_csr(box, weights.values)
        init = weights.values[src_idx].astype(np.float64)
        metric = "fpp-vertex"
    dist = dijkstra(indptr, indices, data, src_idx, init)
    return DistanceMap(box=box, sources=src_idx, distances=dist, metric=metric)


# -- weight models ---------------------------------------------------------


@dataclass(frozen=True)
class IidModel:
    """i.i.d. passage times with the given law ('edge' or 'vertex' mode)."""

    law: tuple
    mode: str = "edge"
    kind: str = "iid"

    def sample(self, box: LatticeBox, rng: RngStream) -> PassageWeights:
        return sample_iid_weights(box, self.law, self.mode, rng)


@dataclass(frozen=True)
class GffFunctionalModel:
    """Passage times f(phi + u) of a Dirichlet GFF sample."""

    functional: object
    level_shift: float = 0.0
    mode: str = "vertex"
    kind: str = "gff"

    def sample(self, box: LatticeBox, rng: RngStream) -> PassageWeights:
        field = sample_gff_dirichlet(box, rng)
        return weights_from_field(field, self.functional, self.level_shift, self.mode)


# -- time constant ---------------------------------------------------------


@dataclass
class TimeConstantEstimate:
    direction: tuple
    n_levels: tuple
    means: np.ndarray  # mean of d(0, nx)/n per level (finite replicas)
    variances: np.ndarray
    half_widths: np.ndarray
    censored: np.ndarray  # replicas with unreachable endpoint, per level
    replicas: int
    mu_hat: float
    mu_half_width: float
    pad: int
    box_sides: tuple
    subadditive_decreasing: bool = True


def _level_geometry(direction, n_levels, pad):
    x = np.asarray(direction, dtype=np.int64)
    max_n = int(max(n_levels))
    sides = tuple(int(abs(xi) * max_n + 2 * pad + 1) for xi in x)
    source = np.array([pad + (abs(xi) * max_n if xi < 0 else 0) for xi in x], dtype=np.int64)
    return build_box(len(x), sides), source, x


def sample_level_distances(model, direction, n_levels, replicas, rng: RngStream, pad=None):
    """(replicas, levels) matrix of d(0, n x) per replica; inf if unreachable."""
    n_levels = tuple(int(n) for n in n_levels)
    if any(b <= a for a, b in zip(n_levels, n_levels[1:])):
        raise ValueError("n_levels must be strictly increasing")
    if pad is None:
        pad = max(1, int(math.ceil(max(n_levels) / 4)))
    box, source, x = _level_geometry(direction, n_levels, pad)
    out = np.empty((replicas, len(n_levels)))
    for r in range(replicas):
        w = model.sample(box, rng.split(r))
        dm = fpp_distances(w, [source])
        for j, n in enumerate(n_levels):
            out[r, j] = dm.at(source + n * x)
    return out, box, pad


def estimate_time_constant(
    model, direction, n_levels, replicas: int, rng: RngStream, pad=None, ci_level: float = 0.95
) -> TimeConstantEstimate:
    """Monte Carlo estimate of the time constant along an integer direction.

    Reports per-level means of d(0, nx)/n and takes the largest-level mean as
    mu_hat (subadditive means over-estimate the limit, so the bias sign is
    known).  Unreachable endpoints are censored, not raised.
    """
    dists, box, pad = sample_level_distances(model, direction, n_levels, replicas, rng, pad)
    n_arr = np.asarray(n_levels, dtype=np.float64)
    norm = dists / n_arr
    means = np.empty(len(n_levels))
    variances = np.empty(len(n_levels))
    half = np.empty(len(n_levels))
    censored = np.empty(len(n_levels), dtype=np.int64)
    for j in range(len(n_levels)):
        col = norm[:, j]
        finite = col[np.isfinite(col)]
        censored[j] = replicas - finite.size
        if finite.size == 0:
            means[j], variances[j], half[j] = np.inf, np.nan, np.nan
        elif finite.size == 1:
            means[j], variances[j], half[j] = finite[0], np.nan, np.nan
        else:
            m, hw = analysis.confidence_interval(finite, ci_level)
            means[j], variances[j], half[j] = m, float(np.var(finite, ddof=1)), hw
    finite_means = means[np.isfinite(means)]
    decreasing = bool(np.all(np.diff(finite_means) <= 1e-12)) if finite_means.size > 1 else True
    return TimeConstantEstimate(
        direction=tuple(int(v) for v in direction),
        n_levels=tuple(n_levels),
        means=means,
        variances=variances,
        half_widths=half,
        censored=censored,
        replicas=replicas,
        mu_hat=float(means[-1]),
        mu_half_width=float(half[-1]),
        pad=pad,
        box_sides=box.sides,
        subadditive_decreasing=decreasing,
    )


# -- shape -----------------------------------------------------------------


def shape_ball(weights: PassageWeights, source, t: float) -> np.ndarray:
    """Coordinates of the sub-level set {x : d(source, x) <= t}."""
    if t < 0:
        raise ValueError("t must be >= 0")
    dm = fpp_distances(weights, [np.asarray(source)])
    idx = np.nonzero(dm.distances <= t)[0]
    return dm.box.vertex_coords(idx)


def _hausdorff(p: np.ndarray, q: np.ndarray) -> float:
    from scipy.spatial import cKDTree

    tp, tq = cKDTree(p), cKDTree(q)
    d1 = tp.query(q)[0].max() if len(q) else np.inf
    d2 = tq.query(p)[0].max() if len(p) else np.inf
    return float(max(d1, d2))


@dataclass
class ShapeConvergenceReport:
    t_levels: tuple
    hausdorff_gaps: np.ndarray  # (replicas, len(t)-1)
    convexity_defect: np.ndarray  # per replica, final ball
    radius: int


def shape_convergence(model, t_levels, replicas: int, rng: RngStream, radius=None) -> ShapeConvergenceReport:
    """Hausdorff gaps between consecutive normalized balls B(t)/t.

    Also scores a convexity defect of the final normalized ball: the fraction
    of midpoints of hull-vertex pairs that fall outside the ball.
    """
    t_levels = tuple(float(t) for t in t_levels)
    if any(b <= a for a, b in zip(t_levels, t_levels[1:])):
        raise ValueError("t_levels must be increasing")
    if radius is None:
        radius = int(math.ceil(t_levels[-1])) + 1
    # direction count from the model mode is unknown; shape runs are d >= 2
    d = getattr(model, "dimension", 2)
    box = build_box(d, (2 * radius + 1,) * d, offset=(-radius,) * d)
    source = np.zeros(d, dtype=np.int64)
    gaps = np.empty((replicas, len(t_levels) - 1))
    defects = np.empty(replicas)
    for r in range(replicas):
        w = model.sample(box, rng.split(r))
        dm = fpp_distances(w, [source])
        balls = []
        for t in t_levels:
            idx = np.nonzero(dm.distances <= t)[0]
            if idx.size == 0:
                raise RuntimeError("degenerate shape ball (all distances infinite)")
            balls.append(box.vertex_coords(idx) / t)
        for j in range(len(t_levels) - 1):
            gaps[r, j] = _hausdorff(balls[j], balls[j + 1])
        defects[r] = _convexity_defect(dm, box, t_levels[-1])
    return ShapeConvergenceReport(
        t_levels=t_levels, hausdorff_gaps=gaps, convexity_defect=defects, radius=radius
    )


def _convexity_defect(dm: DistanceMap, box: LatticeBox, t: float) -> float:
    from scipy.spatial import ConvexHull, QhullError

    idx = np.nonzero(dm.distances <= t)[0]
    pts = box.vertex_coords(idx).astype(np.float64)
    if pts.shape[0] <= box.d + 1:
        return 0.0
    try:
        hull = ConvexHull(pts)
    except QhullError:
        return 0.0
    verts = pts[hull.vertices]
    bad = 0
    total = 0
    for i in range(len(verts)):
        for j in range(i + 1, len(verts)):
            total += 1
            mid = np.rint((verts[i] + verts[j]) / 2.0).astype(np.int64)
            if not bool(box.contains(mid)):
                bad += 1
                continue
            if dm.distances[box.vertex_index(mid)] > t:
                bad += 1
    return bad / total if total else 0.0


# -- zero cluster criterion ------------------------------------------------


def zero_cluster_criterion(weights: PassageWeights, source, target) -> bool:
    """True iff source and target are joined inside the zero-weight subgraph."""
    box = weights.box
    si = int(box.vertex_index(source))
    ti = int(box.vertex_index(target))
    if si == ti:
        return True
    open_mask = weights.values == 0.0
    lab = label_clusters(box, open_mask, mode=weights.mode)
    ls, lt = lab.labels[si], lab.labels[ti]
    return bool(ls >= 0 and ls == lt)


# -- growth exponent -------------------------------------------------------


@dataclass
class GrowthExponentFit:
    n_levels: tuple
    log_means: np.ndarray
    slope: float
    stderr: float
    q: float
    lower_bound: float  # 1 - (d-1)/q
    satisfies_bound: bool


def growth_exponent(
    model, direction, n_levels, replicas: int, rng: RngStream, q: float = 8.0, tolerance: float = 0.1
) -> GrowthExponentFit:
    """Least-squares slope of log E[d(0, nx)] against log n."""
    if len(n_levels) < 3:
        raise ValueError("need at least 3 levels for the exponent fit")
    dists, box, _ = sample_level_distances(model, direction, n_levels, replicas, rng)
    means = np.nanmean(np.where(np.isfinite(dists), dists, np.nan), axis=0)
    if np.any(~np.isfinite(means)) or np.any(means <= 0):
        raise RuntimeError("non-positive or censored level means; exponent fit undefined")
    lx = np.log(np.asarray(n_levels, dtype=np.float64))
    ly = np.log(means)
    coef, cov = np.polyfit(lx, ly, 1, cov=True)
    d = box.d
    lower = 1.0 - (d - 1) / q
    slope = float(coef[0])
    return GrowthExponentFit(
        n_levels=tuple(n_levels),
        log_means=ly,
        slope=slope,
        stderr=float(np.sqrt(cov[0, 0])),
        q=q,
        lower_bound=lower,
        satisfies_bound=bool(slope >= lower - tolerance),
    )


# -- scale schedule --------------------------------------------------------


@dataclass
class ScaleSchedule:
    delta: float
    rho: float
    big_k: int
    l0: float
    k_max: int
    eps: float
    lengths: np.ndarray  # L_k
    rho_k: np.ndarray
    eps_k: np.ndarray
    a_k: np.ndarray
    ratio: np.ndarray  # L_k / (2^k L_0)
    ratio_bound: float  # closed-form product bound on the ratio

    def invariants_hold(self) -> bool:
        lower = np.all(self.ratio >= 1.0 - 1e-12)
        nondec = np.all(np.diff(self.ratio) >= -1e-12)
        bounded = np.all(self.ratio <= self.ratio_bound + 1e-12)
        return bool(lower and nondec and bounded)


def build_scale_schedule(delta: float, rho: float, big_k: int, l0: float, k_max: int, eps: float = 1.0) -> ScaleSchedule:
    """Deterministic renormalization sequences L_k, rho_k, eps_k, a_k.

    L_{k+1} = 2 L_k (1 + rho_k / (k+6)^delta) with rho_k = rho below K and 1
    above; eps_k is the tail sum of eps/(p+6)^delta; a_k the damped doubling
    product.  Requires delta > 1 so the tail sums converge.
    """
    if delta <= 1:
        raise ValueError("delta must be > 1 (tail sums diverge otherwise)")
    if rho <= 0 or l0 <= 0:
        raise ValueError("rho and L0 must be > 0")
    if big_k < 0 or k_max < 0:
        raise ValueError("K and k_max must be >= 0")
    ks = np.arange(k_max + 1)
    rho_k = np.where(ks < big_k, rho, 1.0)
    lengths = np.empty(k_max + 1)
    lengths[0] = l0
    for k in range(k_max):
        lengths[k + 1] = 2.0 * lengths[k] * (1.0 + rho_k[k] / (k + 6.0) ** delta)
    # eps_k = sum_{p>=k} eps/(p+6)^delta = eps * HurwitzZeta(delta, k+6)
    eps_k = eps * zeta(delta, ks + 6.0)
    a_k = np.empty(k_max + 1)
    a_k[0] = 1.0
    for k in range(k_max):
        a_k[k + 1] = a_k[k] * 2.0 * (1.0 - 1.0 / (k + 6.0) ** delta)
    ratio = lengths / (2.0 ** ks * l0)
    head = np.prod(1.0 + rho / (np.arange(min(big_k, k_max + 64)) + 6.0) ** delta)
    bound = float(head * math.exp(zeta(delta, max(big_k, 0) + 6.0)))
    return ScaleSchedule(
        delta=delta,
        rho=rho,
        big_k=big_k,
        l0=l0,
        k_max=k_max,
        eps=eps,
        lengths=lengths,
        rho_k=rho_k,
        eps_k=eps_k,
        a_k=a_k,
        ratio=ratio,
        ratio_bound=bound,
    )


# -- tail probability ------------------------------------------------------


@dataclass
class TailProbabilityCurve:
    n_levels: tuple
    c: float
    probabilities: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    replicas: int


def tail_probability_curve(model, direction, c: float, n_levels, replicas: int, rng: RngStream, pad=None) -> TailProbabilityCurve:
    """Empirical P(d(0, nx) <= c * n) per level with Wilson intervals."""
    if c <= 0:
        raise ValueError("C must be > 0")
    dists, _, _ = sample_level_distances(model, direction, n_levels, replicas, rng, pad)
    n_arr = np.asarray(n_levels, dtype=np.float64)
    hits = (dists <= c * n_arr).sum(axis=0)
    probs = hits / replicas
    lo = np.empty(len(n_levels))
    hi = np.empty(len(n_levels))
    for j, k in enumerate(hits):
        lo[j], hi[j] = analysis.wilson_interval(int(k), replicas, 0.95)
    return TailProbabilityCurve(
        n_levels=tuple(n_levels), c=c, probabilities=probs, ci_low=lo, ci_high=hi, replicas=replicas
    )
