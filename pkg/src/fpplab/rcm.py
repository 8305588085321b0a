"""Random conductance models: environment construction, intrinsic (d_theta)
and Agmon (d_kappa) metrics, Green-function solves with killing, heat-kernel
evaluation, and killed-walk Monte Carlo.

The walk jumps from x to a neighbor y at rate a(x,y)/theta(x), is absorbed
at the outer boundary through per-vertex exit conductances, and is killed at
rate h*kappa(x)/theta(x).  The Green function g solves Q g = delta with
Q = diag(mu + h*kappa) - A and does not depend on theta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field, replace

import numpy as np
import scipy.sparse as sparse
import scipy.sparse.linalg as spla

from .environments import ScalarField
from .kernels import dijkstra, occupation_estimate, occupation_samples_at, positions_at_time
from .lattice import LatticeBox
from .rng import RngStream

_SAFE_EXPONENT = 40.0
_EXACT_SMALL_LIMIT = 4096

TAG_WALK = 53
TAG_HEAT = 59


@dataclass
class ConductanceEnvironment:
    """Per-edge conductances with speed and killing measures on a box.

    ``exit_a`` holds, per vertex, the total conductance toward absorbed
    neighbors outside the box (Dirichlet boundary).
    """

    box: LatticeBox
    edge_a: np.ndarray
    theta: np.ndarray
    kappa: np.ndarray
    h: float
    exit_a: np.ndarray
    provenance: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        n, m = self.box.n_vertices, self.box.n_edges
        self.edge_a = np.asarray(self.edge_a, dtype=np.float64).ravel()
        self.theta = np.asarray(self.theta, dtype=np.float64).ravel()
        self.kappa = np.asarray(self.kappa, dtype=np.float64).ravel()
        self.exit_a = np.asarray(self.exit_a, dtype=np.float64).ravel()
        if self.edge_a.size != m:
            raise ValueError("edge conductance length mismatch")
        if self.theta.size != n or self.kappa.size != n or self.exit_a.size != n:
            raise ValueError("vertex array length mismatch")
        if np.any(self.edge_a < 0) or np.any(self.exit_a < 0):
            raise ValueError("conductances must be >= 0")
        if np.any(self.theta <= 0) or np.any(self.kappa <= 0):
            raise ValueError("theta and kappa must be strictly positive")
        if not 0.0 <= self.h <= 1.0:
            raise ValueError("killing scalar h must lie in [0, 1]")

    def mu(self) -> np.ndarray:
        """Total conductance per vertex, including absorbed-neighbor edges."""
        lo, hi, _ = self.box.edge_endpoints
        out = self.exit_a.copy()
        np.add.at(out, lo, self.edge_a)
        np.add.at(out, hi, self.edge_a)
        return out

    def nu(self) -> np.ndarray:
        """Sum of 1/a over in-box edges with a > 0, per vertex."""
        lo, hi, _ = self.box.edge_endpoints
        inv = np.where(self.edge_a > 0, 1.0 / np.where(self.edge_a > 0, self.edge_a, 1.0), 0.0)
        out = np.zeros(self.box.n_vertices)
        np.add.at(out, lo, inv)
        np.add.at(out, hi, inv)
        return out

    def with_h(self, h: float) -> "ConductanceEnvironment":
        return replace(self, h=float(h))

    def adjacency(self) -> sparse.csr_matrix:
        lo, hi, _ = self.box.edge_endpoints
        n = self.box.n_vertices
        a = sparse.coo_matrix((self.edge_a, (lo, hi)), shape=(n, n))
        return (a + a.T).tocsr()

    def operator(self, extra_exit=None) -> sparse.csr_matrix:
        """SPD matrix Q = diag(mu + h*kappa) - A with Dirichlet absorption.

        ``extra_exit`` replaces the default exit conductances (boundary modes).
        """
        adj = self.adjacency()
        exit_a = self.exit_a if extra_exit is None else np.asarray(extra_exit, dtype=np.float64)
        lo, hi, _ = self.box.edge_endpoints
        interior = np.zeros(self.box.n_vertices)
        np.add.at(interior, lo, self.edge_a)
        np.add.at(interior, hi, self.edge_a)
        diag = interior + exit_a + self.h * self.kappa
        return (sparse.diags(diag) - adj).tocsr()

    def moment_report(self, p: float, q: float, r: float) -> dict:
        """Empirical moments of mu/theta, nu, theta, 1/theta with the
        combined-exponent flag 1/r + (r-1)/(p*r) + 1/q < 2/d."""
        mu = self.mu()
        vals = {
            "mu_over_theta_p": float(np.mean((mu / self.theta) ** p)),
            "nu_q": float(np.mean(self.nu() ** q)),
            "theta_r": float(np.mean(self.theta ** r)),
            "inv_theta_r": float(np.mean((1.0 / self.theta) ** r)),
        }
        combo = 1.0 / r + (1.0 / p) * (r - 1.0) / r + 1.0 / q
        vals["exponent_combination"] = combo
        vals["satisfies_condition"] = bool(combo < 2.0 / self.box.d)
        return vals


def homogeneous_environment(box: LatticeBox, a: float = 1.0, theta: float = 1.0, kappa: float = 1.0, h: float = 0.0) -> ConductanceEnvironment:
    """Constant conductances; boundary edges absorb with the same a."""
    return ConductanceEnvironment(
        box=box,
        edge_a=np.full(box.n_edges, a),
        theta=np.full(box.n_vertices, theta),
        kappa=np.full(box.n_vertices, kappa),
        h=h,
        exit_a=box.outside_degree.astype(np.float64) * a,
        provenance={"builder": "homogeneous", "a": a, "theta": theta, "kappa": kappa},
    )


def build_gff_rcm(field: ScalarField, beta: float, include_killing: bool = True, h: float = 0.0, theta=None) -> ConductanceEnvironment:
    """Conductances a(e) = exp(beta(phi_lo + phi_hi)), killing exp(beta*phi).

    The field is zero outside the box (Dirichlet), so absorbed-neighbor
    edges carry conductance exp(beta * phi_x) each.
    """
    if beta <= 0:
        raise ValueError("beta must be > 0")
    phi = field.values
    if np.max(np.abs(beta * phi)) > _SAFE_EXPONENT:
        raise ValueError(
            f"|beta*phi| exceeds the safe exponent range {_SAFE_EXPONENT}; "
            f"max={np.max(np.abs(beta * phi)):.2f}"
        )
    box = field.box
    lo, hi, _ = box.edge_endpoints
    edge_a = np.exp(beta * (phi[lo] + phi[hi]))
    kappa = np.exp(beta * phi) if include_killing else np.ones(box.n_vertices)
    exit_a = box.outside_degree.astype(np.float64) * np.exp(beta * phi)
    th = np.full(box.n_vertices, 1.0) if theta is None else np.asarray(theta, dtype=np.float64)
    return ConductanceEnvironment(
        box=box,
        edge_a=edge_a,
        theta=th,
        kappa=kappa,
        h=h,
        exit_a=exit_a,
        provenance={"builder": "gff-rcm", "beta": beta, **field.provenance},
    )


# -- metrics ---------------------------------------------------------------


def _metric_weights(env: ConductanceEnvironment, measure: np.ndarray) -> np.ndarray:
    lo, hi, _ = env.box.edge_endpoints
    m = np.minimum(measure[lo], measure[hi])
    w = np.full(env.box.n_edges, np.inf)
    pos = env.edge_a > 0
    w[pos] = np.sqrt(np.minimum(1.0, m[pos] / env.edge_a[pos]))
    return w


def _metric_map(env: ConductanceEnvironment, sources, weights: np.ndarray, tag: str):
    from .fpp import DistanceMap, _edge_csr

    box = env.box
    src = np.atleast_2d(np.asarray(sources))
    if src.ndim == 2 and src.shape[-1] == box.d:
        src_idx = np.asarray([box.vertex_index(s) for s in src], dtype=np.int64)
    else:
        src_idx = np.asarray(sources, dtype=np.int64).ravel()
    indptr, indices, data = _edge_csr(box, weights)
    dist = dijkstra(indptr, indices, data, src_idx, np.zeros(src_idx.size))
    return DistanceMap(box=box, sources=src_idx, distances=dist, metric=tag)


def theta_metric(env: ConductanceEnvironment, sources):
    """Intrinsic metric: per-edge weight (1 ^ (theta_lo ^ theta_hi)/a)^(1/2).

    Coincides with the chemical distance when theta = mu (constant-speed
    walk); edges with a = 0 are excluded.
    """
    return _metric_map(env, sources, _metric_weights(env, env.theta), "d_theta")


def kappa_metric(env: ConductanceEnvironment, sources):
    """Agmon metric: as theta_metric with the killing measure in place of theta."""
    return _metric_map(env, sources, _metric_weights(env, env.kappa), "d_kappa")


def chemical_distance(env: ConductanceEnvironment, sources):
    """Graph distance inside the positive-conductance cluster."""
    w = np.where(env.edge_a > 0, 1.0, np.inf)
    return _metric_map(env, sources, w, "chemical")


# -- Green function --------------------------------------------------------


@dataclass
class GreenColumn:
    env: ConductanceEnvironment
    y_index: int
    values: np.ndarray
    residual: float
    boundary: str


def _farfield_exit(env: ConductanceEnvironment, y_coords) -> np.ndarray:
    """Radiation-condition exit conductances adapted to a source at y.

    The exterior value is modeled as g(x) * (r_x/r_o) * exp(-sqrt(h)(r_o-r_x))
    along each absorbed edge, matching the |x-y|^(2-d) e^(-sqrt(h)|x-y|) far
    field; the resulting Robin exit rate stays non-negative, so the operator
    remains SPD.
    """
    box = env.box
    y = np.asarray(y_coords, dtype=np.float64)
    coords = box.vertex_coords(np.arange(box.n_vertices)).astype(np.float64)
    rx = np.linalg.norm(coords - y, axis=1)
    sq = math.sqrt(env.h)
    exit_a = np.zeros(box.n_vertices)
    offs = np.asarray(box.offset)
    sides = np.asarray(box.sides)
    # per-vertex boundary conductance per missing neighbor: exit_a/outside_deg
    deg = box.outside_degree
    per_edge = np.zeros(box.n_vertices)
    nz = deg > 0
    per_edge[nz] = env.exit_a[nz] / deg[nz]
    for ax in range(box.d):
        for sgn in (-1, 1):
            face = coords[:, ax] == (offs[ax] if sgn < 0 else offs[ax] + sides[ax] - 1)
            o = coords[face].copy()
            o[:, ax] += sgn
            ro = np.linalg.norm(o - y, axis=1)
            rr = np.maximum(rx[face], 1e-12)
            factor = np.where(
                ro > 0,
                (rr / ro) ** (box.d - 2) * np.exp(-sq * (ro - rr)),
                0.0,
            )
            exit_a[face] += per_edge[face] * np.maximum(0.0, 1.0 - factor)
    return exit_a


def solve_green(env: ConductanceEnvironment, y, boundary: str = "absorbing", rtol: float = 1e-10) -> GreenColumn:
    """Green column g(., y): preconditioned CG on Q g = delta_y.

    ``boundary`` is "absorbing" (zero Dirichlet outside, the default) or
    "far-field" (source-adapted radiation condition; used for power-law
    decay studies where plain truncation biases the far field).
    """
    box = env.box
    yi = int(box.vertex_index(y)) if np.ndim(y) else int(y)
    if env.h == 0.0 and boundary == "absorbing" and not np.any(env.exit_a > 0):
        raise ValueError("singular system: h = 0 with no boundary absorption")
    if boundary == "absorbing":
        q = env.operator()
    elif boundary == "far-field":
        q = env.operator(extra_exit=_farfield_exit(env, box.vertex_coords(yi)))
    else:
        raise ValueError(f"unknown boundary mode {boundary!r}")
    b = np.zeros(box.n_vertices)
    b[yi] = 1.0
    precond = sparse.diags(1.0 / q.diagonal())
    g, info = spla.cg(q, b, rtol=rtol, atol=0.0, M=precond, maxiter=40 * box.n_vertices)
    if info != 0:
        raise RuntimeError(f"CG did not converge (info={info})")
    res = float(np.linalg.norm(q @ g - b))
    if res > 1e-9:
        raise RuntimeError(f"green solve residual {res:.2e} above tolerance")
    return GreenColumn(env=env, y_index=yi, values=np.maximum(g, 0.0), residual=res, boundary=boundary)


# -- heat kernel -----------------------------------------------------------


@dataclass
class HeatKernelSlice:
    env: ConductanceEnvironment
    x_index: int
    t: float
    values: np.ndarray  # p(t, x, .) = P_x[X_t = .]/theta(.)
    method: str
    mass: float  # sum_y p * theta(y) <= 1
    error_note: str = ""


class HeatKernelEvaluator:
    """Evaluates p(t, x, .) via the symmetrized operator.

    exact-small: dense eigendecomposition (vertex count <= 4096), reusable
    across times and sources.  krylov: sparse expm-multiply per (x, t).
    """

    def __init__(self, env: ConductanceEnvironment, method: str = "auto"):
        self.env = env
        n = env.box.n_vertices
        if method == "auto":
            method = "exact-small" if n <= _EXACT_SMALL_LIMIT else "krylov"
        if method == "exact-small" and n > _EXACT_SMALL_LIMIT:
            raise ValueError(f"exact-small limited to {_EXACT_SMALL_LIMIT} vertices")
        self.method = method
        s = 1.0 / np.sqrt(env.theta)
        self._s = s
        q = env.operator()
        self._b = sparse.diags(s) @ q @ sparse.diags(s)
        self._eig = None
        if method == "exact-small":
            import scipy.linalg

            lam, vec = scipy.linalg.eigh(self._b.toarray())
            self._eig = (lam, vec)

    def slice(self, x, t: float) -> HeatKernelSlice:
        env = self.env
        xi = int(env.box.vertex_index(x)) if np.ndim(x) else int(x)
        if t < 0:
            raise ValueError("t must be >= 0")
        if self._eig is not None:
            lam, vec = self._eig
            core = vec @ (np.exp(-t * lam) * vec[xi])
            note = "dense eigendecomposition"
        else:
            v = np.zeros(env.box.n_vertices)
            v[xi] = 1.0
            core = spla.expm_multiply(-t * self._b, v)
            note = "krylov expm-multiply"
        p = self._s[xi] * self._s * core
        p = np.maximum(p, 0.0)
        mass = float(np.sum(p * env.theta))
        return HeatKernelSlice(
            env=env, x_index=xi, t=float(t), values=p, method=self.method, mass=mass, error_note=note
        )

    def slices(self, x, t_list) -> list[HeatKernelSlice]:
        return [self.slice(x, t) for t in t_list]


def heat_kernel(env: ConductanceEnvironment, x, t: float, method: str = "auto", rng: RngStream = None, n_walks: int = 100000) -> HeatKernelSlice:
    """One heat-kernel slice p(t, x, .) by the selected method."""
    if method == "monte-carlo":
        if rng is None:
            raise ValueError("monte-carlo method needs an RngStream")
        return _heat_kernel_mc(env, x, t, rng, n_walks)
    return HeatKernelEvaluator(env, method).slice(x, t)


def _walk_arrays(env: ConductanceEnvironment):
    adj = env.adjacency()
    return (
        adj.indptr.astype(np.int64),
        adj.indices.astype(np.int64),
        adj.data,
        env.exit_a,
        env.h * env.kappa,
        env.theta,
    )


def _heat_kernel_mc(env: ConductanceEnvironment, x, t, rng, n_walks) -> HeatKernelSlice:
    box = env.box
    xi = int(box.vertex_index(x)) if np.ndim(x) else int(x)
    indptr, indices, rates, exit_a, kill, theta = _walk_arrays(env)
    starts = np.full(n_walks, xi, dtype=np.int64)
    pos = positions_at_time(indptr, indices, rates, exit_a, kill, theta, starts, rng.kernel_seed(TAG_HEAT), t)
    counts = np.bincount(pos[pos >= 0], minlength=box.n_vertices).astype(np.float64)
    p = counts / n_walks / env.theta
    return HeatKernelSlice(
        env=env,
        x_index=xi,
        t=float(t),
        values=p,
        method="monte-carlo",
        mass=float(np.sum(p * env.theta)),
        error_note=f"{n_walks} walks",
    )


# -- killed-walk simulation ------------------------------------------------


@dataclass
class WalkTrajectory:
    jump_times: np.ndarray
    vertices: np.ndarray  # dense indices, starting vertex first
    outcome: str  # "killed" | "exited" | "horizon" | "frozen"


def simulate_killed_walk(env: ConductanceEnvironment, x, horizon: float, rng: RngStream) -> WalkTrajectory:
    """One continuous-time trajectory up to the horizon.

    Jumps to neighbor y at rate a(x,y)/theta(x); killed at rate
    h*kappa(x)/theta(x); absorbed through boundary exit conductances.  A
    vertex with zero total rate freezes the walker to the horizon.
    """
    box = env.box
    xi = int(box.vertex_index(x)) if np.ndim(x) else int(x)
    indptr, indices, rates, exit_a, kill, theta = _walk_arrays(env)
    u_iter = _uniform_source(rng)
    times = [0.0]
    verts = [xi]
    t = 0.0
    cur = xi
    outcome = "horizon"
    while True:
        row = slice(indptr[cur], indptr[cur + 1])
        nbr_rates = rates[row]
        total = nbr_rates.sum() + exit_a[cur] + kill[cur]
        if total <= 0:
            outcome = "frozen"
            break
        dt = -math.log(next(u_iter)) * theta[cur] / total
        if t + dt >= horizon:
            break
        t += dt
        v = next(u_iter) * total
        csum = np.cumsum(nbr_rates)
        interior_total = csum[-1] if csum.size else 0.0
        if v < interior_total:
            cur = int(indices[row][np.searchsorted(csum, v, side="right")])
            times.append(t)
            verts.append(cur)
        elif v < interior_total + exit_a[cur]:
            outcome = "exited"
            break
        else:
            outcome = "killed"
            break
    return WalkTrajectory(jump_times=np.asarray(times), vertices=np.asarray(verts, dtype=np.int64), outcome=outcome)


def _uniform_source(rng: RngStream, chunk: int = 1024):
    tag = TAG_WALK
    while True:
        for u in rng.uniforms(chunk, tag):
            yield u
        tag += 1


def monte_carlo_green(env: ConductanceEnvironment, x, n_walks: int, rng: RngStream, target=None):
    """Killed-walk occupation estimate of the Green row g(x, .).

    Occupation time at y estimates g(x,y) * theta(y).  With ``target`` set,
    returns the per-walk samples of g(x, target) for interval estimates.
    """
    box = env.box
    xi = int(box.vertex_index(x)) if np.ndim(x) else int(x)
    indptr, indices, rates, exit_a, kill, theta = _walk_arrays(env)
    starts = np.full(n_walks, xi, dtype=np.int64)
    seed = rng.kernel_seed(TAG_WALK)
    if target is not None:
        ti = int(box.vertex_index(target)) if np.ndim(target) else int(target)
        samples = occupation_samples_at(indptr, indices, rates, exit_a, kill, theta, starts, seed, ti)
        return samples / env.theta[ti]
    occ, nk, ne, nf = occupation_estimate(indptr, indices, rates, exit_a, kill, theta, starts, seed)
    if nf:
        raise RuntimeError(f"{nf} walks froze on zero-rate vertices; green estimate undefined")
    return occ / n_walks / env.theta


# -- green decay fits ------------------------------------------------------


@dataclass
class GreenDecayFit:
    h: float
    c_hat: float
    stderr: float
    ratio_to_sqrt_h: float
    distances: np.ndarray
    greens: np.ndarray


def symmetric_axis_pairs(box: LatticeBox, distances, directions=None):
    """(source, target) coordinate pairs centered on the box center."""
    c = box.center_vertex()
    if directions is None:
        directions = [np.eye(box.d, dtype=np.int64)[ax] for ax in range(box.d)]
    pairs = []
    for r in distances:
        for e in directions:
            src = c - (r // 2) * np.asarray(e)
            tgt = src + r * np.asarray(e)
            if bool(box.contains(src)) and bool(box.contains(tgt)):
                pairs.append((src, tgt, int(r)))
    return pairs


def green_samples(env: ConductanceEnvironment, pairs, boundary: str = "absorbing"):
    """Green values for (source, target, r) pairs; one solve per source."""
    rs, gs = [], []
    by_src = {}
    for src, tgt, r in pairs:
        by_src.setdefault(tuple(np.asarray(src).tolist()), []).append((tgt, r))
    for src, tgts in by_src.items():
        col = solve_green(env, np.asarray(src), boundary=boundary)
        for tgt, r in tgts:
            rs.append(r)
            gs.append(col.values[env.box.vertex_index(tgt)])
    return np.asarray(rs, dtype=np.float64), np.asarray(gs)


def fit_green_decay(env_factory, h_grid, distances=None, boundary: str = "far-field", min_distance: int = 8) -> list[GreenDecayFit]:
    """Per-h exponential decay rate of the Green function.

    Fits log g + (d-2) log|x-y| = const - c(h) |x-y| by least squares over
    symmetric interior pairs; pairs below ``min_distance`` are excluded
    (pre-asymptotic regime).  Reports c_hat, its standard error, and
    c_hat/sqrt(h).
    """
    fits = []
    for h in h_grid:
        env = env_factory(h)
        if env.box.d < 3:
            raise ValueError("green decay fits require d >= 3")
        if distances is None:
            half = min(env.box.sides) // 2
            distances = [r for r in (8, 10, 12, 14, 16, 20) if r <= half - 4]
        dists = [r for r in distances if r >= min_distance]
        if len(set(dists)) < 3:
            raise ValueError("need at least 3 distance levels")
        pairs = symmetric_axis_pairs(env.box, dists)
        rs, gs = green_samples(env, pairs, boundary=boundary)
        keep = gs > 0
        rs, gs = rs[keep], gs[keep]
        y = np.log(gs) + (env.box.d - 2) * np.log(rs)
        coef, cov = np.polyfit(rs, y, 1, cov=True)
        c_hat = -float(coef[0])
        fits.append(
            GreenDecayFit(
                h=float(h),
                c_hat=c_hat,
                stderr=float(np.sqrt(cov[0, 0])),
                ratio_to_sqrt_h=float(c_hat / math.sqrt(h)) if h > 0 else float("nan"),
                distances=rs,
                greens=gs,
            )
        )
    return fits
