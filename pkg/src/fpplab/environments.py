"""Random environments: Gaussian free field with Dirichlet boundary,
random-interlacement occupation times, i.i.d. baselines, and weight maps
turning scalar fields into passage times.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.fft
import scipy.sparse as sparse
import scipy.sparse.linalg as spla

from .lattice import LatticeBox, build_box
from .rng import RngStream

# tag bases separating independent uses of one RngStream
TAG_GFF = 11
TAG_IID = 23
TAG_RI_COUNT = 31
TAG_RI_START = 37
TAG_RI_WALK = 41

_DIRECT_SOLVE_LIMIT = 20000


@dataclass
class ScalarField:
    """One real value per vertex of a box, with sampling provenance."""

    box: LatticeBox
    values: np.ndarray
    provenance: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        if self.values.size != self.box.n_vertices:
            raise ValueError("field length does not match the box")


@dataclass
class PassageWeights:
    """Non-negative (possibly infinite) passage times, per edge or vertex."""

    box: LatticeBox
    mode: str  # "edge" | "vertex"
    values: np.ndarray
    level_shift: float = 0.0

    def __post_init__(self):
        if self.mode not in ("edge", "vertex"):
            raise ValueError("mode must be 'edge' or 'vertex'")
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        expected = self.box.n_edges if self.mode == "edge" else self.box.n_vertices
        if self.values.size != expected:
            raise ValueError("weight length does not match the box")
        if np.any(self.values < 0) or np.any(np.isnan(self.values)):
            raise ValueError("weights must be >= 0 (inf allowed)")


# -- Dirichlet Laplacian and Green function -------------------------------


def dirichlet_laplacian(box: LatticeBox) -> sparse.csr_matrix:
    """Sparse 2d*I - adjacency on the box (zero boundary outside)."""
    lo, hi, _ = box.edge_endpoints
    n = box.n_vertices
    a = sparse.coo_matrix((np.ones(lo.size), (lo, hi)), shape=(n, n))
    a = a + a.T
    return (sparse.identity(n, format="csr") * (2.0 * box.d) - a).tocsr()


def _solve_spd(mat: sparse.csr_matrix, b: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    n = mat.shape[0]
    if n <= _DIRECT_SOLVE_LIMIT:
        x = spla.spsolve(mat.tocsc(), b)
    else:
        precond = sparse.diags(1.0 / mat.diagonal())
        x, info = spla.cg(mat, b, rtol=rtol, atol=0.0, M=precond, maxiter=20 * n)
        if info != 0:
            raise RuntimeError(f"CG failed to converge (info={info})")
    res = np.linalg.norm(mat @ x - b) / max(np.linalg.norm(b), 1e-300)
    if res > 1e-10:
        raise RuntimeError(f"linear solve residual {res:.2e} above tolerance")
    return x


def dirichlet_green_column(box: LatticeBox, y_index: int) -> np.ndarray:
    """g(., y) for the unit-conductance generator killed outside the box."""
    b = np.zeros(box.n_vertices)
    b[y_index] = 1.0
    return _solve_spd(dirichlet_laplacian(box), b)


def dirichlet_green(box: LatticeBox, x, y) -> float:
    """Covariance oracle: the Dirichlet Green function between vertices x, y."""
    xi = int(box.vertex_index(x))
    yi = int(box.vertex_index(y))
    return float(dirichlet_green_column(box, yi)[xi])


# -- Gaussian free field ---------------------------------------------------


def _sine_eigenvalues(sides) -> np.ndarray:
    """Eigenvalues of the Dirichlet Laplacian 2d*I - adj on the box."""
    per_axis = [4.0 * np.sin(np.pi * np.arange(1, n + 1) / (2.0 * (n + 1))) ** 2 for n in sides]
    lam = np.zeros(sides)
    for ax, vals in enumerate(per_axis):
        shape = [1] * len(sides)
        shape[ax] = sides[ax]
        lam = lam + vals.reshape(shape)
    return lam


def sample_gff_dirichlet(box: LatticeBox, rng: RngStream) -> ScalarField:
    """Exact GFF sample with covariance equal to the Dirichlet Green function.

    Spectral method: independent standard normals scaled by lambda^(-1/2) in
    the discrete sine eigenbasis, transformed back by an orthonormal DST-I.
    """
    z = rng.normals(box.n_vertices, tag=TAG_GFF).reshape(box.sides)
    lam = _sine_eigenvalues(box.sides)
    phi = scipy.fft.dstn(z / np.sqrt(lam), type=1, norm="ortho")
    return ScalarField(
        box=box,
        values=phi.ravel(),
        provenance={"sampler": "gff-dirichlet-dst", **rng.provenance()},
    )


def sample_gff_batch(box: LatticeBox, rng: RngStream, replicas: int) -> np.ndarray:
    """(replicas, n_vertices) matrix of independent GFF samples.

    Replica r uses the stream split at replica index r, so the batch agrees
    with replica-by-replica calls of :func:`sample_gff_dirichlet`.
    """
    lam = _sine_eigenvalues(box.sides)
    out = np.empty((replicas, box.n_vertices))
    for r in range(replicas):
        z = rng.split(r).normals(box.n_vertices, tag=TAG_GFF).reshape(box.sides)
        out[r] = scipy.fft.dstn(z / np.sqrt(lam), type=1, norm="ortho").ravel()
    return out


# -- i.i.d. baselines ------------------------------------------------------


def sample_iid_weights(box: LatticeBox, law, mode: str, rng: RngStream) -> PassageWeights:
    """i.i.d. passage times per edge or vertex.

    ``law`` is a tuple: ("constant", c), ("bernoulli-zero", p) giving 0 w.p. p
    and 1 otherwise, ("exponential", lam), or ("lognormal", mu, sigma).
    """
    n = box.n_edges if mode == "edge" else box.n_vertices
    name = law[0]
    if name == "constant":
        c = float(law[1])
        if c < 0:
            raise ValueError("constant weight must be >= 0")
        vals = np.full(n, c)
    elif name == "bernoulli-zero":
        p = float(law[1])
        if not 0.0 <= p <= 1.0:
            raise ValueError("p must be in [0, 1]")
        u = rng.uniforms(n, tag=TAG_IID)
        vals = (u > p).astype(np.float64)
    elif name == "exponential":
        lam = float(law[1])
        if lam <= 0:
            raise ValueError("rate must be > 0")
        vals = -np.log(rng.uniforms(n, tag=TAG_IID)) / lam
    elif name == "lognormal":
        mu, sigma = float(law[1]), float(law[2])
        if sigma <= 0:
            raise ValueError("sigma must be > 0")
        vals = np.exp(mu + sigma * rng.normals(n, tag=TAG_IID))
    else:
        raise ValueError(f"unknown law {name!r}")
    return PassageWeights(box=box, mode=mode, values=vals)


# -- weight maps from fields ----------------------------------------------


@dataclass(frozen=True)
class IndicatorBelow:
    """f(t) = 1 if t < h else 0; decreasing in t."""

    h: float

    def __call__(self, t):
        return (np.asarray(t, dtype=np.float64) < self.h).astype(np.float64)


@dataclass(frozen=True)
class ExpDecay:
    """f(t) = exp(-gamma * t)."""

    gamma: float

    def __call__(self, t):
        return np.exp(-self.gamma * np.asarray(t, dtype=np.float64))


@dataclass(frozen=True)
class TabulatedDecreasing:
    """Piecewise-linear decreasing f between knots, clamped outside."""

    knots_t: tuple
    knots_f: tuple

    def __post_init__(self):
        t = np.asarray(self.knots_t, dtype=np.float64)
        f = np.asarray(self.knots_f, dtype=np.float64)
        if t.size < 2 or np.any(np.diff(t) <= 0):
            raise ValueError("knot abscissae must be strictly increasing")
        if np.any(np.diff(f) > 0) or np.any(f < 0):
            raise ValueError("tabulated f must be non-negative and decreasing")

    def __call__(self, t):
        return np.interp(np.asarray(t, dtype=np.float64), self.knots_t, self.knots_f)


def weights_from_field(field: ScalarField, functional, level_shift: float = 0.0, mode: str = "vertex") -> PassageWeights:
    """Passage times t = f(phi + u), with the half-sum rule in edge mode."""
    fv = functional(field.values + level_shift)
    if mode == "vertex":
        vals = fv
    elif mode == "edge":
        lo, hi, _ = field.box.edge_endpoints
        vals = 0.5 * (fv[lo] + fv[hi])
    else:
        raise ValueError("mode must be 'edge' or 'vertex'")
    return PassageWeights(box=field.box, mode=mode, values=vals, level_shift=level_shift)


# -- random interlacements -------------------------------------------------


@dataclass
class EquilibriumMeasure:
    ambient: LatticeBox
    k_indices: np.ndarray  # ambient dense indices of K
    weights: np.ndarray  # e_K per K vertex, same order as k_indices
    capacity: float


def equilibrium_measure(k_indices, ambient: LatticeBox) -> EquilibriumMeasure:
    """Equilibrium measure and capacity of K inside the ambient box.

    Normalized for the unit-conductance walk (total jump rate 2d) killed on
    exiting the ambient box, so cap({x}) * g_ambient(x, x) = 1.
    """
    k_indices = np.unique(np.asarray(k_indices, dtype=np.int64))
    n = ambient.n_vertices
    if k_indices.size == 0 or k_indices.min() < 0 or k_indices.max() >= n:
        raise ValueError("K must be a non-empty subset of the ambient box")
    in_k = np.zeros(n, dtype=bool)
    in_k[k_indices] = True

    lap = dirichlet_laplacian(ambient)
    # hitting probability h: solve on the complement, h = 1 on K, 0 outside
    comp = np.nonzero(~in_k)[0]
    hprob = np.ones(n)
    if comp.size:
        sub = lap[comp][:, comp]
        rhs = -lap[comp][:, k_indices] @ np.ones(k_indices.size)
        hprob[comp] = _solve_spd(sub.tocsr(), np.asarray(rhs).ravel())

    lo, hi, _ = ambient.edge_endpoints
    # e_K(x) = sum over Zd-neighbors y of (1 - h(y)); h = 0 outside ambient
    acc = np.zeros(n)
    np.add.at(acc, lo, 1.0 - hprob[hi])
    np.add.at(acc, hi, 1.0 - hprob[lo])
    acc += ambient.outside_degree.astype(np.float64)
    weights = np.maximum(acc[k_indices], 0.0)
    return EquilibriumMeasure(
        ambient=ambient,
        k_indices=k_indices,
        weights=weights,
        capacity=float(weights.sum()),
    )


def _ambient_for(box: LatticeBox, margin: int) -> LatticeBox:
    sides = tuple(s + 2 * margin for s in box.sides)
    offset = tuple(o - margin for o in box.offset)
    return build_box(box.d, sides, offset)


class InterlacementSampler:
    """Random-interlacement occupation times at level u on a target box.

    Precomputes the ambient geometry and the equilibrium measure once; each
    ``sample`` draws Poisson(u * cap(K)) unit-conductance walks started from
    the normalized equilibrium measure, killed on exiting the ambient box
    (finite-volume surrogate for transience), and accumulates the per-vertex
    time spent in the target box.  Requires d >= 3 and ambient side >= 2 *
    target side.
    """

    def __init__(self, box: LatticeBox, ambient_margin: int, u: float):
        if box.d < 3:
            raise ValueError("random interlacements require d >= 3")
        if u <= 0:
            raise ValueError("level u must be > 0")
        min_margin = (max(box.sides) + 1) // 2
        if ambient_margin < min_margin:
            raise ValueError(
                f"ambient_margin must be >= {min_margin} (ambient side >= 2x target side)"
            )
        self.box = box
        self.u = float(u)
        self.margin = int(ambient_margin)
        self.ambient = _ambient_for(box, ambient_margin)
        self.target_idx = self.ambient.vertex_index(box.vertex_coords(np.arange(box.n_vertices)))
        self.eq = equilibrium_measure(self.target_idx, self.ambient)
        lo, hi, _ = self.ambient.edge_endpoints
        n = self.ambient.n_vertices
        adj = sparse.coo_matrix((np.ones(lo.size), (lo, hi)), shape=(n, n))
        self._adj = (adj + adj.T).tocsr()
        self._exit = self.ambient.outside_degree.astype(np.float64)
        self._zero = np.zeros(n)
        self._one = np.ones(n)

    @property
    def capacity(self) -> float:
        return self.eq.capacity

    def sample(self, rng: RngStream) -> ScalarField:
        from .kernels import occupation_estimate

        n_traj = rng.poisson(self.u * self.eq.capacity, tag=TAG_RI_COUNT)
        occ_target = np.zeros(self.box.n_vertices)
        if n_traj > 0:
            starts = self.eq.k_indices[
                rng.choice_weighted(self.eq.weights, n_traj, tag=TAG_RI_START)
            ]
            occ, _, _, _ = occupation_estimate(
                self._adj.indptr,
                self._adj.indices,
                self._adj.data,
                self._exit,
                self._zero,
                self._one,
                starts,
                rng.kernel_seed(TAG_RI_WALK),
            )
            occ_target = occ[self.target_idx]

        return ScalarField(
            box=self.box,
            values=occ_target,
            provenance={
                "sampler": "interlacement-occupation",
                "u": self.u,
                "ambient_margin": self.margin,
                "capacity": self.eq.capacity,
                "n_trajectories": int(n_traj),
                "escape_error_scale": float(self.margin ** (2 - self.box.d)),
                **rng.provenance(),
            },
        )


def sample_interlacement_occupation(
    box: LatticeBox, ambient_margin: int, u: float, rng: RngStream
) -> ScalarField:
    """One-shot convenience wrapper around :class:`InterlacementSampler`."""
    return InterlacementSampler(box, ambient_margin, u).sample(rng)
