"""Finite-lattice geometry: boxes on Z^d, edge enumeration, boundaries,
cluster labeling and connectivity events.

Vertices are indexed densely in row-major (C) order over the axes; edges are
indexed densely per axis block, each edge stored canonically as (lo, hi) with
hi - lo a positive unit vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.ndimage as ndimage
import scipy.sparse as sparse
from scipy.sparse.csgraph import connected_components

_MAX_VERTICES = 1 << 40  # dense 64-bit indexing guard


@dataclass(frozen=True)
class LatticeBox:
    """Axis-aligned box of Z^d with dense vertex and edge indexing."""

    sides: tuple[int, ...]
    offset: tuple[int, ...] = None

    def __post_init__(self):
        if len(self.sides) < 1:
            raise ValueError("dimension must be >= 1")
        if any(int(s) < 1 for s in self.sides):
            raise ValueError("all sides must be >= 1")
        object.__setattr__(self, "sides", tuple(int(s) for s in self.sides))
        off = self.offset if self.offset is not None else (0,) * len(self.sides)
        if len(off) != len(self.sides):
            raise ValueError("offset length must match dimension")
        object.__setattr__(self, "offset", tuple(int(o) for o in off))
        n = 1
        for s in self.sides:
            n *= s
        if n > _MAX_VERTICES:
            raise ValueError("vertex count overflows the dense index range")

    @property
    def d(self) -> int:
        return len(self.sides)

    @property
    def n_vertices(self) -> int:
        return int(np.prod(self.sides))

    @property
    def n_edges(self) -> int:
        total = 0
        for ax in range(self.d):
            total += (self.sides[ax] - 1) * self.n_vertices // self.sides[ax]
        return total

    @cached_property
    def strides(self) -> np.ndarray:
        st = np.ones(self.d, dtype=np.int64)
        for ax in range(self.d - 2, -1, -1):
            st[ax] = st[ax + 1] * self.sides[ax + 1]
        return st

    # -- vertex indexing ---------------------------------------------------

    def vertex_index(self, coords) -> np.ndarray:
        """Dense index of absolute Z^d coordinates (shape (..., d))."""
        rel = np.asarray(coords, dtype=np.int64) - np.asarray(self.offset)
        if np.any(rel < 0) or np.any(rel >= np.asarray(self.sides)):
            raise ValueError("coordinates outside the box")
        return rel @ self.strides

    def vertex_coords(self, index) -> np.ndarray:
        """Absolute Z^d coordinates for dense indices (shape (..., d))."""
        idx = np.asarray(index, dtype=np.int64)
        out = np.empty(idx.shape + (self.d,), dtype=np.int64)
        rem = idx
        for ax in range(self.d):
            out[..., ax] = rem // self.strides[ax]
            rem = rem % self.strides[ax]
        return out + np.asarray(self.offset)

    def contains(self, coords) -> np.ndarray:
        rel = np.asarray(coords, dtype=np.int64) - np.asarray(self.offset)
        return np.all((rel >= 0) & (rel < np.asarray(self.sides)), axis=-1)

    def center_vertex(self) -> np.ndarray:
        return np.asarray(self.offset) + np.asarray(self.sides) // 2

    # -- edges -------------------------------------------------------------

    @cached_property
    def edge_endpoints(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(lo, hi, axis) dense-index arrays for every in-box edge.

        Edges are grouped per axis (axis-0 block first); within a block they
        follow the row-major order of their lower endpoint.
        """
        los, his, axes = [], [], []
        grid = np.arange(self.n_vertices, dtype=np.int64).reshape(self.sides)
        for ax in range(self.d):
            sl_lo = [slice(None)] * self.d
            sl_hi = [slice(None)] * self.d
            sl_lo[ax] = slice(0, self.sides[ax] - 1)
            sl_hi[ax] = slice(1, self.sides[ax])
            lo = grid[tuple(sl_lo)].ravel()
            hi = grid[tuple(sl_hi)].ravel()
            los.append(lo)
            his.append(hi)
            axes.append(np.full(lo.shape, ax, dtype=np.int64))
        return (np.concatenate(los), np.concatenate(his), np.concatenate(axes))

    def edge_index(self, u_coords, v_coords) -> int:
        """Dense index of the edge {u, v}; endpoints must be neighbors."""
        u = np.asarray(u_coords, dtype=np.int64)
        v = np.asarray(v_coords, dtype=np.int64)
        diff = v - u
        if np.sum(np.abs(diff)) != 1:
            raise ValueError("not a nearest-neighbor pair")
        lo = np.minimum(u, v)
        ax = int(np.nonzero(diff)[0][0])
        base = 0
        for a in range(ax):
            base += (self.sides[a] - 1) * self.n_vertices // self.sides[a]
        rel = lo - np.asarray(self.offset)
        shape = list(self.sides)
        shape[ax] -= 1
        st = np.ones(self.d, dtype=np.int64)
        for a in range(self.d - 2, -1, -1):
            st[a] = st[a + 1] * shape[a + 1]
        return int(base + rel @ st)

    def neighbors(self, coords) -> np.ndarray:
        """In-box Z^d neighbors of a vertex, as coordinates."""
        x = np.asarray(coords, dtype=np.int64)
        cand = []
        for ax in range(self.d):
            for sgn in (-1, 1):
                y = x.copy()
                y[ax] += sgn
                if self.contains(y):
                    cand.append(y)
        return np.array(cand, dtype=np.int64).reshape(-1, self.d)

    # -- boundaries --------------------------------------------------------

    @cached_property
    def internal_boundary(self) -> np.ndarray:
        """Dense indices of vertices with a Z^d neighbor outside the box."""
        rel = self.vertex_coords(np.arange(self.n_vertices)) - np.asarray(self.offset)
        on_face = (rel == 0) | (rel == np.asarray(self.sides) - 1)
        return np.nonzero(on_face.any(axis=1))[0]

    @cached_property
    def outside_degree(self) -> np.ndarray:
        """Per-vertex count of Z^d neighbors outside the box."""
        rel = self.vertex_coords(np.arange(self.n_vertices)) - np.asarray(self.offset)
        return ((rel == 0).astype(np.int64) + (rel == np.asarray(self.sides) - 1).astype(np.int64)).sum(axis=1)

    def outer_boundary(self) -> np.ndarray:
        """Coordinates of outside vertices adjacent to the box (deduplicated)."""
        pts = []
        bidx = self.internal_boundary
        coords = self.vertex_coords(bidx)
        for ax in range(self.d):
            lo_face = coords[coords[:, ax] == self.offset[ax]].copy()
            lo_face[:, ax] -= 1
            hi_face = coords[coords[:, ax] == self.offset[ax] + self.sides[ax] - 1].copy()
            hi_face[:, ax] += 1
            pts.extend([lo_face, hi_face])
        allpts = np.concatenate(pts, axis=0)
        return np.unique(allpts, axis=0)


def build_box(d: int, sides, offset=None) -> LatticeBox:
    """Construct a box, validating dimension and side lengths."""
    sides = tuple(int(s) for s in np.atleast_1d(sides))
    if d < 1:
        raise ValueError("dimension must be >= 1")
    if len(sides) != d:
        raise ValueError("need one side length per axis")
    return LatticeBox(sides=sides, offset=tuple(offset) if offset is not None else None)


def centered_box(d: int, radius: int) -> LatticeBox:
    """The cube {y : |y|_inf <= radius}, side 2*radius + 1, centered at 0."""
    side = 2 * radius + 1
    return build_box(d, (side,) * d, offset=(-radius,) * d)


def linf_distance(x, y) -> int:
    """l-infinity distance between two Z^d points."""
    return int(np.max(np.abs(np.asarray(x, dtype=np.int64) - np.asarray(y, dtype=np.int64))))


@dataclass
class ClusterLabeling:
    """Connected components of an open vertex/edge subgraph.

    ``labels[v]`` is the smallest dense vertex index of v's component, or -1
    for closed vertices.  ``sizes`` maps each component id to its vertex count.
    """

    box: LatticeBox
    labels: np.ndarray
    sizes: dict = field(default_factory=dict)

    @property
    def n_components(self) -> int:
        return len(self.sizes)

    def component_of(self, vertex_index: int) -> int:
        return int(self.labels[vertex_index])


def label_clusters(box: LatticeBox, open_mask, mode: str = "vertex") -> ClusterLabeling:
    """Label connected clusters of the open set.

    Vertex mode: ``open_mask`` is per-vertex; two open vertices are connected
    through nearest-neighbor steps inside the open set.  Edge mode:
    ``open_mask`` is per-edge; clusters are components of the subgraph spanned
    by open edges (vertices incident to at least one open edge are open).
    """
    mask = np.asarray(open_mask, dtype=bool).ravel()
    n = box.n_vertices
    if mode == "vertex":
        if mask.size != n:
            raise ValueError("vertex mask length mismatch")
        raw, _ = ndimage.label(mask.reshape(box.sides), structure=ndimage.generate_binary_structure(box.d, 1))
        raw = raw.ravel()
        labels = np.full(n, -1, dtype=np.int64)
        open_idx = np.nonzero(mask)[0]
        if open_idx.size:
            # deterministic ids: smallest dense index in each raw component
            nlab = raw.max()
            rep = np.full(nlab + 1, np.iinfo(np.int64).max, dtype=np.int64)
            np.minimum.at(rep, raw[open_idx], open_idx)
            labels[open_idx] = rep[raw[open_idx]]
    elif mode == "edge":
        if mask.size != box.n_edges:
            raise ValueError("edge mask length mismatch")
        lo, hi, _ = box.edge_endpoints
        lo, hi = lo[mask], hi[mask]
        touched = np.zeros(n, dtype=bool)
        touched[lo] = True
        touched[hi] = True
        graph = sparse.coo_matrix((np.ones(lo.size), (lo, hi)), shape=(n, n))
        _, comp = connected_components(graph, directed=False)
        labels = np.full(n, -1, dtype=np.int64)
        open_idx = np.nonzero(touched)[0]
        if open_idx.size:
            ncomp = comp.max() + 1
            rep = np.full(ncomp, np.iinfo(np.int64).max, dtype=np.int64)
            np.minimum.at(rep, comp[open_idx], open_idx)
            labels[open_idx] = rep[comp[open_idx]]
    else:
        raise ValueError(f"unknown mode {mode!r}")

    ids, counts = np.unique(labels[labels >= 0], return_counts=True)
    return ClusterLabeling(box=box, labels=labels, sizes=dict(zip(ids.tolist(), counts.tolist())))


def crossing_event(labeling: ClusterLabeling, A, B) -> bool:
    """True iff some open cluster intersects both vertex sets A and B.

    Empty A or B returns False by convention.
    """
    A = np.asarray(A, dtype=np.int64).ravel()
    B = np.asarray(B, dtype=np.int64).ravel()
    if A.size == 0 or B.size == 0:
        return False
    la = labeling.labels[A]
    lb = labeling.labels[B]
    sa = set(la[la >= 0].tolist())
    if not sa:
        return False
    return bool(sa.intersection(lb[lb >= 0].tolist()))
