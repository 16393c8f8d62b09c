"""Delaunay triangulations in dimension 2 and 3 with alpha filtration values.

The triangulation (top cells) comes from Qhull; the face lattice, Gabriel
tests and alpha values are computed here.  Alpha values use radius units
(not squared radius) so they share an axis with the radius parameter of the
bifiltrations: for a Gabriel simplex the value is the radius of its smallest
circumscribing ball, otherwise the minimum over its cofacets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.spatial import Delaunay as _QhullDelaunay
from scipy.spatial import QhullError, cKDTree

from .geometry import PointCloud

Simplex = tuple[int, ...]  # strictly increasing vertex indices

_GABRIEL_RTOL = 1e-9
_DEGENERACY_RTOL = 1e-12


def simplex_dim(s: Simplex) -> int:
    return len(s) - 1


def facets(s: Simplex):
    """Codimension-1 faces of a simplex."""
    if len(s) == 1:
        return []
    return [s[:i] + s[i + 1 :] for i in range(len(s))]


def circumball_points(pts: np.ndarray) -> tuple[np.ndarray, float]:
    """Center and radius of the ball through all given points with center
    in their affine hull (the smallest circumscribing ball)."""
    pts = np.asarray(pts, dtype=np.float64)
    p0 = pts[0]
    if pts.shape[0] == 1:
        return p0, 0.0
    E = pts[1:] - p0
    G = 2.0 * (E @ E.T)
    rhs = (E * E).sum(axis=1)
    try:
        w = np.linalg.solve(G, rhs)
    except np.linalg.LinAlgError:
        w, *_ = np.linalg.lstsq(G, rhs, rcond=None)
    center = p0 + w @ E
    radius = math.sqrt(float(((pts - center) ** 2).sum(axis=1).max()))
    return center, radius


@dataclass
class DelaunayComplex:
    """Full face lattice of a Delaunay triangulation with alpha values.

    ``simplices[m]`` lists the m-dimensional simplices in lexicographic
    order; ``alpha`` maps every simplex to its filtration value.  The
    ``degenerate`` flag is set when the input was affinely deficient and a
    lower-dimensional lattice was returned.
    """

    cloud: PointCloud
    top_dim: int
    simplices: dict[int, list[Simplex]]
    alpha: dict[Simplex, float]
    degenerate: bool = False

    def all_simplices(self):
        for m in sorted(self.simplices):
            yield from self.simplices[m]

    def num_simplices(self) -> int:
        return sum(len(v) for v in self.simplices.values())

    def counts(self) -> dict[int, int]:
        return {m: len(v) for m, v in self.simplices.items()}

    def write_dump(self, path) -> None:
        """Debug dump: one simplex per line, ``dim v0 v1 ... alpha``."""
        with open(path, "w") as fh:
            for s in self.all_simplices():
                verts = " ".join(str(v) for v in s)
                fh.write(f"{simplex_dim(s)} {verts} {self.alpha[s]!r}\n")


def voronoi_owner(complex: DelaunayComplex, x) -> int:
    """Index of a nearest cloud point (a Voronoi cell containing x); exact
    ties are broken by ascending index."""
    xq = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(xq)):
        raise ValueError("query point must be finite")
    d2 = ((complex.cloud.points - xq) ** 2).sum(axis=1)
    return int(np.argmin(d2))


def _affine_frame(pts: np.ndarray):
    """Rank of the point set's affine hull plus an orthonormal basis."""
    centered = pts - pts[0]
    scale = float(np.abs(centered).max())
    if scale == 0.0:
        return 0, None
    _, sv, vt = np.linalg.svd(centered / scale, full_matrices=False)
    rank = int((sv > 1e-10 * max(1.0, sv[0])).sum())
    return rank, vt[:rank]


def _face_closure(tops: np.ndarray) -> dict[int, np.ndarray]:
    """All faces of the given top cells, one sorted unique array per dim."""
    levels: dict[int, np.ndarray] = {}
    cur = np.unique(np.sort(tops, axis=1), axis=0)
    m = cur.shape[1] - 1
    levels[m] = cur
    while m >= 1:
        parts = [np.delete(cur, i, axis=1) for i in range(cur.shape[1])]
        cur = np.unique(np.vstack(parts), axis=0)
        m -= 1
        levels[m] = cur
    return levels


def _batched_circumballs(pts: np.ndarray, simp: np.ndarray):
    """Circumcenters/radii (aff-hull centered) for a (num, m+1) index array."""
    V = pts[simp]  # (num, m+1, d)
    p0 = V[:, 0, :]
    if simp.shape[1] == 2:
        centers = 0.5 * (V[:, 0, :] + V[:, 1, :])
        radii = np.sqrt(((V[:, 1, :] - centers) ** 2).sum(axis=1))
        return centers, radii
    E = V[:, 1:, :] - p0[:, None, :]  # (num, m, d)
    G = 2.0 * np.einsum("nik,njk->nij", E, E)
    rhs = np.einsum("nik,nik->ni", E, E)
    try:
        w = np.linalg.solve(G, rhs)
    except np.linalg.LinAlgError:
        w = np.empty_like(rhs)
        for i in range(G.shape[0]):
            try:
                w[i] = np.linalg.solve(G[i], rhs[i])
            except np.linalg.LinAlgError:
                w[i], *_ = np.linalg.lstsq(G[i], rhs[i], rcond=None)
    centers = p0 + np.einsum("ni,nik->nk", w, E)
    radii = np.sqrt(((V - centers[:, None, :]) ** 2).sum(axis=2).max(axis=1))
    return centers, radii


def _lift_tops(pts: np.ndarray, rank: int, basis: np.ndarray) -> np.ndarray:
    """Top cells of an affinely deficient cloud via its intrinsic coords."""
    proj = (pts - pts[0]) @ basis.T
    if rank == 1:
        order = np.argsort(proj[:, 0], kind="stable")
        return np.stack([order[:-1], order[1:]], axis=1)
    tri = _QhullDelaunay(proj)
    return tri.simplices


def build_delaunay(cloud: PointCloud) -> DelaunayComplex:
    """Delaunay complex of a 2d or 3d cloud with alpha filtration values.

    Affinely deficient input yields the lower-dimensional face lattice with
    ``degenerate=True``.  Exact duplicate points are rejected: coincident
    sites have no well-defined Voronoi nerve.
    """
    if cloud.dim not in (2, 3):
        raise ValueError(f"Delaunay supports dimension 2 or 3, got {cloud.dim}")
    pts = cloud.points
    n = len(cloud)
    if np.unique(pts, axis=0).shape[0] != n:
        raise ValueError("duplicate points are not supported by build_delaunay")

    rank, basis = _affine_frame(pts)
    degenerate = rank < cloud.dim
    if n == 1 or rank == 0:
        return DelaunayComplex(
            cloud=cloud,
            top_dim=0,
            simplices={0: [(i,) for i in range(n)]},
            alpha={(i,): 0.0 for i in range(n)},
            degenerate=True,
        )
    if degenerate:
        tops = _lift_tops(pts, rank, basis)
    else:
        try:
            tops = _QhullDelaunay(pts).simplices
        except QhullError:
            tops = _QhullDelaunay(pts, qhull_options="QJ").simplices

    levels = _face_closure(np.asarray(tops, dtype=np.intp))
    top_dim = max(levels)
    # every input point is a vertex of the nerve of the Voronoi diagram
    levels[0] = np.arange(n, dtype=np.intp)[:, None]

    tree = cKDTree(pts)
    alpha_arrays: dict[int, np.ndarray] = {0: np.zeros(n)}
    cofacet_min: dict[Simplex, float] = {}
    for m in range(top_dim, 0, -1):
        simp = levels[m]
        centers, radii = _batched_circumballs(pts, simp)
        if m == top_dim:
            vals = radii
        else:
            nn, _ = tree.query(centers, k=1)
            gabriel = nn >= radii * (1.0 - _GABRIEL_RTOL)
            vals = np.where(gabriel, radii, INFTY)
            for i in np.flatnonzero(~gabriel):
                vals[i] = cofacet_min[tuple(simp[i])]
        alpha_arrays[m] = vals
        if m >= 1:
            for row, a in zip(simp, vals):
                s = tuple(int(v) for v in row)
                for j in range(len(s)):
                    f = s[:j] + s[j + 1 :]
                    prev = cofacet_min.get(f)
                    if prev is None or a < prev:
                        cofacet_min[f] = float(a)

    simplices: dict[int, list[Simplex]] = {}
    alpha: dict[Simplex, float] = {}
    for m in range(0, top_dim + 1):
        rows = levels[m]
        lst = [tuple(int(v) for v in row) for row in rows]
        simplices[m] = lst
        for s, a in zip(lst, alpha_arrays[m]):
            alpha[s] = float(a)

    # enforce exact face monotonicity against floating point noise
    for m in range(1, top_dim + 1):
        for s in simplices[m]:
            lo = max(alpha[f] for f in facets(s))
            if alpha[s] < lo:
                alpha[s] = lo

    return DelaunayComplex(
        cloud=cloud,
        top_dim=top_dim,
        simplices=simplices,
        alpha=alpha,
        degenerate=degenerate,
    )


INFTY = math.inf


def brute_force_top_cells(pts: np.ndarray) -> set[Simplex]:
    """All (d+1)-subsets whose circumsphere has an empty open interior.

    Independent quadratic-time oracle for tests; only sensible for small
    point sets in general position.
    """
    pts = np.asarray(pts, dtype=np.float64)
    n, d = pts.shape
    out: set[Simplex] = set()
    scale = float(np.abs(pts).max()) or 1.0
    for sub in combinations(range(n), d + 1):
        V = pts[list(sub)]
        E = V[1:] - V[0]
        if abs(np.linalg.det(E)) < 1e-12 * scale**d:
            continue  # affinely degenerate candidate
        center, radius = circumball_points(V)
        others = np.setdiff1d(np.arange(n), sub, assume_unique=True)
        if others.size:
            dmin = math.sqrt(float(((pts[others] - center) ** 2).sum(axis=1).min()))
            if dmin < radius * (1.0 - _DEGENERACY_RTOL) - 1e-12 * scale:
                continue
        out.add(tuple(sub))
    return out
