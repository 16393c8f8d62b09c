"""Points, metrics, k-nearest neighbours, core distances and enclosing balls.

Everything downstream (Delaunay complexes, bifiltrations, oracles) sits on
top of this module.  All distances are Euclidean.  Infinite core distances
are encoded as ``math.inf`` and serialised with the token ``inf``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

INF = math.inf

_KDTREE_MAX_DIM = 8  # kd-tree backend for d <= 8, brute force above
_LEAF_SIZE = 16


class DimensionMismatchError(ValueError):
    pass


def _as_point(p) -> np.ndarray:
    a = np.asarray(p, dtype=np.float64)
    if a.ndim != 1:
        raise ValueError(f"expected a single point, got array of shape {a.shape}")
    return a


@dataclass(frozen=True)
class Ball:
    """Closed Euclidean ball."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("ball radius must be nonnegative")

    def contains(self, p, tol: float = 0.0) -> bool:
        d = float(np.sqrt(((self.center - _as_point(p)) ** 2).sum()))
        return d <= self.radius + tol


class PointCloud:
    """A finite ordered multiset of points in R^d.

    Points are stored as an immutable ``(n, d)`` float64 array.  Duplicate
    points are allowed and counted with multiplicity.  Optional per-point
    labels (e.g. ``signal`` / ``noise``) tag provenance.
    """

    def __init__(self, points, labels: Optional[Sequence[str]] = None):
        pts = np.array(points, dtype=np.float64)
        if pts.ndim != 2:
            raise ValueError("points must be a 2d array-like (n points x d coords)")
        if pts.shape[0] == 0:
            raise ValueError("point cloud must be non-empty")
        if pts.shape[1] < 1:
            raise ValueError("ambient dimension must be >= 1")
        if not np.all(np.isfinite(pts)):
            raise ValueError("all coordinates must be finite")
        pts.flags.writeable = False
        self.points = pts
        if labels is not None:
            labels = list(labels)
            if len(labels) != pts.shape[0]:
                raise ValueError("labels length must match number of points")
        self.labels = labels
        self._kdtree: Optional[_KDTree] = None

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def kdtree(self) -> "_KDTree":
        if self._kdtree is None:
            self._kdtree = _KDTree(self.points)
        return self._kdtree

    def diameter(self) -> float:
        """Exact diameter; brute force up to 2e4 points, hull-based above."""
        n = len(self)
        if n == 1:
            return 0.0
        pts = self.points
        if n > 20000:
            from scipy.spatial import ConvexHull

            try:
                pts = pts[np.unique(ConvexHull(pts).vertices)]
            except Exception:
                pass  # degenerate hull: fall through to brute force
        best = 0.0
        step = max(1, int(2.0e7 // max(1, pts.shape[0])))
        for i0 in range(0, pts.shape[0], step):
            block = pts[i0 : i0 + step]
            d2 = ((block[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
            best = max(best, float(d2.max()))
        return math.sqrt(best)

    def to_csv(self, path, with_labels: bool = False) -> None:
        write_point_cloud(path, self, with_labels=with_labels)


def write_point_cloud(path, cloud: PointCloud, with_labels: bool = False) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        cols = [f"x{i}" for i in range(cloud.dim)]
        if with_labels and cloud.labels is not None:
            cols.append("label")
        fh.write("# " + ",".join(cols) + "\n")
        for i, p in enumerate(cloud.points):
            row = [repr(float(c)) for c in p]
            if with_labels and cloud.labels is not None:
                row.append(cloud.labels[i])
            w.writerow(row)


def read_point_cloud(path) -> PointCloud:
    """Read the CSV point-cloud format: one point per line, comma-separated
    decimal coordinates, optional ``#`` header lines, optional trailing
    label column."""
    rows, labels, have_labels = [], [], False
    with open(path, newline="") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [t.strip() for t in line.split(",")]
            try:
                float(parts[-1])
            except ValueError:
                have_labels = True
                labels.append(parts[-1])
                parts = parts[:-1]
            rows.append([float(t) for t in parts])
    if not rows:
        raise ValueError(f"no points found in {path}")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError("inconsistent number of coordinates across rows")
    return PointCloud(rows, labels=labels if have_labels else None)


# ---------------------------------------------------------------------------
# distances and k nearest neighbours


def pairwise_distance(p, q) -> float:
    """Euclidean distance between two points of equal dimension."""
    a, b = _as_point(p), _as_point(q)
    if a.shape != b.shape:
        raise DimensionMismatchError(
            f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}"
        )
    return float(np.sqrt(((a - b) ** 2).sum()))


class _KDNode:
    __slots__ = ("axis", "split", "left", "right", "idx")

    def __init__(self, axis=-1, split=0.0, left=None, right=None, idx=None):
        self.axis = axis
        self.split = split
        self.left = left
        self.right = right
        self.idx = idx


class _KDTree:
    """Deterministic kd-tree over a fixed point array.

    Queries return exactly the lexicographically smallest j pairs
    (squared distance, index) -- identical to a stable full sort,
    including tie handling.
    """

    def __init__(self, points: np.ndarray, leaf_size: int = _LEAF_SIZE):
        self.points = points
        self.leaf_size = leaf_size
        self.root = self._build(np.arange(points.shape[0], dtype=np.intp), 0)

    def _build(self, idx: np.ndarray, depth: int) -> _KDNode:
        if idx.shape[0] <= self.leaf_size:
            return _KDNode(idx=idx)
        axis = depth % self.points.shape[1]
        coords = self.points[idx, axis]
        order = np.lexsort((idx, coords))
        idx = idx[order]
        mid = idx.shape[0] // 2
        split = float(self.points[idx[mid], axis])
        return _KDNode(
            axis=axis,
            split=split,
            left=self._build(idx[:mid], depth + 1),
            right=self._build(idx[mid:], depth + 1),
        )

    def query(self, x: np.ndarray, j: int) -> tuple[np.ndarray, np.ndarray]:
        import heapq

        heap: list[tuple[float, int]] = []  # (-d2, -index)
        pts = self.points

        def visit(node: _KDNode) -> None:
            if node.idx is not None:
                d2 = ((pts[node.idx] - x) ** 2).sum(axis=1)
                for i, v in zip(node.idx, d2):
                    item = (-float(v), -int(i))
                    if len(heap) < j:
                        heapq.heappush(heap, item)
                    elif item > heap[0]:
                        heapq.heapreplace(heap, item)
                return
            delta = float(x[node.axis]) - node.split
            near, far = (node.left, node.right) if delta < 0 else (node.right, node.left)
            visit(near)
            # visit the far side on ties: an equal distance with a smaller
            # index must still displace the current worst entry
            if len(heap) < j or delta * delta <= -heap[0][0]:
                visit(far)

        visit(self.root)
        items = sorted((-d2, -i) for d2, i in heap)
        idx = np.array([i for _, i in items], dtype=np.intp)
        dist = np.sqrt(np.array([d2 for d2, _ in items], dtype=np.float64))
        return idx, dist


def knn_brute(cloud: PointCloud, x, j: int) -> list[tuple[int, float]]:
    """Reference kNN: full sort of all distances, ties by ascending index."""
    xq = _as_point(x)
    if xq.shape[0] != cloud.dim:
        raise DimensionMismatchError(
            f"query dimension {xq.shape[0]} != cloud dimension {cloud.dim}"
        )
    if not 1 <= j <= len(cloud):
        raise ValueError(f"j={j} out of range [1, {len(cloud)}]")
    d2 = ((cloud.points - xq) ** 2).sum(axis=1)
    order = np.lexsort((np.arange(len(cloud)), d2))[:j]
    dist = np.sqrt(d2[order])
    return [(int(i), float(v)) for i, v in zip(order, dist)]


def knn_query(cloud: PointCloud, x, j: int) -> list[tuple[int, float]]:
    """The j nearest points of the cloud to x, sorted ascending.

    Ties are broken by ascending point index; the result agrees exactly
    with a full sort of all distances.  Backend: kd-tree for d <= 8,
    brute force above.
    """
    if cloud.dim > _KDTREE_MAX_DIM:
        return knn_brute(cloud, x, j)
    xq = _as_point(x)
    if xq.shape[0] != cloud.dim:
        raise DimensionMismatchError(
            f"query dimension {xq.shape[0]} != cloud dimension {cloud.dim}"
        )
    if not 1 <= j <= len(cloud):
        raise ValueError(f"j={j} out of range [1, {len(cloud)}]")
    idx, dist = cloud.kdtree().query(xq, j)
    return [(int(i), float(v)) for i, v in zip(idx, dist)]


def core_distance(cloud: PointCloud, x, k: float) -> float:
    """Distance from x to one of its ceil(k)-th nearest neighbours in the
    cloud (x itself counts when x is a cloud member); +inf when
    ceil(k) > |cloud|."""
    if k <= 0:
        raise ValueError("k must be positive")
    kc = math.ceil(k)
    if kc > len(cloud):
        return INF
    return knn_query(cloud, x, kc)[-1][1]


@dataclass(frozen=True)
class CoreProfile:
    """Core distances of every cloud point at each k of an increasing list.

    ``values[a, i]`` is the k_list[i]-core distance of point a; +inf where
    k exceeds the cloud size.  Rows are nondecreasing along k.
    """

    owner: PointCloud
    k_list: tuple[int, ...]
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values.flags.writeable = False

    def column(self, k: int) -> np.ndarray:
        return self.values[:, self.k_index(k)]

    def k_index(self, k: int) -> int:
        try:
            return self.k_list.index(k)
        except ValueError:
            raise KeyError(f"k={k} not in profile k_list {list(self.k_list)}") from None

    def value(self, a: int, k: int) -> float:
        return float(self.values[a, self.k_index(k)])


def core_profile(cloud: PointCloud, k_list: Iterable[int]) -> CoreProfile:
    """Core distances for every point at every k in k_list.

    Equivalent to one full sorted-distance pass per point; computed in
    vectorised chunks.  k_list must be strictly increasing integers >= 1.
    """
    ks = [int(k) for k in k_list]
    if not ks:
        raise ValueError("k_list must be non-empty")
    if any(k < 1 for k in ks) or any(b <= a for a, b in zip(ks, ks[1:])):
        raise ValueError("k_list must be strictly increasing integers >= 1")
    pts = cloud.points
    n = len(cloud)
    in_range = [k for k in ks if k <= n]
    kmax = max(in_range) if in_range else 0
    vals = np.full((n, len(ks)), INF)
    if kmax:
        cols = [i for i, k in enumerate(ks) if k <= n]
        take = np.array([ks[i] - 1 for i in cols], dtype=np.intp)
        chunk = max(1, int(4.0e6 // max(1, n)))
        for lo in range(0, n, chunk):
            block = pts[lo : lo + chunk]
            d = np.sqrt(((block[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
            if kmax < n:
                head = np.sort(np.partition(d, kmax - 1, axis=1)[:, :kmax], axis=1)
            else:
                head = np.sort(d, axis=1)
            vals[lo : lo + chunk, cols] = head[:, take]
    return CoreProfile(owner=cloud, k_list=tuple(ks), values=vals)


# ---------------------------------------------------------------------------
# smallest enclosing ball (deterministic Welzl with move-to-front)

_MEB_EPS = 1e-13


def _circumball(boundary: list[np.ndarray]) -> tuple[np.ndarray, float]:
    """Ball with all boundary points on its surface, center in their
    affine hull.  Degenerate boundary sets fall back to least squares."""
    p0 = boundary[0]
    if len(boundary) == 1:
        return p0, 0.0
    E = np.stack([p - p0 for p in boundary[1:]])
    G = 2.0 * (E @ E.T)
    rhs = (E * E).sum(axis=1)
    try:
        w = np.linalg.solve(G, rhs)
    except np.linalg.LinAlgError:
        w, *_ = np.linalg.lstsq(G, rhs, rcond=None)
    center = p0 + w @ E
    r2 = max(float(((center - p) ** 2).sum()) for p in boundary)
    return center, r2


def min_enclosing_ball(points) -> Ball:
    """Smallest closed ball containing all the points (exact Welzl).

    Deterministic: no randomisation, move-to-front re-ordering only.  A
    final guard re-verifies containment and expands the radius by at most
    ~1e-12 relative if floating point noise left a point marginally
    outside.
    """
    P = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if P.shape[0] == 0:
        raise ValueError("min_enclosing_ball of empty point set")
    if not np.all(np.isfinite(P)):
        raise ValueError("points must be finite")
    d = P.shape[1]
    work = [P[i] for i in range(P.shape[0])]

    def mtf(n: int, boundary: list[np.ndarray]) -> tuple[np.ndarray, float]:
        if boundary:
            center, r2 = _circumball(boundary)
        else:
            center, r2 = P[0], -1.0  # contains nothing
        if len(boundary) == d + 1:
            return center, r2
        i = 0
        while i < n:
            p = work[i]
            if ((p - center) ** 2).sum() > r2 * (1.0 + _MEB_EPS) + _MEB_EPS * 1e-3:
                center, r2 = mtf(i, boundary + [p])
                work.insert(0, work.pop(i))
            i += 1
        return center, r2

    center, r2 = mtf(len(work), [])
    r = math.sqrt(max(r2, 0.0))
    worst = math.sqrt(float(((P - center) ** 2).sum(axis=1).max()))
    return Ball(center=center, radius=max(r, worst))
