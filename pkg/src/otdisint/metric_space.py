"""Finite metric spaces, Euclidean point clouds, products and quotients."""

from __future__ import annotations

import enum
import itertools
import math
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from otdisint.errors import InvalidAction, InvalidArgument, InvalidParameter, NotFound

TOL = 1e-12


class Norm(enum.Enum):
    INF = "inf"


INF = Norm.INF


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


class FiniteMetricSpace:
    """Labelled points with a symmetric distance matrix.

    The metric axioms are checked on construction with absolute tolerance 1e-12.
    """

    def __init__(self, labels: Sequence[str], dist, *, validate: bool = True):
        self.labels = tuple(str(l) for l in labels)
        self.dist = _frozen(dist)
        self._index = {l: i for i, l in enumerate(self.labels)}
        if validate:
            self._validate()

    def _validate(self):
        n = len(self.labels)
        d = self.dist
        if len(self._index) != n:
            raise InvalidArgument("duplicate point labels")
        if d.shape != (n, n):
            raise InvalidArgument(f"distance matrix has shape {d.shape}, expected ({n}, {n})")
        if not np.all(np.isfinite(d)):
            raise InvalidArgument("distance matrix has non-finite entries")
        if np.any(np.abs(np.diag(d)) > TOL):
            raise InvalidArgument("nonzero self-distance")
        if np.any(np.abs(d - d.T) > TOL):
            raise InvalidArgument("distance matrix is not symmetric")
        off = d[~np.eye(n, dtype=bool)]
        if np.any(off <= 0):
            raise InvalidArgument("distinct points at distance zero")
        if n > 2:
            # d[i,j] <= d[i,k] + d[k,j], one k-slab at a time to bound memory
            for k in range(n):
                slack = d[:, k][:, None] + d[k, :][None, :] - d
                if np.any(slack < -TOL):
                    i, j = np.argwhere(slack < -TOL)[0]
                    raise InvalidArgument(
                        "triangle inequality fails for "
                        f"({self.labels[i]}, {self.labels[k]}, {self.labels[j]})"
                    )

    def __len__(self):
        return len(self.labels)

    def __contains__(self, label):
        return label in self._index

    def index(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise NotFound(f"unknown point {label!r}") from None

    def d(self, a: str, b: str) -> float:
        return float(self.dist[self.index(a), self.index(b)])

    def subspace(self, labels: Iterable[str]) -> "FiniteMetricSpace":
        idx = [self.index(l) for l in labels]
        return FiniteMetricSpace([self.labels[i] for i in idx], self.dist[np.ix_(idx, idx)], validate=False)

    def fingerprint(self):
        return (self.labels, self.dist.tobytes())

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, FiniteMetricSpace):
            return NotImplemented
        return self.labels == other.labels and np.array_equal(self.dist, other.dist)

    def __hash__(self):
        return hash(self.fingerprint())

    def __repr__(self):
        return f"{type(self).__name__}({list(self.labels)!r})"

    @classmethod
    def discrete(cls, labels: Sequence[str]) -> "FiniteMetricSpace":
        """Every pair of distinct points at distance 1."""
        n = len(labels)
        return cls(labels, np.ones((n, n)) - np.eye(n))

    @classmethod
    def on_line(cls, positions: Mapping[str, float]) -> "FiniteMetricSpace":
        labels = list(positions)
        x = np.array([float(positions[l]) for l in labels])
        return cls(labels, np.abs(x[:, None] - x[None, :]))


def coord_label(point: Sequence[Fraction]) -> str:
    return ",".join(str(c) for c in point)


def _as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        if not math.isfinite(x):
            raise InvalidArgument(f"non-finite coordinate {x!r}")
        return Fraction(x)
    return Fraction(x)


def sq_dist(a: Sequence[Fraction], b: Sequence[Fraction]) -> Fraction:
    return sum(((p - q) ** 2 for p, q in zip(a, b)), Fraction(0))


def euclid(a: Sequence[Fraction], b: Sequence[Fraction]) -> float:
    diffs = [p - q for p, q in zip(a, b) if p != q]
    if not diffs:
        return 0.0
    if len(diffs) == 1:
        return float(abs(diffs[0]))
    return math.sqrt(float(sum(x * x for x in diffs)))


class EuclideanCloud(FiniteMetricSpace):
    """Points of R^k with exact rational coordinates and Euclidean distance.

    Float coordinates are converted to the rational they represent exactly.
    Labels default to the comma-joined coordinates, so equal points share labels
    across clouds.
    """

    def __init__(self, points: Sequence[Sequence], labels: Sequence[str] | None = None):
        pts = tuple(tuple(_as_fraction(c) for c in p) for p in points)
        dims = {len(p) for p in pts}
        if len(dims) > 1:
            raise InvalidArgument("points have mixed dimensions")
        if labels is None:
            labels = [coord_label(p) for p in pts]
        n = len(pts)
        dist = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                dist[i, j] = dist[j, i] = euclid(pts[i], pts[j])
        self.points = pts
        super().__init__(labels, dist)

    @property
    def dim(self) -> int:
        return len(self.points[0]) if self.points else 0

    def point(self, label: str) -> tuple:
        return self.points[self.index(label)]

    def sq_dist(self, a: str, b: str) -> Fraction:
        return sq_dist(self.point(a), self.point(b))

    def sq_dist_matrix(self) -> list[list[Fraction]]:
        return [[sq_dist(p, q) for q in self.points] for p in self.points]

    def subspace(self, labels: Iterable[str]) -> "EuclideanCloud":
        labels = list(labels)
        return EuclideanCloud([self.point(l) for l in labels], labels)


def union_cloud(clouds: Iterable[EuclideanCloud]) -> EuclideanCloud:
    """Cloud on the union of the points, sorted by coordinates."""
    pts = set()
    for c in clouds:
        pts.update(c.points)
    return EuclideanCloud(sorted(pts))


def lq_product(a: FiniteMetricSpace, b: FiniteMetricSpace, q) -> FiniteMetricSpace:
    """Product space A x B with the l_q combination of the factor distances.

    ``q`` is a real >= 1 or :data:`INF` for the max distance. Point (a, b) is
    labelled ``"(a,b)"`` and points are listed with the A index varying slowest.
    """
    if q is not INF:
        q = float(q)
        if not q >= 1:
            raise InvalidParameter(f"q must be >= 1 or INF, got {q!r}")
        if math.isinf(q):
            q = INF
    da = a.dist[:, None, :, None]
    db = b.dist[None, :, None, :]
    if q is INF:
        d = np.maximum(da, db)
    elif q == 1:
        d = da + db
    else:
        d = (da**q + db**q) ** (1.0 / q)
    n = len(a) * len(b)
    labels = [product_label(x, y) for x in a.labels for y in b.labels]
    return FiniteMetricSpace(labels, d.reshape(n, n))


def product_label(x: str, y: str) -> str:
    return f"({x},{y})"


class QuotientSpace:
    """A partition of a finite metric space with the induced set distance d*.

    Any partition is accepted. For partitions that are not metric foliations
    d* may break the triangle inequality; see :meth:`triangle_violations`.
    """

    def __init__(self, base: FiniteMetricSpace, classes: Sequence[Sequence[str]]):
        self.base = base
        seen: dict[str, int] = {}
        ordered = []
        for members in classes:
            members = sorted({str(m) for m in members}, key=base.index)
            if not members:
                raise InvalidArgument("empty class in partition")
            for m in members:
                if m in seen:
                    raise InvalidArgument(f"point {m!r} appears in two classes")
                seen[m] = -1
            ordered.append(tuple(members))
        missing = [l for l in base.labels if l not in seen]
        if missing:
            raise InvalidArgument(f"partition does not cover {missing}")
        ordered.sort(key=lambda c: base.index(c[0]))
        self.classes = tuple(ordered)
        self.ids = tuple(f"[{c[0]}]" for c in self.classes)
        self._id_index = {cid: k for k, cid in enumerate(self.ids)}
        self._owner = {m: k for k, c in enumerate(self.classes) for m in c}
        k = len(self.classes)
        dstar = np.zeros((k, k))
        idx = [[base.index(m) for m in c] for c in self.classes]
        for i in range(k):
            for j in range(i + 1, k):
                dstar[i, j] = dstar[j, i] = base.dist[np.ix_(idx[i], idx[j])].min()
        self.dstar = _frozen(dstar)

    def __len__(self):
        return len(self.classes)

    def __eq__(self, other):
        if not isinstance(other, QuotientSpace):
            return NotImplemented
        return self.base == other.base and self.classes == other.classes

    __hash__ = None

    def class_index(self, cid: str) -> int:
        try:
            return self._id_index[cid]
        except KeyError:
            raise NotFound(f"unknown class {cid!r}") from None

    def members(self, cid: str) -> tuple:
        return self.classes[self.class_index(cid)]

    def project(self, label: str) -> str:
        """The quotient map p: point label -> class id."""
        self.base.index(label)
        return self.ids[self._owner[label]]

    def triangle_violations(self, tol: float = TOL) -> list[tuple[str, str, str]]:
        d = self.dstar
        out = []
        for i, j, k in itertools.permutations(range(len(self)), 3):
            if i < j and d[i, j] > d[i, k] + d[k, j] + tol:
                out.append((self.ids[i], self.ids[k], self.ids[j]))
        return out

    def as_metric_space(self) -> FiniteMetricSpace:
        return FiniteMetricSpace(self.ids, self.dstar)


def quotient_distance(Q: QuotientSpace, y: str, y2: str) -> float:
    return float(Q.dstar[Q.class_index(y), Q.class_index(y2)])


def _as_permutation(X: FiniteMetricSpace, g) -> tuple[int, ...]:
    if isinstance(g, Mapping):
        if set(g) != set(X.labels):
            raise InvalidAction("permutation is not defined on every point")
        images = [g[l] for l in X.labels]
    else:
        images = list(g)
        if len(images) != len(X):
            raise InvalidAction("permutation has the wrong length")
    try:
        perm = tuple(X.index(str(l)) for l in images)
    except NotFound as exc:
        raise InvalidAction(str(exc)) from None
    if len(set(perm)) != len(perm):
        raise InvalidAction("map is not a bijection")
    return perm


def group_quotient(X: FiniteMetricSpace, action: Sequence) -> QuotientSpace:
    """Orbit space of a finite group acting on X by isometries.

    Each element of ``action`` is a permutation given either as a mapping
    label -> label or as the list of images of ``X.labels`` in order. The set
    must be closed under composition and inverses, and every element must
    preserve distances exactly.
    """
    perms = {_as_permutation(X, g) for g in action}
    n = len(X)
    ident = tuple(range(n))
    if ident not in perms:
        raise InvalidAction("action does not contain the identity")
    for p in perms:
        inv = [0] * n
        for i, pi in enumerate(p):
            inv[pi] = i
        if tuple(inv) not in perms:
            raise InvalidAction("action is not closed under inverses")
        for q in perms:
            if tuple(p[q[i]] for i in range(n)) not in perms:
                raise InvalidAction("action is not closed under composition")
        pa = np.array(p)
        if not np.array_equal(X.dist[np.ix_(pa, pa)], X.dist):
            raise InvalidAction("permutation is not an isometry")
    orbits: list[list[str]] = []
    assigned = set()
    for i in range(n):
        if i in assigned:
            continue
        orbit = sorted({p[i] for p in perms})
        assigned.update(orbit)
        orbits.append([X.labels[j] for j in orbit])
    return QuotientSpace(X, orbits)
