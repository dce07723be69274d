"""Discrete measures with exact rational masses, pushforwards, and measures over measures."""

from __future__ import annotations

import math
from fractions import Fraction
from numbers import Rational
from typing import Iterable, Mapping, Sequence

from otdisint.errors import CoverageFailure, InvalidArgument, InvalidParameter
from otdisint.metric_space import FiniteMetricSpace

ZERO = Fraction(0)
ONE = Fraction(1)


def to_fraction(x) -> Fraction:
    """Exact rational value of ``x``.

    Strings are parsed as ``"p/q"`` or decimal literals. Floats map to the
    rational they encode in binary, so ``0.1`` becomes 3602879701896397/36028797018963968.
    """
    if isinstance(x, bool):
        raise InvalidArgument(f"not a number: {x!r}")
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, Rational)):
        return Fraction(x)
    if isinstance(x, float):
        if not math.isfinite(x):
            raise InvalidArgument(f"non-finite mass {x!r}")
        return Fraction(x)
    if isinstance(x, str):
        try:
            return Fraction(x.strip())
        except (ValueError, ZeroDivisionError):
            raise InvalidArgument(f"cannot parse {x!r} as a rational") from None
    raise InvalidArgument(f"not a number: {x!r}")


class DiscreteMeasure:
    """Nonnegative rational weights on the points of a finite metric space."""

    __slots__ = ("space", "weights")

    def __init__(self, space: FiniteMetricSpace, weights):
        if isinstance(weights, Mapping):
            w = [ZERO] * len(space)
            for label, v in weights.items():
                w[space.index(str(label))] = to_fraction(v)
        else:
            w = [to_fraction(v) for v in weights]
            if len(w) != len(space):
                raise InvalidArgument(f"{len(w)} weights for a space of {len(space)} points")
        for label, v in zip(space.labels, w):
            if v < 0:
                raise InvalidArgument(f"negative weight {v} at {label!r}")
        self.space = space
        self.weights = tuple(w)

    @classmethod
    def dirac(cls, space: FiniteMetricSpace, label: str, mass=ONE) -> "DiscreteMeasure":
        return cls(space, {label: mass})

    @classmethod
    def uniform(cls, space: FiniteMetricSpace, labels: Iterable[str] | None = None) -> "DiscreteMeasure":
        labels = list(space.labels if labels is None else labels)
        return cls(space, {l: Fraction(1, len(labels)) for l in labels})

    @property
    def total_mass(self) -> Fraction:
        return sum(self.weights, ZERO)

    @property
    def is_probability(self) -> bool:
        return self.total_mass == 1

    @property
    def support(self) -> tuple[str, ...]:
        return tuple(l for l, w in zip(self.space.labels, self.weights) if w > 0)

    def __getitem__(self, label: str) -> Fraction:
        return self.weights[self.space.index(label)]

    def as_dict(self) -> dict[str, Fraction]:
        return {l: w for l, w in zip(self.space.labels, self.weights) if w != 0}

    def scaled(self, k) -> "DiscreteMeasure":
        k = to_fraction(k)
        return DiscreteMeasure(self.space, [k * w for w in self.weights])

    def normalized(self) -> "DiscreteMeasure":
        m = self.total_mass
        if m == 0:
            raise InvalidArgument("cannot normalise the zero measure")
        return self.scaled(1 / m)

    def restricted(self, labels: Iterable[str]) -> "DiscreteMeasure":
        keep = set(labels)
        return DiscreteMeasure(self.space, [w if l in keep else ZERO for l, w in zip(self.space.labels, self.weights)])

    def on(self, space: FiniteMetricSpace) -> "DiscreteMeasure":
        """The same weights viewed on another space containing the support."""
        return DiscreteMeasure(space, self.as_dict())

    def __add__(self, other: "DiscreteMeasure") -> "DiscreteMeasure":
        if other.space != self.space:
            raise InvalidArgument("measures live on different spaces")
        return DiscreteMeasure(self.space, [a + b for a, b in zip(self.weights, other.weights)])

    def __eq__(self, other):
        if not isinstance(other, DiscreteMeasure):
            return NotImplemented
        return self.weights == other.weights and self.space == other.space

    def __hash__(self):
        return hash(canonicalize_measure_key(self))

    def __repr__(self):
        body = ", ".join(f"{l}: {w}" for l, w in self.as_dict().items())
        return f"DiscreteMeasure({{{body}}})"


def canonicalize_measure_key(m: DiscreteMeasure) -> tuple:
    """Hashable key equal for two measures iff they are equal as measures.

    Zero weights are dropped and points are ordered by label, so storage order
    does not matter; the space's labels and distances are part of the key.
    """
    items = sorted((l, w.numerator, w.denominator) for l, w in zip(m.space.labels, m.weights) if w != 0)
    return (tuple(sorted(m.space.labels)), _space_digest(m.space), tuple(items))


def _space_digest(space: FiniteMetricSpace) -> tuple:
    order = sorted(range(len(space)), key=lambda i: space.labels[i])
    return tuple(float(space.dist[i, j]) for i in order for j in order)


class PointMap:
    """A total map from the points of one space to the points of another."""

    def __init__(self, source: FiniteMetricSpace, target: FiniteMetricSpace, assignment):
        if isinstance(assignment, Mapping):
            missing = [l for l in source.labels if l not in assignment]
            if missing:
                raise InvalidArgument(f"map undefined at {missing}")
            images = [str(assignment[l]) for l in source.labels]
        else:
            images = [str(a) for a in assignment]
            if len(images) != len(source):
                raise InvalidArgument("assignment length does not match the source space")
        for y in images:
            target.index(y)
        self.source = source
        self.target = target
        self.images = tuple(images)

    def __call__(self, label: str) -> str:
        return self.images[self.source.index(label)]

    def as_dict(self) -> dict[str, str]:
        return dict(zip(self.source.labels, self.images))

    def after(self, inner: "PointMap") -> "PointMap":
        """Composition self o inner."""
        if inner.target != self.source:
            raise InvalidArgument("maps do not compose")
        return PointMap(inner.source, self.target, [self(y) for y in inner.images])

    def __eq__(self, other):
        if not isinstance(other, PointMap):
            return NotImplemented
        return self.source == other.source and self.target == other.target and self.images == other.images

    __hash__ = None

    def is_bijective(self) -> bool:
        return len(self.source) == len(self.target) and len(set(self.images)) == len(self.images)

    @classmethod
    def identity(cls, space: FiniteMetricSpace) -> "PointMap":
        return cls(space, space, space.labels)


def pushforward(m: DiscreteMeasure, T: PointMap) -> DiscreteMeasure:
    if m.space != T.source:
        raise InvalidArgument("measure and map have different source spaces")
    out = [ZERO] * len(T.target)
    for y, w in zip(T.images, m.weights):
        out[T.target.index(y)] += w
    return DiscreteMeasure(T.target, out)


class MeasureOverMeasures:
    """A finite distribution over distinct measures on a common space.

    Atoms are stored in canonical-key order, so two instances built from the
    same atoms in any order compare and serialise identically. Zero-weight atoms
    are dropped.
    """

    def __init__(self, atoms: Iterable[tuple[DiscreteMeasure, object]], *, merge: bool = False):
        table: dict[tuple, list] = {}
        space = None
        for m, w in atoms:
            w = to_fraction(w)
            if w < 0:
                raise InvalidArgument("negative atom weight")
            if space is None:
                space = m.space
            elif m.space != space:
                raise InvalidArgument("atoms live on different spaces")
            key = canonicalize_measure_key(m)
            if key in table:
                if not merge:
                    raise InvalidArgument(f"duplicate atom {m!r}")
                table[key][1] += w
            else:
                table[key] = [m, w]
        self.space = space
        self.atoms = tuple((m, w) for k, (m, w) in sorted(table.items(), key=lambda kv: kv[0]) if w != 0)

    @property
    def total_weight(self) -> Fraction:
        return sum((w for _, w in self.atoms), ZERO)

    def as_dict(self) -> dict[tuple, Fraction]:
        return {canonicalize_measure_key(m): w for m, w in self.atoms}

    def weight_of(self, m: DiscreteMeasure) -> Fraction:
        return self.as_dict().get(canonicalize_measure_key(m), ZERO)

    def __len__(self):
        return len(self.atoms)

    def __eq__(self, other):
        if not isinstance(other, MeasureOverMeasures):
            return NotImplemented
        return self.as_dict() == other.as_dict()

    def __hash__(self):
        return hash(tuple(sorted(self.as_dict().items())))

    def __repr__(self):
        return "MeasureOverMeasures([" + ", ".join(f"({m!r}, {w})" for m, w in self.atoms) + "])"


def barycenter_of_classes(L: MeasureOverMeasures) -> DiscreteMeasure:
    """The mixture sum_j w_j * lambda_j, computed exactly."""
    if not L.atoms:
        raise InvalidArgument("empty measure over measures")
    out = [ZERO] * len(L.space)
    for m, w in L.atoms:
        if m.space != L.space:
            raise InvalidArgument("atoms live on different spaces")
        for i, v in enumerate(m.weights):
            out[i] += w * v
    return DiscreteMeasure(L.space, out)


def dirac_lattice_approx(
    m: DiscreteMeasure,
    lattice: Sequence[str],
    eps: float,
    max_denominator: int = 10**6,
) -> DiscreteMeasure:
    """Approximate ``m`` by rational Dirac masses on ``lattice``.

    Every support point must lie within eps/2 of some lattice point. Each point
    moves to the first lattice point (in the given order) strictly closer than
    eps, which gives W2^2 <= eps^2 before rounding. Weights are then rounded to
    denominators <= ``max_denominator`` and the rounding residue is put on the
    heaviest atom so the total mass is unchanged.
    """
    if not eps > 0:
        raise InvalidParameter("eps must be positive")
    space = m.space
    lattice = [str(l) for l in lattice]
    if not lattice:
        raise CoverageFailure("empty lattice")
    for l in lattice:
        space.index(l)
    target = {}
    for x in m.support:
        if min(space.d(x, l) for l in lattice) > eps / 2:
            raise CoverageFailure(f"point {x!r} is farther than eps/2 from the lattice")
        target[x] = next(l for l in lattice if space.d(x, l) < eps)
    moved = [ZERO] * len(space)
    for x in m.support:
        moved[space.index(target[x])] += m[x]
    total = sum(moved, ZERO)
    rounded = [w.limit_denominator(max_denominator) for w in moved]
    heavy = max(range(len(space)), key=lambda i: (moved[i], -i))
    rounded[heavy] += total - sum(rounded, ZERO)
    if rounded[heavy] < 0:
        raise InvalidParameter("rounding residue exceeds the heaviest atom; raise max_denominator")
    return DiscreteMeasure(space, rounded)


def lattice_rounding_slack(m: DiscreteMeasure, approx: DiscreteMeasure, lattice: Sequence[str], eps: float) -> float:
    """Slack term (rounding total variation) * (max pairwise distance)^2 for the approximation bound."""
    space = m.space
    target = {}
    for x in m.support:
        target[x] = next(l for l in lattice if space.d(x, l) < eps)
    moved = [ZERO] * len(space)
    for x in m.support:
        moved[space.index(target[x])] += m[x]
    tv = sum((abs(a - b) for a, b in zip(moved, approx.weights)), ZERO)
    return float(tv) * float(space.dist.max()) ** 2


def same_space(measures: Sequence[DiscreteMeasure]) -> FiniteMetricSpace:
    spaces = {id(m.space): m.space for m in measures}
    first = measures[0].space
    for s in spaces.values():
        if s != first:
            raise InvalidArgument("measures live on different spaces")
    return first

