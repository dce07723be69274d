"""Metric (measure) foliation checks and continuity probes for disintegration maps."""

from __future__ import annotations

import itertools
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

from otdisint.disintegration import DisintegrationMap, disintegrate
from otdisint.errors import InvalidArgument, InvalidParameter
from otdisint.measures import DiscreteMeasure, PointMap, same_space, to_fraction
from otdisint.metric_space import TOL, EuclideanCloud, FiniteMetricSpace, QuotientSpace
from otdisint.solver import TransportPlan, wasserstein


def max_threads() -> int:
    try:
        return max(1, int(os.environ.get("OT_MAX_THREADS", "1")))
    except ValueError:
        return 1


def ordered_map(fn: Callable, items: Sequence) -> list:
    """map() that may fan out over OT_MAX_THREADS workers; results keep input order."""
    n = max_threads()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


class FoliatedSpace:
    """A measured space, a partition into fibres, and the conditional measure on each fibre.

    Conditionals are indexed by class id and defined on classes of positive mass.
    """

    def __init__(self, mu: DiscreteMeasure, quotient: QuotientSpace, conditionals: DisintegrationMap | None = None):
        if quotient.base != mu.space:
            raise InvalidArgument("partition and measure live on different spaces")
        if conditionals is None:
            conditionals = fibre_conditionals(mu, quotient)
        if conditionals.index != quotient.ids or conditionals.target != mu.space:
            raise InvalidArgument("conditionals are not indexed by the quotient classes")
        for cid, m in conditionals.conditionals.items():
            fibre = set(quotient.members(cid))
            stray = [x for x in m.support if x not in fibre]
            if stray:
                raise InvalidArgument(f"conditional of {cid} charges {stray} outside its fibre")
        nu = self._quotient_mass(mu, quotient)
        rebuilt = [Fraction(0)] * len(mu.space)
        for cid, m in conditionals.conditionals.items():
            for i, w in enumerate(m.weights):
                rebuilt[i] += nu[cid] * w
        if tuple(rebuilt) != mu.weights:
            raise InvalidArgument("conditionals do not reassemble to mu")
        self.mu = mu
        self.quotient = quotient
        self.conditionals = conditionals
        self.nu = nu

    @staticmethod
    def _quotient_mass(mu, quotient) -> dict[str, Fraction]:
        return {cid: sum((mu[x] for x in members), Fraction(0)) for cid, members in zip(quotient.ids, quotient.classes)}

    @property
    def base(self) -> FiniteMetricSpace:
        return self.mu.space


def fibre_conditionals(mu: DiscreteMeasure, quotient: QuotientSpace) -> DisintegrationMap:
    """mu restricted to each positive-mass fibre and normalised."""
    conds = {}
    for cid, members in zip(quotient.ids, quotient.classes):
        part = mu.restricted(members)
        if part.total_mass > 0:
            conds[cid] = part.normalized()
    return DisintegrationMap(quotient.ids, mu.space, conds)


@dataclass
class MetricFoliationReport:
    passed: bool
    violations: list[tuple[str, str, str, float, float]] = field(default_factory=list)


def check_metric_foliation(Q: QuotientSpace, tol: float = TOL) -> MetricFoliationReport:
    """Check d(F, F') = d(x, F') for all classes F != F' and every x in F.

    Violations are (x, F, F', d(x, F'), d(F, F')).
    """
    base = Q.base
    bad = []
    for a, b in itertools.permutations(range(len(Q)), 2):
        target = [base.index(y) for y in Q.classes[b]]
        dff = float(Q.dstar[a, b])
        for x in Q.classes[a]:
            dx = float(base.dist[base.index(x), target].min())
            if abs(dx - dff) > tol:
                bad.append((x, Q.ids[a], Q.ids[b], dx, dff))
    return MetricFoliationReport(not bad, bad)


@dataclass
class MMFReport:
    passed: bool
    max_deviation: float
    pairs: list[dict] = field(default_factory=list)
    violations: list[tuple[str, str]] = field(default_factory=list)


def _subspace_measure(m: DiscreteMeasure, space: FiniteMetricSpace) -> DiscreteMeasure:
    return DiscreteMeasure(space, m.as_dict())


def check_mmf(FS: FoliatedSpace, tol: float = 1e-9) -> MMFReport:
    """Compare W2(mu_y, mu_y') with d*(y, y') over all pairs of positive-mass classes.

    W2 is computed exactly on the base metric restricted to the union of the two supports.
    """
    Q = FS.quotient
    live = [cid for cid in Q.ids if cid in FS.conditionals]
    pairs = list(itertools.combinations(live, 2))

    def one(pair):
        y, y2 = pair
        a, b = FS.conditionals[y], FS.conditionals[y2]
        union = [l for l in FS.base.labels if l in set(a.support) | set(b.support)]
        sub = FS.base.subspace(union)
        return wasserstein(_subspace_measure(a, sub), _subspace_measure(b, sub), 2)

    w2s = ordered_map(one, pairs)
    rows, bad, worst = [], [], 0.0
    for (y, y2), w in zip(pairs, w2s):
        ds = float(Q.dstar[Q.class_index(y), Q.class_index(y2)])
        dev = abs(w - ds)
        worst = max(worst, dev)
        rows.append({"y": y, "y2": y2, "w2": w, "dstar": ds, "deviation": dev})
        if dev > tol:
            bad.append((y, y2))
    return MMFReport(not bad, worst, rows, bad)


@dataclass
class ModulusRow:
    y: float
    y2: float
    w2: float
    gap: float


def continuity_modulus(family: Sequence[tuple[object, DiscreteMeasure]]) -> list[ModulusRow]:
    """W2(mu_y, mu_y') and |y - y'| for every pair of family members (i < j)."""
    if not family:
        return []
    same_space([m for _, m in family])
    pairs = list(itertools.combinations(range(len(family)), 2))
    w2s = ordered_map(lambda ij: wasserstein(family[ij[0]][1], family[ij[1]][1], 2), pairs)
    out = []
    for (i, j), w in zip(pairs, w2s):
        y, y2 = to_fraction(family[i][0]), to_fraction(family[j][0])
        out.append(ModulusRow(float(y), float(y2), w, float(abs(y - y2))))
    return out


@dataclass
class Counterexample:
    """Discretised conditionals of Lebesgue measure on [0, 1] along x -> 2x (x < 1/2), 1 (x >= 1/2)."""

    grid: tuple[Fraction, ...]
    space: EuclideanCloud
    family: tuple[tuple[Fraction, DiscreteMeasure], ...]
    limit_w2_squared: Fraction = Fraction(1, 12)

    def at(self, y) -> DiscreteMeasure:
        y = to_fraction(y)
        for yy, m in self.family:
            if yy == y:
                return m
        raise InvalidArgument(f"{y} is not a grid point")


def build_counterexample(n: int) -> Counterexample:
    """Grid y_i = i/(n-1). For y < 1 the conditional is the Dirac mass at y/2;
    at y = 1 it is uniform on the grid points in [1/2, 1].

    All measures live on one cloud in R holding the points y/2 and grid ∩ [1/2, 1].
    """
    if n < 4:
        raise InvalidParameter("grid size must be >= 4")
    grid = tuple(Fraction(i, n - 1) for i in range(n))
    top = [y for y in grid if y >= Fraction(1, 2)]
    pts = sorted({(y / 2,) for y in grid[:-1]} | {(y,) for y in top})
    cloud = EuclideanCloud(pts)
    fam = []
    for y in grid[:-1]:
        fam.append((y, DiscreteMeasure.dirac(cloud, cloud.labels[pts.index((y / 2,))])))
    fam.append((Fraction(1), DiscreteMeasure(cloud, {cloud.labels[pts.index((y,))]: Fraction(1, len(top)) for y in top})))
    return Counterexample(grid, cloud, tuple(fam))


@dataclass
class BijectiveReport:
    passed: bool
    conditionals: dict[str, DiscreteMeasure]
    violations: list[str] = field(default_factory=list)


def check_bijective_dirac(pi: PointMap, mu: DiscreteMeasure) -> BijectiveReport:
    """Disintegrate mu along a bijection pi and check each conditional is the Dirac at pi^{-1}(y)."""
    if not pi.is_bijective():
        raise InvalidArgument("map is not a bijection")
    plan = TransportPlan.from_map(mu, pi)
    _, f = disintegrate(plan, "second")
    inverse = {y: x for x, y in pi.as_dict().items()}
    bad = []
    for y, m in f.conditionals.items():
        if m != DiscreteMeasure.dirac(mu.space, inverse[y]):
            bad.append(y)
    return BijectiveReport(not bad, dict(f.conditionals), bad)

