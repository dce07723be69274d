"""Gluing of couplings and dyadic displacement interpolation between measures on Euclidean clouds."""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

from otdisint.errors import GlueMismatch, InvalidArgument, InvalidParameter, ResourceLimit
from otdisint.measures import ZERO, DiscreteMeasure, to_fraction
from otdisint.metric_space import EuclideanCloud, FiniteMetricSpace, coord_label, sq_dist
from otdisint.solver import CostMatrix, TransportPlan, network_simplex, solve_kantorovich

DEFAULT_DEPTH_CAP = 6


@dataclass
class Coupling3:
    """Sparse rational masses on X1 x X2 x X3, keyed by index triples."""

    spaces: tuple[FiniteMetricSpace, FiniteMetricSpace, FiniteMetricSpace]
    mass: dict[tuple[int, int, int], Fraction]

    def marginal(self, a: int, b: int) -> TransportPlan:
        rows, cols = self.spaces[a], self.spaces[b]
        out = [[ZERO] * len(cols) for _ in rows.labels]
        for key, w in self.mass.items():
            out[key[a]][key[b]] += w
        return TransportPlan(rows, cols, out)

    @property
    def total_mass(self) -> Fraction:
        return sum(self.mass.values(), ZERO)


def _glue_core(m12: Mapping, m23: Mapping, mid: Mapping) -> dict:
    by_mid: dict = {}
    for (b, c), w in m23.items():
        if w:
            by_mid.setdefault(b, []).append((c, w))
    out = {}
    for (a, b), w in m12.items():
        if not w:
            continue
        for c, w2 in by_mid.get(b, ()):
            out[(a, b, c)] = w * w2 / mid[b]
    return out


def glue(gamma12: TransportPlan, gamma23: TransportPlan) -> Coupling3:
    """Join two couplings along their common marginal by conditional independence.

    mass(x, y, z) = gamma12(x, y) * gamma23(y, z) / mu2(y), and 0 where mu2(y) = 0.
    """
    if gamma12.cols != gamma23.rows:
        raise GlueMismatch("the couplings do not share a middle space")
    mid = gamma12.second_marginal
    if mid != gamma23.first_marginal:
        raise GlueMismatch("second marginal of the first coupling differs from first marginal of the second")
    m12 = {(i, j): v for i, r in enumerate(gamma12.mass) for j, v in enumerate(r) if v}
    m23 = {(j, k): v for j, r in enumerate(gamma23.mass) for k, v in enumerate(r) if v}
    mass = _glue_core(m12, m23, dict(enumerate(mid.weights)))
    return Coupling3((gamma12.rows, gamma12.cols, gamma23.cols), mass)


def cloud_measure(weights: Mapping[tuple, object]) -> DiscreteMeasure:
    """Measure on the cloud of its own support points (sorted by coordinates)."""
    pts = {}
    for p, w in weights.items():
        w = to_fraction(w)
        if w:
            key = tuple(to_fraction(c) for c in p)
            pts[key] = pts.get(key, ZERO) + w
    cloud = EuclideanCloud(sorted(pts))
    return DiscreteMeasure(cloud, [pts[p] for p in cloud.points])


def point_weights(m: DiscreteMeasure) -> dict[tuple, Fraction]:
    cloud = _cloud(m)
    return {cloud.points[i]: w for i, w in enumerate(m.weights) if w}


def _cloud(m: DiscreteMeasure) -> EuclideanCloud:
    if not isinstance(m.space, EuclideanCloud):
        raise InvalidArgument("displacement interpolation needs measures on Euclidean clouds")
    return m.space


def _lerp(x: tuple, z: tuple, t: Fraction) -> tuple:
    return tuple((1 - t) * a + t * b for a, b in zip(x, z))


def optimal_quadratic_plan(mu0: DiscreteMeasure, mu1: DiscreteMeasure) -> TransportPlan:
    """Optimal plan for the squared Euclidean cost (exact)."""
    c0, c1 = _cloud(mu0), _cloud(mu1)
    if c0.dim != c1.dim:
        raise InvalidArgument("clouds have different dimensions")
    return solve_kantorovich(mu0, mu1, CostMatrix.from_metric(c0, c1, 2)).plan


def w2_squared(mu0: DiscreteMeasure, mu1: DiscreteMeasure) -> Fraction:
    """Exact W2^2 between measures on (possibly different) Euclidean clouds."""
    c0, c1 = _cloud(mu0), _cloud(mu1)
    s0, s1 = mu0.support, mu1.support
    cost = CostMatrix([[sq_dist(c0.point(a), c1.point(b)) for b in s1] for a in s0])
    return network_simplex([mu0[a] for a in s0], [mu1[b] for b in s1], cost).cost


def mccann_step(mu0: DiscreteMeasure, mu1: DiscreteMeasure, t) -> DiscreteMeasure:
    """Push the optimal quadratic plan through (x, z) -> (1 - t) x + t z."""
    t = to_fraction(t)
    if not 0 <= t <= 1:
        raise InvalidParameter(f"t must lie in [0, 1], got {t}")
    for m in (mu0, mu1):
        if not m.is_probability:
            raise InvalidArgument("interpolation endpoints must be probabilities")
    plan = optimal_quadratic_plan(mu0, mu1)
    return _push_plan(plan, t)


def _push_plan(plan: TransportPlan, t: Fraction) -> DiscreteMeasure:
    out: dict[tuple, Fraction] = {}
    for i, j in plan.support():
        p = _lerp(plan.rows.points[i], plan.cols.points[j], t)
        out[p] = out.get(p, ZERO) + plan.mass[i][j]
    return cloud_measure(out)


@dataclass
class InterpolationPath:
    """Measures at dyadic times plus a law on piecewise-linear trajectories.

    ``trajectories`` pairs the tuple of positions at each stored time with a
    rational weight; between stored times a trajectory moves on straight segments.
    """

    times: tuple[Fraction, ...]
    measures: tuple[DiscreteMeasure, ...]
    trajectories: tuple[tuple[tuple[tuple, ...], Fraction], ...]

    def evaluate(self, i: int) -> DiscreteMeasure:
        """(e_{t_i})_* of the trajectory law."""
        out: dict[tuple, Fraction] = {}
        for pts, w in self.trajectories:
            out[pts[i]] = out.get(pts[i], ZERO) + w
        return cloud_measure(out)

    def coupling(self, i: int, j: int) -> TransportPlan:
        """Joint law of the positions at times t_i and t_j, on the clouds of measures[i], measures[j]."""
        a, b = _cloud(self.measures[i]), _cloud(self.measures[j])
        mass = [[ZERO] * len(b) for _ in a.labels]
        for pts, w in self.trajectories:
            mass[a.index(coord_label(pts[i]))][b.index(coord_label(pts[j]))] += w
        return TransportPlan(a, b, mass)

    def time_label(self, i: int) -> str:
        """Dyadic time t_i written as "i/2^k"."""
        return f"{i}/{len(self.times) - 1}"


def dyadic_interpolation(mu0: DiscreteMeasure, mu1: DiscreteMeasure, k: int, depth_cap: int = DEFAULT_DEPTH_CAP) -> InterpolationPath:
    """Displacement interpolation at the times i / 2^k.

    The measures come from one optimal quadratic plan between the endpoints.
    Consecutive measures are then coupled optimally and the couplings glued
    along their shared marginals into a law on trajectories, which are
    extended by straight segments.
    """
    if k < 1:
        raise InvalidParameter("depth must be >= 1")
    if k > depth_cap:
        raise ResourceLimit(f"depth {k} exceeds the cap {depth_cap}")
    for m in (mu0, mu1):
        if not m.is_probability:
            raise InvalidArgument("interpolation endpoints must be probabilities")
    plan = optimal_quadratic_plan(mu0, mu1)
    n = 2**k
    times = tuple(Fraction(i, n) for i in range(n + 1))
    measures = [cloud_measure(point_weights(mu0))]
    measures += [_push_plan(plan, t) for t in times[1:-1]]
    measures.append(cloud_measure(point_weights(mu1)))

    law: dict[tuple, Fraction] = {(p,): w for p, w in point_weights(measures[0]).items()}
    for i in range(n):
        step = optimal_quadratic_plan(measures[i], measures[i + 1])
        a, b = step.rows.points, step.cols.points
        m12 = {(path, path[-1]): w for path, w in law.items()}
        m23 = {(a[r], b[s]): step.mass[r][s] for r, s in step.support()}
        mid = point_weights(measures[i])
        law = {path + (z,): w for (path, _, z), w in _glue_core(m12, m23, mid).items()}
    trajectories = tuple(sorted(law.items()))
    return InterpolationPath(times, tuple(measures), trajectories)


@dataclass
class ConstantSpeedReport:
    passed: bool
    w2_total: float
    max_speed_deviation: float
    max_additivity_deviation: float
    speed_violations: list[tuple] = field(default_factory=list)
    additivity_violations: list[tuple] = field(default_factory=list)
    pair_w2: dict[tuple[int, int], float] = field(default_factory=dict, repr=False)


def check_constant_speed(path: InterpolationPath, tol: float = 1e-7) -> ConstantSpeedReport:
    """Check W2(mu_s, mu_t) = (t - s) W2(mu_0, mu_1) for every stored pair.

    Also checks additivity of C^{s,t} = W2(mu_s, mu_t)^2 / (t - s) over every
    triple of stored times. Violations list (t_s, t_t, found, expected) and
    (t_1, t_2, t_3, deviation).
    """
    T = len(path.times)
    sq = {}
    for i, j in itertools.combinations(range(T), 2):
        sq[(i, j)] = w2_squared(path.measures[i], path.measures[j])
    total = math.sqrt(sq[(0, T - 1)])
    span = path.times[-1] - path.times[0]
    speed_bad, worst_speed = [], 0.0
    for (i, j), v in sq.items():
        expected = float((path.times[j] - path.times[i]) / span) * total
        dev = abs(math.sqrt(v) - expected)
        worst_speed = max(worst_speed, dev)
        if dev > tol:
            speed_bad.append((path.times[i], path.times[j], math.sqrt(v), expected))
    C = {key: v / (path.times[key[1]] - path.times[key[0]]) for key, v in sq.items()}
    add_bad, worst_add = [], 0.0
    for i, j, l in itertools.combinations(range(T), 3):
        dev = abs(float(C[(i, j)] + C[(j, l)] - C[(i, l)]))
        worst_add = max(worst_add, dev)
        if dev > tol:
            add_bad.append((path.times[i], path.times[j], path.times[l], dev))
    return ConstantSpeedReport(
        passed=not speed_bad and not add_bad,
        w2_total=total,
        max_speed_deviation=worst_speed,
        max_additivity_deviation=worst_add,
        speed_violations=speed_bad,
        additivity_violations=add_bad,
        pair_w2={key: math.sqrt(v) for key, v in sq.items()},
    )


def trajectory_additivity_violations(path: InterpolationPath) -> list[tuple]:
    """Triples where d(x1,x3)^2/(t3-t1) != d(x1,x2)^2/(t2-t1) + d(x2,x3)^2/(t3-t2) on some trajectory (exact)."""
    bad = []
    t = path.times
    for pts, w in path.trajectories:
        for i, j, l in itertools.combinations(range(len(t)), 3):
            lhs = sq_dist(pts[i], pts[l]) / (t[l] - t[i])
            rhs = sq_dist(pts[i], pts[j]) / (t[j] - t[i]) + sq_dist(pts[j], pts[l]) / (t[l] - t[j])
            if lhs != rhs:
                bad.append((pts, t[i], t[j], t[l]))
    return bad


@dataclass
class CyclicalReport:
    passed: bool
    pairs_checked: int
    violation: tuple | None = None


def check_cyclical_monotonicity(
    gamma: TransportPlan,
    c: CostMatrix,
    sample_pairs: int | None = None,
    tol: float = 1e-12,
    seed: int = 0,
) -> CyclicalReport:
    """Check c(x,y) + c(x',y') <= c(x,y') + c(x',y) + tol on pairs of support entries.

    All pairs are checked unless ``sample_pairs`` is smaller than their number,
    in which case that many pairs are drawn with a seeded generator. A
    violation is reported as (x, y, x', y', excess).
    """
    if c.shape != gamma.shape:
        raise InvalidArgument("cost and plan shapes differ")
    supp = gamma.support()
    if not supp:
        raise InvalidArgument("plan has no positive entries")
    pairs: Iterable = itertools.combinations(supp, 2)
    n_pairs = len(supp) * (len(supp) - 1) // 2
    if sample_pairs is not None and sample_pairs < n_pairs:
        rng = random.Random(seed)
        pairs = [tuple(rng.sample(supp, 2)) for _ in range(sample_pairs)]
    C = c.exact
    tol_q = Fraction(tol)
    checked = 0
    for (i, j), (a, b) in pairs:
        checked += 1
        excess = C[i][j] + C[a][b] - C[i][b] - C[a][j]
        if excess > tol_q:
            R, K = gamma.rows.labels, gamma.cols.labels
            return CyclicalReport(False, checked, (R[i], K[j], R[a], K[b], float(excess)))
    return CyclicalReport(True, checked)


def frames_csv(path: InterpolationPath) -> str:
    """One row per (time, support point): t, coordinates..., weight."""
    dim = _cloud(path.measures[0]).dim
    lines = ["t," + ",".join(f"x{d}" for d in range(dim)) + ",weight"]
    for t, m in zip(path.times, path.measures):
        for p, w in point_weights(m).items():
            lines.append(",".join([str(t)] + [repr(float(c)) for c in p] + [repr(float(w))]))
    return "\n".join(lines) + "\n"
