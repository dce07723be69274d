"""Exact Kantorovich solver (network simplex on the transportation graph), W_p and the W1 dual.

Flows, potentials and costs are exact rationals. Float costs are converted to
the rational they encode, so the optimum is exact for the costs as given.
Pivoting uses Bland's rule on the row-major arc order for both the entering
and the leaving arc, which rules out cycling on degenerate bases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from otdisint.errors import Infeasible, InvalidArgument, InvalidParameter, ResourceLimit
from otdisint.measures import ZERO, DiscreteMeasure, PointMap, to_fraction
from otdisint.metric_space import EuclideanCloud, FiniteMetricSpace, euclid, sq_dist

MAX_PIVOTS = 200_000


def _power(d: float, p):
    if float(p).is_integer():
        return Fraction(d) ** int(p)
    return d**p


class CostMatrix:
    """Nonnegative finite costs c(x_i, y_j), stored exactly."""

    def __init__(self, values):
        rows = [[to_fraction(v) for v in row] for row in values]
        if rows and len({len(r) for r in rows}) != 1:
            raise InvalidArgument("ragged cost matrix")
        for r in rows:
            for v in r:
                if v < 0:
                    raise InvalidArgument(f"negative cost {v}")
        self.exact = tuple(tuple(r) for r in rows)
        self.shape = (len(rows), len(rows[0]) if rows else 0)

    def __getitem__(self, ij) -> Fraction:
        i, j = ij
        return self.exact[i][j]

    def as_array(self) -> np.ndarray:
        return np.array([[float(v) for v in r] for r in self.exact]).reshape(self.shape)

    def submatrix(self, rows: Sequence[int], cols: Sequence[int]) -> "CostMatrix":
        return CostMatrix([[self.exact[i][j] for j in cols] for i in rows])

    @classmethod
    def from_metric(cls, rows: FiniteMetricSpace, cols: FiniteMetricSpace, p=1) -> "CostMatrix":
        """c = d^p between points of two spaces sharing labels with a common metric.

        Only valid when ``rows`` and ``cols`` are the same space, or both are
        Euclidean clouds (then the Euclidean distance between coordinates is used).
        Squared Euclidean costs are exact rationals.
        """
        if isinstance(rows, EuclideanCloud) and isinstance(cols, EuclideanCloud):
            if p == 2:
                return cls([[sq_dist(a, b) for b in cols.points] for a in rows.points])
            return cls([[_power(euclid(a, b), p) for b in cols.points] for a in rows.points])
        if rows != cols:
            raise InvalidArgument("ground cost needs a common space")
        d = rows.dist
        return cls([[_power(float(d[i, j]), p) for j in range(len(cols))] for i in range(len(rows))])

    def __eq__(self, other):
        return isinstance(other, CostMatrix) and self.exact == other.exact

    def __repr__(self):
        return f"CostMatrix({self.as_array().tolist()!r})"


class TransportPlan:
    """Rational masses on X x Y."""

    def __init__(self, rows: FiniteMetricSpace, cols: FiniteMetricSpace, mass):
        m = [[to_fraction(v) for v in r] for r in mass]
        if len(m) != len(rows) or any(len(r) != len(cols) for r in m):
            raise InvalidArgument(f"plan shape does not match spaces ({len(rows)}x{len(cols)})")
        for i, r in enumerate(m):
            for j, v in enumerate(r):
                if v < 0:
                    raise InvalidArgument(f"negative mass {v} at ({rows.labels[i]}, {cols.labels[j]})")
        self.rows = rows
        self.cols = cols
        self.mass = tuple(tuple(r) for r in m)

    @property
    def shape(self):
        return (len(self.rows), len(self.cols))

    @property
    def first_marginal(self) -> DiscreteMeasure:
        return DiscreteMeasure(self.rows, [sum(r, ZERO) for r in self.mass])

    @property
    def second_marginal(self) -> DiscreteMeasure:
        return DiscreteMeasure(self.cols, [sum(c, ZERO) for c in zip(*self.mass)] if self.mass else [])

    @property
    def total_mass(self) -> Fraction:
        return sum((sum(r, ZERO) for r in self.mass), ZERO)

    def entry(self, x: str, y: str) -> Fraction:
        return self.mass[self.rows.index(x)][self.cols.index(y)]

    def support(self) -> list[tuple[int, int]]:
        return [(i, j) for i, r in enumerate(self.mass) for j, v in enumerate(r) if v > 0]

    def transpose(self) -> "TransportPlan":
        return TransportPlan(self.cols, self.rows, list(zip(*self.mass)))

    def cost(self, c: CostMatrix) -> Fraction:
        if c.shape != self.shape:
            raise InvalidArgument(f"cost shape {c.shape} does not match plan shape {self.shape}")
        return sum((c.exact[i][j] * v for i, r in enumerate(self.mass) for j, v in enumerate(r) if v), ZERO)

    @classmethod
    def product(cls, mu: DiscreteMeasure, nu: DiscreteMeasure) -> "TransportPlan":
        return cls(mu.space, nu.space, [[a * b for b in nu.weights] for a in mu.weights])

    @classmethod
    def from_map(cls, mu: DiscreteMeasure, T: PointMap) -> "TransportPlan":
        """The deterministic plan (id, T)_* mu."""
        if mu.space != T.source:
            raise InvalidArgument("measure and map have different source spaces")
        mass = [[ZERO] * len(T.target) for _ in mu.space.labels]
        for i, (w, y) in enumerate(zip(mu.weights, T.images)):
            mass[i][T.target.index(y)] = w
        return cls(mu.space, T.target, mass)

    def __eq__(self, other):
        if not isinstance(other, TransportPlan):
            return NotImplemented
        return self.mass == other.mass and self.rows == other.rows and self.cols == other.cols

    def __repr__(self):
        return f"TransportPlan({[[str(v) for v in r] for r in self.mass]})"


@dataclass
class SolveReport:
    plan: TransportPlan
    cost: float
    cost_exact: Fraction
    row_potentials: dict[str, float] = field(default_factory=dict)
    col_potentials: dict[str, float] = field(default_factory=dict)
    iterations: int = 0
    status: str = "optimal"


@dataclass
class _Simplex:
    flows: list[list[Fraction]]
    cost: Fraction
    u: list[Fraction]
    v: list[Fraction]
    iterations: int


def _northwest_basis(supply, demand):
    m, n = len(supply), len(demand)
    a, b = list(supply), list(demand)
    basis: dict[tuple[int, int], Fraction] = {}
    i = j = 0
    while True:
        f = min(a[i], b[j])
        basis[(i, j)] = f
        a[i] -= f
        b[j] -= f
        if i == m - 1 and j == n - 1:
            break
        if (a[i] == 0 and i < m - 1) or j == n - 1:
            i += 1
        else:
            j += 1
    return basis


def _tree(basis, m, n, C):
    """Potentials with u[0] = 0, plus parent/depth arrays of the basis tree rooted at row 0."""
    adj: list[list[int]] = [[] for _ in range(m + n)]
    for i, j in basis:
        adj[i].append(m + j)
        adj[m + j].append(i)
    pot: list[Fraction | None] = [None] * (m + n)
    parent = [-1] * (m + n)
    depth = [0] * (m + n)
    pot[0] = ZERO
    stack = [0]
    while stack:
        a = stack.pop()
        for b in adj[a]:
            if pot[b] is None:
                if a < m:
                    pot[b] = C[a][b - m] - pot[a]
                else:
                    pot[b] = C[b][a - m] - pot[a]
                parent[b] = a
                depth[b] = depth[a] + 1
                stack.append(b)
    return pot[:m], pot[m:], parent, depth


def _arc(a: int, b: int, m: int) -> tuple[int, int]:
    return (a, b - m) if a < m else (b, a - m)


def network_simplex(supply: Sequence, demand: Sequence, cost) -> _Simplex:
    supply = [to_fraction(s) for s in supply]
    demand = [to_fraction(d) for d in demand]
    C = cost.exact if isinstance(cost, CostMatrix) else CostMatrix(cost).exact
    m, n = len(supply), len(demand)
    if m == 0 or n == 0:
        raise InvalidArgument("empty marginal")
    if (len(C), len(C[0]) if C else 0) != (m, n):
        raise InvalidArgument(f"cost shape does not match marginals ({m}x{n})")
    if sum(supply) != sum(demand):
        raise Infeasible(f"total masses differ: {sum(supply)} vs {sum(demand)}")
    if any(s < 0 for s in supply) or any(d < 0 for d in demand):
        raise InvalidArgument("negative marginal mass")
    Cf = [[float(c) for c in r] for r in C]
    basis = _northwest_basis(supply, demand)
    it = 0
    while True:
        u, v, parent, depth = _tree(basis, m, n, C)
        uf = [float(x) for x in u]
        vf = [float(x) for x in v]
        enter = None
        for i in range(m):
            for j in range(n):
                if (i, j) in basis:
                    continue
                rf = Cf[i][j] - uf[i] - vf[j]
                if rf > 1e-9 * (1.0 + abs(Cf[i][j]) + abs(uf[i]) + abs(vf[j])):
                    continue
                if C[i][j] - u[i] - v[j] < 0:
                    enter = (i, j)
                    break
            if enter is not None:
                break
        if enter is None:
            break
        it += 1
        if it > MAX_PIVOTS:
            raise ResourceLimit("pivot limit exceeded")
        a, b = enter[0], m + enter[1]
        pa, pb = [a], [b]
        while depth[pa[-1]] > depth[pb[-1]]:
            pa.append(parent[pa[-1]])
        while depth[pb[-1]] > depth[pa[-1]]:
            pb.append(parent[pb[-1]])
        while pa[-1] != pb[-1]:
            pa.append(parent[pa[-1]])
            pb.append(parent[pb[-1]])
        path = pb + pa[-2::-1]  # from the column end of the entering arc back to its row
        arcs = [_arc(path[k], path[k + 1], m) for k in range(len(path) - 1)]
        minus = arcs[0::2]
        plus = arcs[1::2]
        theta = min(basis[e] for e in minus)
        leave = min(e for e in minus if basis[e] == theta)
        for e in minus:
            basis[e] -= theta
        for e in plus:
            basis[e] += theta
        basis[enter] = theta
        del basis[leave]
    flows = [[ZERO] * n for _ in range(m)]
    for (i, j), f in basis.items():
        flows[i][j] = f
    total = sum((C[i][j] * f for (i, j), f in basis.items()), ZERO)
    return _Simplex(flows, total, u, v, it)


def solve_kantorovich(mu: DiscreteMeasure, nu: DiscreteMeasure, c: CostMatrix) -> SolveReport:
    """Optimal plan for min sum c_ij gamma_ij over couplings of ``mu`` and ``nu``.

    The LP is solved on the supports only; the plan is returned on the full spaces.
    """
    if not isinstance(c, CostMatrix):
        c = CostMatrix(c)
    if c.shape != (len(mu.space), len(nu.space)):
        raise InvalidArgument(f"cost shape {c.shape} does not match spaces ({len(mu.space)}x{len(nu.space)})")
    if mu.total_mass != nu.total_mass:
        raise Infeasible(f"total masses differ: {mu.total_mass} vs {nu.total_mass}")
    if mu.total_mass == 0:
        raise Infeasible("zero total mass")
    ri = [i for i, w in enumerate(mu.weights) if w > 0]
    ci = [j for j, w in enumerate(nu.weights) if w > 0]
    res = network_simplex([mu.weights[i] for i in ri], [nu.weights[j] for j in ci], c.submatrix(ri, ci))
    mass = [[ZERO] * len(nu.space) for _ in mu.space.labels]
    for a, i in enumerate(ri):
        for b, j in enumerate(ci):
            mass[i][j] = res.flows[a][b]
    plan = TransportPlan(mu.space, nu.space, mass)
    return SolveReport(
        plan=plan,
        cost=float(res.cost),
        cost_exact=res.cost,
        row_potentials={mu.space.labels[i]: float(res.u[a]) for a, i in enumerate(ri)},
        col_potentials={nu.space.labels[j]: float(res.v[b]) for b, j in enumerate(ci)},
        iterations=res.iterations,
    )


def _check_p(p):
    if isinstance(p, str) or p is None or p == math.inf:
        raise InvalidParameter(f"unsupported order p={p!r}")
    if not p >= 1:
        raise InvalidParameter(f"p must be >= 1, got {p!r}")


def _common_space(mu: DiscreteMeasure, nu: DiscreteMeasure) -> FiniteMetricSpace:
    if mu.space != nu.space:
        raise InvalidArgument("measures live on different spaces")
    return mu.space


def transport_cost(mu: DiscreteMeasure, nu: DiscreteMeasure, p=2) -> Fraction:
    """Exact optimal cost for c = d^p on the common space (W_p^p)."""
    _check_p(p)
    space = _common_space(mu, nu)
    for m in (mu, nu):
        if not m.is_probability:
            raise InvalidArgument("W_p is defined for probability measures")
    rows = space.subspace(mu.support)
    cols = space.subspace(nu.support)
    c = CostMatrix.from_metric(rows, cols, p) if isinstance(space, EuclideanCloud) else _sub_cost(space, mu.support, nu.support, p)
    res = network_simplex([mu[x] for x in mu.support], [nu[y] for y in nu.support], c)
    return res.cost


def _sub_cost(space, xs, ys, p) -> CostMatrix:
    ix = [space.index(x) for x in xs]
    iy = [space.index(y) for y in ys]
    return CostMatrix([[_power(float(space.dist[i, j]), p) for j in iy] for i in ix])


def wasserstein(mu: DiscreteMeasure, nu: DiscreteMeasure, p=2) -> float:
    """W_p(mu, nu) = (min sum d^p gamma)^(1/p) on the common space of ``mu`` and ``nu``."""
    cost = transport_cost(mu, nu, p)
    if p == 1:
        return float(cost)
    if p == 2:
        return math.sqrt(cost)
    return float(cost) ** (1.0 / p)


@dataclass
class W1Dual:
    phi: dict[str, float]
    value: float
    primal: float
    lipschitz_violation: float
    phi_exact: dict[str, Fraction] = field(repr=False, default_factory=dict)

    def __iter__(self):
        yield self.phi
        yield self.value


def w1_dual(mu: DiscreteMeasure, nu: DiscreteMeasure, space: FiniteMetricSpace | None = None) -> W1Dual:
    """Kantorovich potential for W1 and the dual value sum phi d(mu - nu).

    The potential is the c-transform phi(x) = min_y (d(x, y) - v(y)) of the
    optimal column potentials, which is 1-Lipschitz and attains the primal value.
    """
    common = _common_space(mu, nu)
    if space is not None and space != common:
        raise InvalidArgument("space does not match the measures")
    space = common
    for m in (mu, nu):
        if not m.is_probability:
            raise InvalidArgument("W1 duality is stated for probability measures")
    n = len(space)
    D = [[Fraction(float(space.dist[i, j])) for j in range(n)] for i in range(n)]
    res = network_simplex(mu.weights, nu.weights, CostMatrix(D))
    phi = [min(D[i][j] - res.v[j] for j in range(n)) for i in range(n)]
    value = sum((p * (a - b) for p, a, b in zip(phi, mu.weights, nu.weights)), ZERO)
    worst = 0.0
    for i in range(n):
        for j in range(n):
            worst = max(worst, float(phi[i] - phi[j]) - float(space.dist[i, j]))
    return W1Dual(
        phi={l: float(p) for l, p in zip(space.labels, phi)},
        value=float(value),
        primal=float(res.cost),
        lipschitz_violation=worst,
        phi_exact=dict(zip(space.labels, phi)),
    )


@dataclass
class PlanCheck:
    ok: bool
    row_violations: list[tuple[str, Fraction, Fraction]]
    col_violations: list[tuple[str, Fraction, Fraction]]
    message: str = ""


def verify_plan(plan: TransportPlan, mu: DiscreteMeasure, nu: DiscreteMeasure) -> PlanCheck:
    """Exact check of both marginal identities; violations are (label, expected, found)."""
    if plan.rows != mu.space or plan.cols != nu.space:
        return PlanCheck(False, [], [], "plan spaces do not match the measures")
    rows = [(l, e, g) for l, e, g in zip(mu.space.labels, mu.weights, plan.first_marginal.weights) if e != g]
    cols = [(l, e, g) for l, e, g in zip(nu.space.labels, nu.weights, plan.second_marginal.weights) if e != g]
    return PlanCheck(not rows and not cols, rows, cols)
