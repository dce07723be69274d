"""Transport classes: pushforwards of disintegration maps and the class-constrained problem."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from otdisint.disintegration import DisintegrationMap, dirac_disintegration, disintegrate
from otdisint.errors import InfeasibleClass, InvalidArgument, InvalidComparison, ResourceLimit
from otdisint.measures import ZERO, DiscreteMeasure, MeasureOverMeasures, PointMap, barycenter_of_classes, pushforward
from otdisint.solver import CostMatrix, TransportPlan, network_simplex, transport_cost

DEFAULT_SEARCH_CAP = 12


@dataclass(frozen=True)
class TransportClass:
    Lambda: MeasureOverMeasures
    mu: DiscreteMeasure

    def __post_init__(self):
        if self.Lambda.total_weight != 1:
            raise InvalidArgument(f"class weights sum to {self.Lambda.total_weight}, expected 1")
        if not barycenter_of_classes(self.Lambda).is_probability:
            raise InvalidArgument("class barycenter is not a probability")

    @property
    def nu(self) -> DiscreteMeasure:
        return barycenter_of_classes(self.Lambda)


def pushforward_map(f: DisintegrationMap, mu: DiscreteMeasure) -> MeasureOverMeasures:
    """f_* mu: the distinct conditionals f(x), weighted by the mu-mass mapped onto each."""
    return MeasureOverMeasures(((f[x], mu[x]) for x in mu.support), merge=True)


def class_of(plan: TransportPlan) -> MeasureOverMeasures:
    mu, f = disintegrate(plan)
    return pushforward_map(f, mu)


def transport_class(plan: TransportPlan) -> TransportClass:
    return TransportClass(class_of(plan), plan.first_marginal)


def equivalent_by_disintegration(gamma: TransportPlan, eta: TransportPlan) -> bool:
    if gamma.rows != eta.rows or gamma.cols != eta.cols:
        raise InvalidComparison("plans live on different spaces")
    if gamma.first_marginal != eta.first_marginal:
        raise InvalidComparison("plans have different first marginals")
    return class_of(gamma) == class_of(eta)


@dataclass
class DiracEquivalence:
    points_equal: bool
    classes_equal: bool

    @property
    def consistent(self) -> bool:
        return self.points_equal == self.classes_equal


def check_dirac_equivalence(T: PointMap, S: PointMap, mu: DiscreteMeasure) -> DiracEquivalence:
    """Evaluate both sides of T_* mu = S_* mu  <=>  f_* mu = g_* mu for the Dirac maps f, g."""
    points = pushforward(mu, T) == pushforward(mu, S)
    classes = pushforward_map(dirac_disintegration(T, mu), mu) == pushforward_map(dirac_disintegration(S, mu), mu)
    return DiracEquivalence(points, classes)


def lambda_consistent(L: MeasureOverMeasures, nu: DiscreteMeasure) -> bool:
    """True iff the mixture of the atoms of ``L`` is exactly ``nu``."""
    if L.space != nu.space:
        return False
    return barycenter_of_classes(L) == nu


def abstract_cost_exact(x: int, lam: DiscreteMeasure, c: CostMatrix) -> Fraction:
    row = c.exact[x]
    if len(row) != len(lam.weights):
        raise InvalidArgument("measure and cost row have different lengths")
    return sum((cv * w for cv, w in zip(row, lam.weights) if w), ZERO)


def abstract_cost(x: int, lam: DiscreteMeasure, c: CostMatrix) -> float:
    """Expected cost sum_y c(x, y) lam(y) of sending point ``x`` (a row index) to ``lam``."""
    return float(abstract_cost_exact(x, lam, c))


@dataclass
class MKResult:
    f: DisintegrationMap
    cost: float
    cost_exact: Fraction
    relaxation_bound: float
    relaxation_exact: Fraction
    nodes: int

    def plan(self, mu: DiscreteMeasure) -> TransportPlan:
        from otdisint.disintegration import reassemble

        return reassemble(mu, self.f)


def solve_mk_in_class(
    c: CostMatrix,
    mu: DiscreteMeasure,
    L: MeasureOverMeasures,
    search_cap: int = DEFAULT_SEARCH_CAP,
) -> MKResult:
    """Minimise sum_x mu(x) c~(x, f(x)) over maps f: supp(mu) -> atoms(L) with f_* mu = L.

    Exact branch-and-bound over assignments of support points to atoms. Points
    are placed heaviest first, atoms tried cheapest first; a branch is cut when
    some unplaced point no longer fits any atom's remaining weight or when its
    cost plus the sum of cheapest still-feasible atom costs reaches the incumbent.
    The transport LP between mu and the atom weights with cost c~ is returned
    as a lower bound.
    """
    if not isinstance(c, CostMatrix):
        c = CostMatrix(c)
    if c.shape != (len(mu.space), len(L.space)):
        raise InvalidArgument(f"cost shape {c.shape} does not match ({len(mu.space)}x{len(L.space)})")
    if mu.total_mass != L.total_weight:
        raise InfeasibleClass(f"mu has mass {mu.total_mass} but the class weights sum to {L.total_weight}")
    support = list(mu.support)
    if len(support) > search_cap:
        raise ResourceLimit(f"|supp(mu)| = {len(support)} exceeds the search cap {search_cap}")
    atoms = [m for m, _ in L.atoms]
    caps = [w for _, w in L.atoms]
    rows = [mu.space.index(x) for x in support]
    ct = [[abstract_cost_exact(r, a, c) for a in atoms] for r in rows]
    mass = [mu.weights[r] for r in rows]

    relax = network_simplex(mass, caps, CostMatrix(ct)).cost

    order = sorted(range(len(support)), key=lambda k: (-mass[k], k))
    prefs = {k: sorted(range(len(atoms)), key=lambda j: (ct[k][j], j)) for k in order}
    best_cost = None
    best_assign = None
    assign = [None] * len(support)
    rem = list(caps)
    nodes = 0

    def bound(depth):
        total = ZERO
        for k in order[depth:]:
            cheapest = None
            for j in prefs[k]:
                if rem[j] >= mass[k]:
                    cheapest = ct[k][j]
                    break
            if cheapest is None:
                return None
            total += mass[k] * cheapest
        return total

    def search(depth, cost):
        nonlocal best_cost, best_assign, nodes
        nodes += 1
        if depth == len(order):
            if best_cost is None or cost < best_cost:
                best_cost, best_assign = cost, list(assign)
            return
        lb = bound(depth)
        if lb is None or (best_cost is not None and cost + lb >= best_cost):
            return
        k = order[depth]
        for j in prefs[k]:
            if rem[j] >= mass[k]:
                rem[j] -= mass[k]
                assign[k] = j
                search(depth + 1, cost + mass[k] * ct[k][j])
                assign[k] = None
                rem[j] += mass[k]

    search(0, ZERO)
    if best_assign is None:
        raise InfeasibleClass("no map from supp(mu) onto the atoms reproduces the class weights")
    f = DisintegrationMap(mu.space, L.space, {x: atoms[best_assign[k]] for k, x in enumerate(support)})
    return MKResult(f, float(best_cost), best_cost, float(relax), relax, nodes)


def class_distance(A: MeasureOverMeasures, B: MeasureOverMeasures) -> float:
    """W1 between two measures over measures with ground cost W1 between atoms.

    A quantitative companion to exact class equality; zero iff the classes agree.
    """
    if A.space != B.space:
        raise InvalidArgument("classes live on different spaces")
    cost = [[transport_cost(a, b, 1) for b, _ in B.atoms] for a, _ in A.atoms]
    res = network_simplex([w for _, w in A.atoms], [w for _, w in B.atoms], CostMatrix(cost))
    return float(res.cost)
