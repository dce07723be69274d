import itertools
import random
from fractions import Fraction as F

import pytest
from hypothesis import given
from hypothesis import strategies as st

from otdisint import (
    CostMatrix,
    DiscreteMeasure,
    FiniteMetricSpace,
    MeasureOverMeasures,
    PointMap,
    TransportClass,
    TransportPlan,
    abstract_cost,
    check_dirac_equivalence,
    disintegrate,
    equivalent_by_disintegration,
    lambda_consistent,
    pushforward_map,
    solve_mk_in_class,
)
from otdisint.errors import InfeasibleClass, InvalidArgument, InvalidComparison, ResourceLimit
from otdisint.solver import solve_kantorovich
from otdisint.transport_class import class_distance, class_of
from strategies import random_probability

X = FiniteMetricSpace.discrete(["x1", "x2", "x3"])
Y = FiniteMetricSpace.discrete(["y1", "y2"])
MU = DiscreteMeasure(X, [F(1, 3)] * 3)
NU = DiscreteMeasure(Y, [F(1, 6), F(5, 6)])


def plan(rows30):
    return TransportPlan(X, Y, [[F(v, 30) for v in r] for r in rows30])


P1 = plan([[5, 5], [0, 10], [0, 10]])
P2 = plan([[0, 10], [5, 5], [0, 10]])
P3 = plan([[3, 7], [2, 8], [0, 10]])
P4 = plan([[1, 9], [4, 6], [0, 10]])
HALF = DiscreteMeasure(Y, [F(1, 2), F(1, 2)])
TOP = DiscreteMeasure(Y, [0, 1])
LAMBDA_F = MeasureOverMeasures([(HALF, F(1, 3)), (TOP, F(2, 3))])


class TestFactory:
    def test_pushforward_f(self):
        assert class_of(P1) == LAMBDA_F

    def test_pushforward_h(self):
        expected = MeasureOverMeasures(
            [(DiscreteMeasure(Y, [F(3, 10), F(7, 10)]), F(1, 3)), (DiscreteMeasure(Y, [F(2, 10), F(8, 10)]), F(1, 3)), (TOP, F(1, 3))]
        )
        assert class_of(P3) == expected

    def test_equivalences(self):
        assert equivalent_by_disintegration(P1, P1)
        assert equivalent_by_disintegration(P1, P2)
        assert not equivalent_by_disintegration(P1, P3)
        assert not equivalent_by_disintegration(P3, P4)
        assert class_distance(class_of(P1), class_of(P2)) == 0.0
        assert class_distance(class_of(P3), class_of(P4)) > 0

    def test_all_share_second_marginal(self):
        for p in (P1, P2, P3, P4):
            assert p.second_marginal == NU

    def test_lambda_consistency(self):
        assert lambda_consistent(LAMBDA_F, NU)
        assert lambda_consistent(MeasureOverMeasures([(NU, 1)]), NU)
        assert not lambda_consistent(LAMBDA_F, DiscreteMeasure(Y, [F(1, 2), F(1, 2)]))

    def test_transport_class_type(self):
        tc = TransportClass(LAMBDA_F, MU)
        assert tc.nu == NU
        with pytest.raises(InvalidArgument):
            TransportClass(MeasureOverMeasures([(HALF, F(1, 2))]), MU)

    def test_different_first_marginals(self):
        other = TransportPlan(X, Y, [[F(1, 6), 0], [0, F(1, 2)], [0, F(1, 3)]])
        with pytest.raises(InvalidComparison):
            equivalent_by_disintegration(P1, other)

    def test_constant_conditionals_single_atom(self):
        mu, f = disintegrate(TransportPlan.product(MU, NU))
        assert pushforward_map(f, mu).atoms == ((NU, F(1)),)


class TestDiracEquivalence:
    S2 = FiniteMetricSpace.discrete(["1", "2"])

    def test_same_map(self):
        T = PointMap.identity(self.S2)
        r = check_dirac_equivalence(T, T, DiscreteMeasure.uniform(self.S2))
        assert r.points_equal and r.classes_equal

    def test_swap_uniform(self):
        T, S = PointMap.identity(self.S2), PointMap(self.S2, self.S2, ["2", "1"])
        r = check_dirac_equivalence(T, S, DiscreteMeasure.uniform(self.S2))
        assert r.points_equal and r.classes_equal

    def test_swap_skewed(self):
        T, S = PointMap.identity(self.S2), PointMap(self.S2, self.S2, ["2", "1"])
        r = check_dirac_equivalence(T, S, DiscreteMeasure(self.S2, [F(2, 3), F(1, 3)]))
        assert not r.points_equal and not r.classes_equal

    @given(st.integers(0, 10**6))
    def test_biconditional(self, seed):
        rng = random.Random(seed)
        A = FiniteMetricSpace.discrete([f"a{i}" for i in range(rng.randint(1, 5))])
        B = FiniteMetricSpace.discrete([f"b{i}" for i in range(rng.randint(1, 4))])
        mu = DiscreteMeasure(A, [rng.randint(0, 3) for _ in A.labels] if rng.random() < 0.5 else [1] * len(A))
        if mu.total_mass == 0:
            mu = DiscreteMeasure.uniform(A)
        T = PointMap(A, B, [rng.choice(B.labels) for _ in A.labels])
        S = PointMap(A, B, [rng.choice(B.labels) for _ in A.labels])
        assert check_dirac_equivalence(T, S, mu).consistent


class TestAbstractCost:
    C = CostMatrix([[0, 1], [1, 0], [2, 3]])

    def test_dirac(self):
        assert abstract_cost(2, DiscreteMeasure.dirac(Y, "y2"), self.C) == 3.0

    def test_constant_cost(self):
        assert abstract_cost(1, NU, CostMatrix([[1, 1]] * 3)) == 1.0

    def test_row_average(self):
        assert abstract_cost(2, HALF, self.C) == 2.5


class TestMKClass:
    def test_factory_optimum(self):
        c = CostMatrix([[0, 1], [1, 0], [1, 0]])
        res = solve_mk_in_class(c, MU, LAMBDA_F)
        assert res.cost_exact == F(1, 6)
        assert res.f["x1"] == HALF
        assert res.f["x2"] == res.f["x3"] == TOP
        assert res.relaxation_exact <= res.cost_exact
        assert pushforward_map(res.f, MU) == LAMBDA_F

    def test_delta_nu_is_product(self):
        c = CostMatrix([[0, 1], [1, 0], [1, 0]])
        res = solve_mk_in_class(c, MU, MeasureOverMeasures([(NU, 1)]))
        assert all(res.f[x] == NU for x in X.labels)
        assert res.cost_exact == TransportPlan.product(MU, NU).cost(c)

    def test_infeasible(self):
        A = FiniteMetricSpace.discrete(["a", "b"])
        mu = DiscreteMeasure(A, [F(2, 3), F(1, 3)])
        L = MeasureOverMeasures([(DiscreteMeasure.dirac(Y, "y1"), F(1, 2)), (DiscreteMeasure.dirac(Y, "y2"), F(1, 2))])
        with pytest.raises(InfeasibleClass) as exc:
            solve_mk_in_class(CostMatrix([[0, 0], [0, 0]]), mu, L)
        assert exc.value.exit_code == 2

    def test_search_cap(self):
        A = FiniteMetricSpace.discrete([str(i) for i in range(5)])
        mu = DiscreteMeasure.uniform(A)
        with pytest.raises(ResourceLimit):
            solve_mk_in_class(CostMatrix([[1, 1]] * 5), mu, MeasureOverMeasures([(NU, 1)]), search_cap=4)

    def test_min_over_classes_is_kantorovich(self):
        # the class of an optimal plan contains that plan, and every class-constrained
        # optimum is a feasible plan, so the minimum over classes is the Kantorovich value
        rng = random.Random(5)
        for _ in range(10):
            c = CostMatrix([[rng.randint(0, 9) for _ in range(2)] for _ in range(3)])
            opt = solve_kantorovich(MU, NU, c)
            assert solve_mk_in_class(c, MU, class_of(opt.plan)).cost_exact == opt.cost_exact
            for p in (P1, P2, P3, P4):
                assert solve_mk_in_class(c, MU, class_of(p)).cost_exact >= opt.cost_exact


@given(st.integers(0, 10**6))
def test_equivalence_relation(seed):
    rng = random.Random(seed)
    mu = DiscreteMeasure(X, random_probability(rng, 3))
    atoms = [DiscreteMeasure(Y, random_probability(rng, 2, True)) for _ in range(2)]

    def random_plan():
        from otdisint.disintegration import DisintegrationMap, reassemble

        return reassemble(mu, DisintegrationMap(X, Y, {x: rng.choice(atoms) for x in X.labels}))

    a, b, c = random_plan(), random_plan(), random_plan()
    assert equivalent_by_disintegration(a, a)
    assert equivalent_by_disintegration(a, b) == equivalent_by_disintegration(b, a)
    if equivalent_by_disintegration(a, b) and equivalent_by_disintegration(b, c):
        assert equivalent_by_disintegration(a, c)
