import random
from fractions import Fraction as F

import pytest
from hypothesis import given
from hypothesis import strategies as st

from otdisint import (
    INF,
    DiscreteMeasure,
    EuclideanCloud,
    FiniteMetricSpace,
    FoliatedSpace,
    PointMap,
    QuotientSpace,
    build_counterexample,
    check_bijective_dirac,
    check_metric_foliation,
    check_mmf,
    continuity_modulus,
    group_quotient,
    lq_product,
)
from otdisint.errors import InvalidArgument, InvalidParameter
from otdisint.foliation import max_threads
from otdisint.interpolation import w2_squared
from builders import act_on_first_factor, cycle, invariant_weights, rotation_group, swap_action
from strategies import random_metric, random_probability


def product_foliation(A, B, q, wa, wb):
    X = lq_product(A, B, q)
    Q = QuotientSpace(X, [[f"({a},{b})" for b in B.labels] for a in A.labels])
    mu = DiscreteMeasure(X, {f"({a},{b})": wa[i] * wb[j] for i, a in enumerate(A.labels) for j, b in enumerate(B.labels)})
    return FoliatedSpace(mu, Q)


class TestMetricFoliation:
    def test_singletons(self):
        X = FiniteMetricSpace.on_line({"a": 0, "b": 1, "c": 5})
        assert check_metric_foliation(QuotientSpace(X, [["a"], ["b"], ["c"]])).passed

    def test_product_fibres(self):
        A = FiniteMetricSpace.on_line({"a0": 0, "a1": 1, "a2": 3})
        B = FiniteMetricSpace.on_line({"b0": 0, "b1": 2})
        X = lq_product(A, B, 2)
        Q = QuotientSpace(X, [[f"({a},{b})" for b in B.labels] for a in A.labels])
        assert check_metric_foliation(Q).passed

    def test_tilted_fibre(self):
        X = EuclideanCloud([(0, 0), (0, 1), (1, 0), (2, 1)])
        Q = QuotientSpace(X, [["0,0", "0,1"], ["1,0", "2,1"]])
        rep = check_metric_foliation(Q)
        assert not rep.passed
        located = {(v[0], v[2]) for v in rep.violations}
        assert ("0,1", "[1,0]") in located
        assert ("2,1", "[0,0]") in located


class TestMMF:
    @pytest.mark.parametrize("q", [1, 2, INF])
    def test_product(self, q):
        A = FiniteMetricSpace.on_line({"a0": 0, "a1": 1, "a2": 3})
        B = FiniteMetricSpace.on_line({"b0": 0, "b1": 2, "b2": 2.5})
        FS = product_foliation(A, B, q, [F(1, 2), F(1, 3), F(1, 6)], [F(1, 4), F(1, 4), F(1, 2)])
        rep = check_mmf(FS)
        assert rep.passed and rep.max_deviation <= 1e-9
        assert {(r["y"], r["y2"]): r["dstar"] for r in rep.pairs}[("[(a0,b0)]", "[(a2,b0)]")] == 3.0

    def test_group_quotient(self):
        X, action = swap_action(FiniteMetricSpace.on_line({"0": 0, "1": 1, "2": 3}), 2)
        Q = group_quotient(X, action)
        mu = DiscreteMeasure(X, invariant_weights(X, Q.classes, random.Random(1)))
        assert check_mmf(FoliatedSpace(mu, Q)).passed

    def test_skewed_conditionals_fail(self):
        A = FiniteMetricSpace.on_line({"a0": 0, "a1": 1})
        B = FiniteMetricSpace.on_line({"b0": 0, "b1": 2})
        X = lq_product(A, B, 2)
        Q = QuotientSpace(X, [[f"({a},{b})" for b in B.labels] for a in A.labels])
        mu = DiscreteMeasure(X, {"(a0,b0)": F(1, 4), "(a0,b1)": F(1, 4), "(a1,b0)": F(1, 8), "(a1,b1)": F(3, 8)})
        rep = check_mmf(FoliatedSpace(mu, Q))
        assert not rep.passed
        assert rep.pairs[0]["w2"] > rep.pairs[0]["dstar"]

    def test_conditionals_must_stay_in_fibre(self):
        from otdisint.disintegration import DisintegrationMap

        X = FiniteMetricSpace.on_line({"a": 0, "b": 1})
        Q = QuotientSpace(X, [["a"], ["b"]])
        mu = DiscreteMeasure.uniform(X)
        bad = DisintegrationMap(Q.ids, X, {"[a]": DiscreteMeasure.dirac(X, "b"), "[b]": DiscreteMeasure.dirac(X, "a")})
        with pytest.raises(InvalidArgument):
            FoliatedSpace(mu, Q, bad)

    def test_threads_do_not_change_results(self, monkeypatch):
        A, B = FiniteMetricSpace.on_line({"a0": 0, "a1": 1, "a2": 3, "a3": 4}), FiniteMetricSpace.on_line({"b0": 0, "b1": 1})
        FS = product_foliation(A, B, 2, [F(1, 4)] * 4, [F(1, 3), F(2, 3)])
        serial = check_mmf(FS)
        monkeypatch.setenv("OT_MAX_THREADS", "4")
        assert max_threads() == 4
        assert check_mmf(FS) == serial

    @given(st.integers(0, 10**6), st.sampled_from([1, 2, INF]))
    def test_random_products(self, seed, q):
        rng = random.Random(seed)
        A, B = random_metric(rng, rng.randint(1, 4), "a"), random_metric(rng, rng.randint(1, 4), "b")
        FS = product_foliation(A, B, q, random_probability(rng, len(A)), random_probability(rng, len(B)))
        assert check_mmf(FS).max_deviation <= 1e-9

    @given(st.integers(0, 10**6), st.sampled_from([2, 3, 4]))
    def test_random_rotations(self, seed, n):
        rng = random.Random(seed)
        B = random_metric(rng, 2, "b")
        X, action = act_on_first_factor(cycle(n), B, 2, rotation_group(n))
        Q = group_quotient(X, action)
        mu = DiscreteMeasure(X, invariant_weights(X, Q.classes, rng))
        assert check_mmf(FoliatedSpace(mu, Q)).passed


class TestContinuity:
    def test_constant_family(self):
        X = FiniteMetricSpace.on_line({"a": 0, "b": 1})
        m = DiscreteMeasure(X, [F(1, 3), F(2, 3)])
        assert all(r.w2 == 0 for r in continuity_modulus([(0, m), (F(1, 2), m), (1, m)]))

    def test_mmf_family_is_lipschitz(self):
        A = FiniteMetricSpace.on_line({"0": 0, "1": 1, "3": 3})
        B = FiniteMetricSpace.on_line({"b0": 0, "b1": 2})
        FS = product_foliation(A, B, 2, [F(1, 3)] * 3, [F(1, 2)] * 2)
        fam = [(F(a), FS.conditionals[f"[({a},b0)]"]) for a in A.labels]
        for r in continuity_modulus(fam):
            assert r.w2 == pytest.approx(r.gap, abs=1e-12)

    def test_counterexample(self):
        ce = build_counterexample(64)
        assert ce.limit_w2_squared == F(1, 12)
        y, m = ce.family[-2]
        assert y == F(62, 63)
        sq = w2_squared(m, ce.family[-1][1])
        # mean of (k/63)^2 for k = 1..32: distances from 31/63 to the top grid cell
        assert sq == sum(F(k, 63) ** 2 for k in range(1, 33)) / 32
        assert float(sq) >= 0.05
        assert abs(float(sq) - 1 / 12) <= 0.02

    def test_counterexample_diracs(self):
        ce = build_counterexample(16)
        for (y, a), (y2, b) in [(ce.family[1], ce.family[5]), (ce.family[0], ce.family[14])]:
            assert w2_squared(a, b) == ((y - y2) / 2) ** 2

    def test_counterexample_small_grid(self):
        with pytest.raises(InvalidParameter):
            build_counterexample(3)

    def test_riemann_sum_oracle(self):
        # midpoint rule for the integral of 2 (x - 1/2)^2 over [1/2, 1]
        n = 10_000
        h = 0.5 / n
        total = sum(2 * (0.5 + (i + 0.5) * h - 0.5) ** 2 * h for i in range(n))
        assert total == pytest.approx(1 / 12, abs=1e-9)


class TestBijective:
    X = FiniteMetricSpace.discrete(["a", "b", "c"])

    def test_identity(self):
        rep = check_bijective_dirac(PointMap.identity(self.X), DiscreteMeasure.uniform(self.X))
        assert rep.passed
        assert rep.conditionals["b"] == DiscreteMeasure.dirac(self.X, "b")

    @given(st.permutations(["a", "b", "c"]), st.lists(st.integers(1, 9), min_size=3, max_size=3))
    def test_permutations(self, perm, w):
        pi = PointMap(self.X, self.X, perm)
        mu = DiscreteMeasure(self.X, w).normalized()
        rep = check_bijective_dirac(pi, mu)
        assert rep.passed
        for x, y in pi.as_dict().items():
            assert rep.conditionals[y] == DiscreteMeasure.dirac(self.X, x)

    def test_not_bijective(self):
        with pytest.raises(InvalidArgument):
            check_bijective_dirac(PointMap(self.X, self.X, ["a", "a", "b"]), DiscreteMeasure.uniform(self.X))
