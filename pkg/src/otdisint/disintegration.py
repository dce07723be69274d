"""Disintegration of transport plans into conditional families and back."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from otdisint.errors import InvalidArgument, MissingConditional
from otdisint.measures import ZERO, DiscreteMeasure, PointMap
from otdisint.metric_space import FiniteMetricSpace
from otdisint.solver import TransportPlan

FIRST = "first"
SECOND = "second"


class DisintegrationMap:
    """Assignment index point -> conditional measure on ``target``.

    Defined only on ``defined_on``; looking up any other index point raises
    :class:`MissingConditional`. Conditionals are probabilities unless the map
    is built with ``probability=False`` (sub-probability kernels).
    """

    def __init__(
        self,
        index: FiniteMetricSpace | Sequence[str],
        target: FiniteMetricSpace,
        conditionals: Mapping[str, DiscreteMeasure],
        *,
        probability: bool = True,
    ):
        labels = tuple(index.labels if isinstance(index, FiniteMetricSpace) else (str(l) for l in index))
        known = set(labels)
        for x, m in conditionals.items():
            if x not in known:
                raise InvalidArgument(f"conditional given at unknown point {x!r}")
            if m.space != target:
                raise InvalidArgument(f"conditional at {x!r} lives on another space")
            if probability and not m.is_probability:
                raise InvalidArgument(f"conditional at {x!r} has mass {m.total_mass}, expected 1")
        self.index = labels
        self.target = target
        self.probability = probability
        self.conditionals = {x: conditionals[x] for x in labels if x in conditionals}

    @property
    def defined_on(self) -> tuple[str, ...]:
        return tuple(self.conditionals)

    def __getitem__(self, x: str) -> DiscreteMeasure:
        try:
            return self.conditionals[x]
        except KeyError:
            raise MissingConditional(f"no conditional at {x!r}") from None

    def __contains__(self, x):
        return x in self.conditionals

    def __eq__(self, other):
        if not isinstance(other, DisintegrationMap):
            return NotImplemented
        return self.index == other.index and self.target == other.target and self.conditionals == other.conditionals

    def __repr__(self):
        return f"DisintegrationMap({self.conditionals!r})"


def disintegrate(gamma: TransportPlan, axis: str = FIRST) -> tuple[DiscreteMeasure, DisintegrationMap]:
    """Split ``gamma`` into its marginal on ``axis`` and the conditionals given that axis.

    For axis ``"first"`` the conditional at x is row x divided by mu(x); it is
    left undefined where mu(x) = 0. Axis ``"second"`` does the same with columns.
    """
    if axis == SECOND:
        gamma = gamma.transpose()
    elif axis != FIRST:
        raise InvalidArgument(f"axis must be 'first' or 'second', got {axis!r}")
    marginal = gamma.first_marginal
    conds = {}
    for x, w, row in zip(gamma.rows.labels, marginal.weights, gamma.mass):
        if w > 0:
            conds[x] = DiscreteMeasure(gamma.cols, [v / w for v in row])
    return marginal, DisintegrationMap(gamma.rows, gamma.cols, conds)


def reassemble(mu: DiscreteMeasure, f: DisintegrationMap, axis: str = FIRST) -> TransportPlan:
    """The plan mu (x) f with entries mu(x) * f(x)(y).

    With ``axis="second"`` the result is transposed, so it inverts
    ``disintegrate(gamma, "second")``.
    """
    if mu.space.labels != f.index:
        raise InvalidArgument("measure and disintegration map have different index points")
    mass = []
    for x, w in zip(mu.space.labels, mu.weights):
        if w == 0:
            mass.append([ZERO] * len(f.target))
            continue
        if x not in f:
            raise MissingConditional(f"mu has mass {w} at {x!r} where the map is undefined")
        mass.append([w * v for v in f[x].weights])
    plan = TransportPlan(mu.space, f.target, mass)
    if axis == SECOND:
        return plan.transpose()
    if axis != FIRST:
        raise InvalidArgument(f"axis must be 'first' or 'second', got {axis!r}")
    return plan


def dirac_disintegration(T: PointMap, mu: DiscreteMeasure) -> DisintegrationMap:
    """x -> delta_{T(x)} on the support of ``mu``."""
    if mu.space != T.source:
        raise InvalidArgument("measure and map have different source spaces")
    conds = {x: DiscreteMeasure.dirac(T.target, T(x)) for x in mu.support}
    return DisintegrationMap(mu.space, T.target, conds)


@dataclass
class UniquenessReport:
    reassembly_ok: bool
    abs_continuity_ok: bool
    identity_ok: bool
    density: dict[str, Fraction] = field(default_factory=dict)
    reassembly_violation: tuple | None = None
    abs_continuity_violation: str | None = None
    identity_violation: tuple | None = None

    @property
    def passed(self) -> bool:
        return self.reassembly_ok and self.abs_continuity_ok and self.identity_ok

    @property
    def first_failure(self) -> str | None:
        for name, ok in (("reassembly", self.reassembly_ok), ("abs_continuity", self.abs_continuity_ok),
                         ("identity", self.identity_ok)):
            if not ok:
                return name
        return None


def check_uniqueness_abs_continuity(gamma: TransportPlan, nu: DiscreteMeasure, eta: DisintegrationMap) -> UniquenessReport:
    """Check a second factorisation gamma = nu (x) eta against the canonical one.

    ``nu`` is a measure on the row space and ``eta`` a kernel of finite
    (possibly sub-probability) measures on the column space. Three checks run
    independently:

    * reassembly: nu(x) * eta_x(y) == gamma(x, y) for every entry;
    * absolute continuity: on C = {x : eta_x has positive mass}, mu(x) = 0
      forces nu(x) = 0, with mu the first marginal of gamma;
    * identity: (nu|_C / mu)(x) * eta_x == gamma_x wherever mu(x) > 0.

    ``density`` holds nu|_C / mu on the points where mu > 0.
    """
    if nu.space != gamma.rows or eta.target != gamma.cols:
        raise InvalidArgument("nu / eta do not match the plan's spaces")
    mu, canon = disintegrate(gamma)
    zero_row = DiscreteMeasure(gamma.cols, [ZERO] * len(gamma.cols))

    def eta_at(x):
        return eta.conditionals.get(x, zero_row)

    reass_bad = None
    for i, x in enumerate(gamma.rows.labels):
        ex = eta_at(x)
        for j, y in enumerate(gamma.cols.labels):
            if nu.weights[i] * ex.weights[j] != gamma.mass[i][j]:
                reass_bad = (x, y, nu.weights[i] * ex.weights[j], gamma.mass[i][j])
                break
        if reass_bad:
            break

    in_c = {x for x in gamma.rows.labels if eta_at(x).total_mass > 0}
    abs_bad = None
    for x in gamma.rows.labels:
        if x in in_c and mu[x] == 0 and nu[x] != 0:
            abs_bad = x
            break

    density = {}
    ident_bad = None
    for x in gamma.rows.labels:
        if mu[x] == 0:
            continue
        rho = (nu[x] if x in in_c else ZERO) / mu[x]
        density[x] = rho
        lhs = [rho * v for v in eta_at(x).weights]
        rhs = canon[x].weights
        if ident_bad is None and tuple(lhs) != rhs:
            j = next(k for k in range(len(lhs)) if lhs[k] != rhs[k])
            ident_bad = (x, gamma.cols.labels[j], lhs[j], rhs[j])

    return UniquenessReport(
        reassembly_ok=reass_bad is None,
        abs_continuity_ok=abs_bad is None,
        identity_ok=ident_bad is None,
        density=density,
        reassembly_violation=reass_bad,
        abs_continuity_violation=abs_bad,
        identity_violation=ident_bad,
    )
