"""Command dispatch: run one named operation on a loaded bundle and report the result."""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from typing import Any, Callable

from otdisint.bundle import (
    ProblemBundle,
    bundle_to_json,
    fmt,
    kernel_to_json,
    lambda_to_json,
    measure_to_json,
    plan_to_json,
    weights_to_json,
)
from otdisint.disintegration import disintegrate, reassemble
from otdisint.errors import InvalidArgument
from otdisint.foliation import (
    FoliatedSpace,
    build_counterexample,
    check_metric_foliation,
    check_mmf,
    continuity_modulus,
)
from otdisint.interpolation import check_constant_speed, dyadic_interpolation, glue, w2_squared
from otdisint.metric_space import EuclideanCloud
from otdisint.solver import CostMatrix, solve_kantorovich, transport_cost, verify_plan, w1_dual, wasserstein
from otdisint.transport_class import class_distance, class_of, equivalent_by_disintegration, solve_mk_in_class

COMMANDS = (
    "solve",
    "wasserstein",
    "dual",
    "disintegrate",
    "reassemble",
    "class",
    "mk-class",
    "glue",
    "interpolate",
    "foliation-check",
    "counterexample",
)


class UnknownCommand(Exception):
    exit_code = 64


@dataclass
class RunReport:
    command: str
    inputs_digest: str
    outputs: dict[str, Any]
    checks: dict[str, bool] = field(default_factory=dict)
    timing: float = 0.0
    extras: dict[str, Any] = field(default_factory=dict, repr=False)

    def to_json(self, timing: bool = False) -> dict:
        out = {"command": self.command, "inputs_digest": self.inputs_digest, "outputs": self.outputs, "checks": self.checks}
        if timing:
            out["timing"] = self.timing
        return out

    def dumps(self) -> str:
        """Deterministic JSON text (sorted keys, no timing)."""
        return json.dumps(self.to_json(), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def inputs_digest(bundle: ProblemBundle, command: str, args: dict) -> str:
    doc = {"bundle": bundle_to_json(bundle), "command": command, "args": args}
    text = json.dumps(doc, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _p(args) -> int | float:
    p = args.get("p", 2)
    return int(p) if float(p).is_integer() else float(p)


def _cost_for(bundle, args, rows, cols, p):
    name = args.get("cost")
    if name is not None:
        return bundle.get("costs", name)
    return CostMatrix.from_metric(rows, cols, p)


def _solve(bundle, args, cfg):
    mu, nu = bundle.get("measures", args["mu"]), bundle.get("measures", args["nu"])
    p = _p(args)
    c = _cost_for(bundle, args, mu.space, nu.space, p)
    rep = solve_kantorovich(mu, nu, c)
    check = verify_plan(rep.plan, mu, nu)
    out = {
        "plan": plan_to_json(rep.plan),
        "cost": rep.cost,
        "cost_exact": fmt(rep.cost_exact),
        "iterations": rep.iterations,
        "status": rep.status,
    }
    return out, {"marginals_exact": check.ok}


def _wasserstein(bundle, args, cfg):
    mu, nu = bundle.get("measures", args["mu"]), bundle.get("measures", args["nu"])
    p = _p(args)
    return {"w": wasserstein(mu, nu, p), "p": p, "cost_exact": fmt(transport_cost(mu, nu, p))}, {}


def _dual(bundle, args, cfg):
    mu, nu = bundle.get("measures", args["mu"]), bundle.get("measures", args["nu"])
    d = w1_dual(mu, nu)
    out = {
        "phi": d.phi,
        "phi_exact": {k: fmt(v) for k, v in d.phi_exact.items()},
        "dual": d.value,
        "primal": d.primal,
        "lipschitz_violation": d.lipschitz_violation,
    }
    tol = cfg["tol"]
    return out, {"strong_duality": abs(d.primal - d.value) <= tol, "lipschitz": d.lipschitz_violation <= tol}


def _disintegrate(bundle, args, cfg):
    plan = bundle.get("plans", args["plan"])
    axis = args.get("axis", "first")
    marginal, f = disintegrate(plan, axis)
    rebuilt = reassemble(marginal, f, axis)
    out = {
        "axis": axis,
        "marginal": measure_to_json(marginal),
        "conditionals": {x: weights_to_json(m) for x, m in f.conditionals.items()},
    }
    return out, {"roundtrip_exact": rebuilt == plan}


def _reassemble(bundle, args, cfg):
    mu = bundle.get("measures", args["mu"])
    f = bundle.get("kernels", args["map"])
    axis = args.get("axis", "first")
    plan = reassemble(mu, f, axis)
    marg = plan.first_marginal if axis == "first" else plan.second_marginal
    return {"plan": plan_to_json(plan)}, {"marginal_exact": marg == mu}


def _class(bundle, args, cfg):
    a, b = bundle.get("plans", args["plan_a"]), bundle.get("plans", args["plan_b"])
    eq = equivalent_by_disintegration(a, b)
    la, lb = class_of(a), class_of(b)
    out = {
        "equivalent": eq,
        "lambda_a": lambda_to_json(la),
        "lambda_b": lambda_to_json(lb),
        "class_distance": class_distance(la, lb),
    }
    return out, {}


def _mk_class(bundle, args, cfg):
    mu = bundle.get("measures", args["mu"])
    L = bundle.get("lambdas", args["lambda"])
    c = _cost_for(bundle, args, mu.space, L.space, _p(args))
    res = solve_mk_in_class(c, mu, L, search_cap=int(cfg["search_cap"]))
    out = {
        "map": kernel_to_json(res.f, "target")["conditionals"],
        "cost": res.cost,
        "cost_exact": fmt(res.cost_exact),
        "relaxation_bound": res.relaxation_bound,
        "relaxation_exact": fmt(res.relaxation_exact),
        "nodes": res.nodes,
    }
    return out, {"bound_below_cost": res.relaxation_exact <= res.cost_exact}


def _glue(bundle, args, cfg):
    g12, g23 = bundle.get("plans", args["plan_a"]), bundle.get("plans", args["plan_b"])
    g = glue(g12, g23)
    L = [s.labels for s in g.spaces]
    entries = [
        {"x": L[0][i], "y": L[1][j], "z": L[2][k], "mass": fmt(w)} for (i, j, k), w in sorted(g.mass.items())
    ]
    checks = {"marginal_12": g.marginal(0, 1) == g12, "marginal_23": g.marginal(1, 2) == g23}
    return {"mass": entries, "total_mass": fmt(g.total_mass)}, checks


def _interpolate(bundle, args, cfg):
    mu0, mu1 = bundle.get("measures", args["mu0"]), bundle.get("measures", args["mu1"])
    for m in (mu0, mu1):
        if not isinstance(m.space, EuclideanCloud):
            raise InvalidArgument("interpolation endpoints must live on point clouds")
    path = dyadic_interpolation(mu0, mu1, int(args.get("depth", 2)), depth_cap=int(cfg["depth_cap"]))
    frames = []
    for i, m in enumerate(path.measures):
        frames.append({
            "t": path.time_label(i),
            "measure": {"points": [[fmt(c) for c in m.space.point(l)] for l in m.support],
                        "weights": [fmt(m[l]) for l in m.support]},
        })
    out = {
        "frames": frames,
        "trajectories": [{"path": [[fmt(c) for c in p] for p in pts], "weight": fmt(w)} for pts, w in path.trajectories],
        "w2_squared": fmt(w2_squared(mu0, mu1)),
    }
    checks = {}
    if args.get("check"):
        rep = check_constant_speed(path, tol=cfg["tol"])
        out["check"] = {
            "passed": rep.passed,
            "w2_total": rep.w2_total,
            "max_speed_deviation": rep.max_speed_deviation,
            "max_additivity_deviation": rep.max_additivity_deviation,
        }
        checks["constant_speed"] = rep.passed
    out["_path"] = path
    return out, checks


def _foliation(bundle, args, cfg):
    space = bundle.get("spaces", args["space"])
    Q = bundle.get("partitions", args["partition"])
    mu = bundle.get("measures", args["measure"])
    if Q.base != space or mu.space != space:
        raise InvalidArgument("space, partition and measure disagree on the base space")
    tol = cfg["tol"]
    mf = check_metric_foliation(Q, tol=max(tol, 1e-12))
    mmf = check_mmf(FoliatedSpace(mu, Q), tol=tol)
    out = {
        "metric_foliation": {
            "pass": mf.passed,
            "violations": [
                {"x": x, "fibre": a, "other": b, "point_distance": dx, "fibre_distance": dff} for x, a, b, dx, dff in mf.violations
            ],
        },
        "mmf": {"pass": mmf.passed, "max_deviation": mmf.max_deviation},
        "pairs": mmf.pairs,
    }
    return out, {"metric_foliation": mf.passed, "mmf": mmf.passed}


def _counterexample(bundle, args, cfg):
    ce = build_counterexample(int(args.get("n", 64)))
    rows = continuity_modulus(ce.family)
    near, top = ce.family[-2], ce.family[-1]
    sq = w2_squared(near[1], top[1])
    out = {
        "n": len(ce.grid),
        "limit_w2_squared": fmt(ce.limit_w2_squared),
        "y_nearest_one": fmt(near[0]),
        "w2_squared_nearest_one": float(sq),
        "w2_squared_nearest_one_exact": fmt(sq),
        "modulus": [{"y": r.y, "y2": r.y2, "gap": r.gap, "w2": r.w2} for r in rows],
    }
    return out, {"bounded_away_from_zero": float(sq) >= 0.05}


_DISPATCH: dict[str, Callable] = {
    "solve": _solve,
    "wasserstein": _wasserstein,
    "dual": _dual,
    "disintegrate": _disintegrate,
    "reassemble": _reassemble,
    "class": _class,
    "mk-class": _mk_class,
    "glue": _glue,
    "interpolate": _interpolate,
    "foliation-check": _foliation,
    "counterexample": _counterexample,
}


def run_command(bundle: ProblemBundle, command: str, args: dict | None = None) -> RunReport:
    """Run ``command`` with ``args`` naming entities of ``bundle``.

    Raises the module errors unchanged (their ``exit_code`` gives the CLI
    status) and :class:`UnknownCommand` for anything outside :data:`COMMANDS`.
    """
    if command not in _DISPATCH:
        raise UnknownCommand(f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}")
    args = dict(args or {})
    digest = inputs_digest(bundle, command, args)
    start = time.perf_counter()
    outputs, checks = _DISPATCH[command](bundle, args, bundle.config)
    extra = {k: outputs.pop(k) for k in [k for k in outputs if k.startswith("_")]}
    return RunReport(command, digest, outputs, checks, time.perf_counter() - start, extra)
