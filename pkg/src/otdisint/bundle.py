"""JSON / CSV schemas and the problem bundle loader.

A bundle file is a JSON object with any of the sections ``spaces``,
``measures``, ``plans``, ``partitions``, ``maps``, ``kernels``, ``lambdas``,
``costs`` and ``config``, each mapping names to entities. A file holding a
single entity is also accepted; it is named after the file stem and its kind
is inferred from its keys. Entities refer to spaces by name or embed them.

Masses are written as ``"p/q"`` strings. JSON numbers are accepted and read
as the exact rational value of the binary float.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from otdisint.disintegration import DisintegrationMap
from otdisint.errors import LoadError, OTError
from otdisint.measures import DiscreteMeasure, MeasureOverMeasures, PointMap, to_fraction
from otdisint.metric_space import EuclideanCloud, FiniteMetricSpace, QuotientSpace
from otdisint.solver import CostMatrix, TransportPlan

SECTIONS = ("spaces", "measures", "plans", "partitions", "maps", "kernels", "lambdas", "costs")

DEFAULT_CONFIG = {"tol": 1e-9, "seed": 0, "depth_cap": 6, "search_cap": 12}


@dataclass
class ProblemBundle:
    spaces: dict[str, FiniteMetricSpace] = field(default_factory=dict)
    measures: dict[str, DiscreteMeasure] = field(default_factory=dict)
    plans: dict[str, TransportPlan] = field(default_factory=dict)
    partitions: dict[str, QuotientSpace] = field(default_factory=dict)
    maps: dict[str, PointMap] = field(default_factory=dict)
    kernels: dict[str, DisintegrationMap] = field(default_factory=dict)
    lambdas: dict[str, MeasureOverMeasures] = field(default_factory=dict)
    costs: dict[str, CostMatrix] = field(default_factory=dict)
    config: dict[str, Any] = field(default_factory=lambda: dict(DEFAULT_CONFIG))

    def get(self, section: str, name: str):
        table = getattr(self, section)
        if name not in table:
            raise LoadError(f"no {section[:-1]} named {name!r}")
        return table[name]


def fmt(q) -> str:
    return str(to_fraction(q))


# ---- space ----------------------------------------------------------------


def space_from_json(obj) -> FiniteMetricSpace:
    if isinstance(obj, list):
        return FiniteMetricSpace.discrete([str(l) for l in obj])
    if "points" in obj:
        return EuclideanCloud([[to_fraction(c) for c in p] for p in obj["points"]], obj.get("labels"))
    if "dist" not in obj:
        return FiniteMetricSpace.discrete([str(l) for l in obj["labels"]])
    return FiniteMetricSpace(obj["labels"], [[float(v) for v in row] for row in obj["dist"]])


def space_to_json(space: FiniteMetricSpace) -> dict:
    if isinstance(space, EuclideanCloud):
        out = {"points": [[fmt(c) for c in p] for p in space.points]}
        if list(space.labels) != [",".join(str(c) for c in p) for p in space.points]:
            out["labels"] = list(space.labels)
        return out
    return {"labels": list(space.labels), "dist": space.dist.tolist()}


# ---- measures -------------------------------------------------------------


def _weights_from_json(obj, space):
    if isinstance(obj, dict):
        return {str(k): to_fraction(v) for k, v in obj.items()}
    return [to_fraction(v) for v in obj]


def measure_from_json(obj, resolve) -> DiscreteMeasure:
    space = resolve(obj["space"])
    return DiscreteMeasure(space, _weights_from_json(obj["weights"], space))


def weights_to_json(m: DiscreteMeasure) -> dict:
    return {l: fmt(w) for l, w in m.as_dict().items()}


def measure_to_json(m: DiscreteMeasure, space_ref=None) -> dict:
    return {"space": space_ref if space_ref is not None else space_to_json(m.space), "weights": weights_to_json(m)}


# ---- plans ----------------------------------------------------------------


class _At(Exception):
    """An error located below the entity's own JSON pointer."""

    def __init__(self, sub: str, message: str):
        super().__init__(message)
        self.sub = sub


def plan_from_json(obj, resolve) -> TransportPlan:
    mass = [[to_fraction(v) for v in r] for r in obj["mass"]]
    for i, r in enumerate(mass):
        for j, v in enumerate(r):
            if v < 0:
                raise _At(f"/mass/{i}/{j}", f"negative mass {obj['mass'][i][j]!r}")
    return TransportPlan(resolve(obj["rows"]), resolve(obj["cols"]), mass)


def plan_to_json(plan: TransportPlan, rows_ref=None, cols_ref=None) -> dict:
    return {
        "rows": rows_ref if rows_ref is not None else space_to_json(plan.rows),
        "cols": cols_ref if cols_ref is not None else space_to_json(plan.cols),
        "mass": [[fmt(v) for v in r] for r in plan.mass],
    }


# ---- partitions, maps, kernels, lambdas, costs -------------------------------


def partition_from_json(obj, resolve) -> QuotientSpace:
    return QuotientSpace(resolve(obj["space"]), obj["classes"])


def partition_to_json(Q: QuotientSpace, space_ref=None) -> dict:
    return {"space": space_ref if space_ref is not None else space_to_json(Q.base), "classes": [list(c) for c in Q.classes]}


def map_from_json(obj, resolve) -> PointMap:
    return PointMap(resolve(obj["source"]), resolve(obj["target"]), obj["assign"])


def map_to_json(T: PointMap, source_ref=None, target_ref=None) -> dict:
    return {
        "source": source_ref if source_ref is not None else space_to_json(T.source),
        "target": target_ref if target_ref is not None else space_to_json(T.target),
        "assign": T.as_dict(),
    }


def kernel_from_json(obj, resolve) -> DisintegrationMap:
    target = resolve(obj["target"])
    index = obj["index"]
    index = resolve(index) if isinstance(index, (str, dict)) else [str(l) for l in index]
    conds = {str(x): DiscreteMeasure(target, _weights_from_json(w, target)) for x, w in obj["conditionals"].items()}
    return DisintegrationMap(index, target, conds, probability=obj.get("probability", True))


def kernel_to_json(f: DisintegrationMap, target_ref=None) -> dict:
    out = {
        "index": list(f.index),
        "target": target_ref if target_ref is not None else space_to_json(f.target),
        "conditionals": {x: weights_to_json(m) for x, m in f.conditionals.items()},
    }
    if not f.probability:
        out["probability"] = False
    return out


def lambda_from_json(obj, resolve) -> MeasureOverMeasures:
    space = resolve(obj["space"])
    atoms = []
    for a in obj["atoms"]:
        m = a["measure"]
        w = m["weights"] if isinstance(m, dict) and "weights" in m else m
        atoms.append((DiscreteMeasure(space, _weights_from_json(w, space)), to_fraction(a["weight"])))
    return MeasureOverMeasures(atoms)


def lambda_to_json(L: MeasureOverMeasures, space_ref=None) -> dict:
    return {
        "space": space_ref if space_ref is not None else (space_to_json(L.space) if L.space is not None else None),
        "atoms": [{"measure": weights_to_json(m), "weight": fmt(w)} for m, w in L.atoms],
    }


def cost_from_csv(text: str) -> CostMatrix:
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    return CostMatrix([[to_fraction(float(c)) if _is_float(c) else to_fraction(c) for c in r] for r in rows])


def _is_float(s: str) -> bool:
    s = s.strip()
    return "/" not in s and any(ch in s for ch in ".eE") and s.lower() not in ("nan", "inf")


def cost_from_json(obj) -> CostMatrix:
    return CostMatrix([[to_fraction(v) for v in r] for r in (obj["cost"] if isinstance(obj, dict) else obj)])


def cost_to_json(c: CostMatrix) -> list:
    return [[fmt(v) for v in r] for r in c.exact]


# ---- loader ---------------------------------------------------------------

_READERS = {
    "measures": measure_from_json,
    "plans": plan_from_json,
    "partitions": partition_from_json,
    "maps": map_from_json,
    "kernels": kernel_from_json,
    "lambdas": lambda_from_json,
}


def _infer_kind(obj) -> str:
    if isinstance(obj, list):
        return "costs"
    keys = set(obj)
    if keys & set(SECTIONS) or "config" in keys:
        return "bundle"
    for kind, key in (("plans", "mass"), ("lambdas", "atoms"), ("kernels", "conditionals"), ("maps", "assign"),
                      ("partitions", "classes"), ("measures", "weights"), ("costs", "cost")):
        if key in keys:
            return kind
    if "points" in keys or "labels" in keys:
        return "spaces"
    raise LoadError("cannot tell what kind of entity this is")


def load_bundle(paths, config: dict | None = None) -> ProblemBundle:
    """Load and validate every entity in ``paths`` into one bundle.

    ``.csv`` files are dense cost matrices. Errors are raised as
    :class:`LoadError` carrying the file and a JSON pointer.
    """
    bundle = ProblemBundle()
    docs = []
    for p in paths:
        p = Path(p)
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as exc:
            raise LoadError(str(exc), str(p)) from None
        if p.suffix.lower() == ".csv":
            try:
                bundle.costs[p.stem] = cost_from_csv(text)
            except OTError as exc:
                raise LoadError(str(exc), str(p)) from None
            continue
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise LoadError(f"invalid JSON: {exc}", str(p)) from None
        docs.append((str(p), p.stem, obj))
    _load_docs(bundle, docs)
    if config:
        bundle.config.update(config)
    return bundle


def load_bundle_json(obj, name: str = "bundle") -> ProblemBundle:
    bundle = ProblemBundle()
    _load_docs(bundle, [(None, name, obj)])
    return bundle


def _sections(file, stem, obj):
    try:
        kind = _infer_kind(obj)
    except LoadError as exc:
        raise LoadError(str(exc), file) from None
    if kind == "bundle":
        for sec in SECTIONS:
            for name, ent in (obj.get(sec) or {}).items():
                yield sec, name, ent, f"/{sec}/{_escape(name)}"
        if "config" in obj:
            yield "config", "config", obj["config"], "/config"
    else:
        yield kind, stem, obj, ""


def _escape(name: str) -> str:
    return name.replace("~", "~0").replace("/", "~1")


def _load_docs(bundle: ProblemBundle, docs):
    entries = [(file, *e) for file, stem, obj in docs for e in _sections(file, stem, obj)]

    def guarded(file, pointer, fn):
        try:
            return fn()
        except LoadError:
            raise
        except _At as exc:
            raise LoadError(str(exc), file, pointer + exc.sub) from None
        except OTError as exc:
            raise LoadError(str(exc), file, pointer) from None
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise LoadError(f"malformed entity ({type(exc).__name__}: {exc})", file, pointer) from None

    for file, sec, name, ent, ptr in entries:
        if sec == "spaces":
            bundle.spaces[name] = guarded(file, ptr, lambda: space_from_json(ent))
        elif sec == "config":
            bundle.config.update(ent)

    def resolver(file, ptr):
        def resolve(ref):
            if isinstance(ref, str):
                if ref not in bundle.spaces:
                    raise LoadError(f"unknown space {ref!r}", file, ptr)
                return bundle.spaces[ref]
            return space_from_json(ref)

        return resolve

    for file, sec, name, ent, ptr in entries:
        if sec in _READERS:
            reader = _READERS[sec]
            getattr(bundle, sec)[name] = guarded(file, ptr, lambda: reader(ent, resolver(file, ptr)))
        elif sec == "costs":
            bundle.costs[name] = guarded(file, ptr, lambda: cost_from_json(ent))


def bundle_to_json(bundle: ProblemBundle) -> dict:
    """Serialise a bundle; spaces that are named in the bundle are referenced by name."""

    def ref(space):
        for name, s in bundle.spaces.items():
            if s == space:
                return name
        return None

    out: dict[str, Any] = {"spaces": {n: space_to_json(s) for n, s in bundle.spaces.items()}}
    out["measures"] = {n: measure_to_json(m, ref(m.space)) for n, m in bundle.measures.items()}
    out["plans"] = {n: plan_to_json(p, ref(p.rows), ref(p.cols)) for n, p in bundle.plans.items()}
    out["partitions"] = {n: partition_to_json(q, ref(q.base)) for n, q in bundle.partitions.items()}
    out["maps"] = {n: map_to_json(t, ref(t.source), ref(t.target)) for n, t in bundle.maps.items()}
    out["kernels"] = {n: kernel_to_json(f, ref(f.target)) for n, f in bundle.kernels.items()}
    out["lambdas"] = {n: lambda_to_json(L, ref(L.space)) for n, L in bundle.lambdas.items()}
    out["costs"] = {n: cost_to_json(c) for n, c in bundle.costs.items()}
    out["config"] = dict(bundle.config)
    return out
