"""Constrained selection among candidate slices.

Each slice is judged on three criteria: the aggregate objective f, technical
feasibility tf (the weakest member), and schedule s (total build time plus
the coupling cost of the chosen build order).  Feasible slices are ranked by

    z = w_f * norm(f) + w_tf * tf - w_s * norm(makespan + order_cost)

where norm() rescales a criterion to [0, 1] over the feasible pool and a
constant criterion maps to 1/2.  Alongside the argmax the full Pareto front
over (f, tf, -makespan) is reported, so a caller can see what the scalar
weights traded away.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .metrics import coupling_matrix, size_of
from .rational import to_fraction
from .slicing import Slice, SliceMetrics, slice_objective

EXHAUSTIVE_LIMIT = 8


class ConfigError(ValueError):
    """Malformed optimization config."""


class ManifestError(ValueError):
    """Malformed capability manifest."""


@dataclass(frozen=True)
class TechFeasibility:
    """Per-node technical feasibility in [0, 1]; unlisted nodes default."""

    per_node: Mapping[str, Fraction] = field(default_factory=dict)
    default: Fraction = Fraction(1)

    def value_for(self, node_id: str) -> Fraction:
        return self.per_node.get(node_id, self.default)


def slice_feasibility(slc: Slice, tf: TechFeasibility) -> Fraction:
    """A slice is only as feasible as its least feasible member."""
    return min(tf.value_for(m) for m in slc.members)


@dataclass(frozen=True)
class ScheduleModel:
    per_node_time: Mapping[str, Fraction]
    order: tuple[str, ...]
    makespan: Fraction
    order_cost: Fraction
    method: str  # "exhaustive" or "greedy"


def _int_costs(
    members: Sequence[str], coupling: Mapping[tuple[str, str], Fraction]
) -> tuple[dict[tuple[str, str], int], int]:
    # Rescale pair couplings to integers over a common denominator so the
    # permutation search adds machine ints instead of Fractions.
    pairs = [(p, q) for p in members for q in members if p != q]
    if not pairs:
        return {}, 1
    denom = math.lcm(*(coupling[pq].denominator for pq in pairs))
    return {pq: coupling[pq].numerator * (denom // coupling[pq].denominator) for pq in pairs}, denom


def _exhaustive_order(
    members: Sequence[str], cost: Mapping[tuple[str, str], int]
) -> tuple[tuple[str, ...], int]:
    members = sorted(members)
    best_order: list[str] | None = None
    best_cost: int | None = None
    order: list[str] = []
    used: set[str] = set()

    def walk(prefix_cost: int) -> None:
        nonlocal best_order, best_cost
        # costs are nonnegative, so a prefix at or past the best is dead;
        # ">=" also discards later ties, keeping the first (lex) minimizer
        if best_cost is not None and prefix_cost >= best_cost:
            return
        if len(order) == len(members):
            best_order = list(order)
            best_cost = prefix_cost
            return
        for c in members:
            if c in used:
                continue
            added = sum(cost[(p, c)] for p in order)
            used.add(c)
            order.append(c)
            walk(prefix_cost + added)
            order.pop()
            used.discard(c)

    walk(0)
    assert best_order is not None
    return tuple(best_order), best_cost or 0


def _greedy_order(
    members: Sequence[str], cost: Mapping[tuple[str, str], int]
) -> tuple[tuple[str, ...], int]:
    remaining = sorted(members)
    order: list[str] = []
    total = 0
    while remaining:
        pick = None
        pick_key = None
        for c in remaining:
            key = sum(cost[(c, r)] for r in remaining if r != c)
            if pick_key is None or key < pick_key:
                pick, pick_key = c, key
        total += sum(cost[(p, pick)] for p in order)
        order.append(pick)
        remaining.remove(pick)
    return tuple(order), total


def schedule_slice(graph, slc: Slice, times=None, coupling=None) -> ScheduleModel:
    """Sequential build schedule for a slice.

    Build time per member defaults to its size; the build order minimizes
    the summed coupling from earlier members onto later ones, exactly for up
    to EXHAUSTIVE_LIMIT members and greedily beyond that.
    """
    per: dict[str, Fraction] = {}
    for m in slc.members:
        t = None
        if times is not None and m in times:
            t = to_fraction(times[m])
        if t is None:
            t = Fraction(size_of(graph, m))
        if t <= 0:
            raise ValueError(f"build time for {m!r} must be positive")
        per[m] = t

    if coupling is None and len(slc.members) > 1:
        coupling = coupling_matrix(graph, slc.members, slc.membership)
    cost, denom = _int_costs(slc.members, coupling or {})

    if len(slc.members) <= EXHAUSTIVE_LIMIT:
        order, raw = _exhaustive_order(slc.members, cost)
        method = "exhaustive"
    else:
        order, raw = _greedy_order(slc.members, cost)
        method = "greedy"

    return ScheduleModel(
        per_node_time=per,
        order=order,
        makespan=sum(per.values(), Fraction(0)),
        order_cost=Fraction(raw, denom),
        method=method,
    )


# -- configuration -----------------------------------------------------------

_CONFIG_KEYS = {"tf_min", "sched_max", "f_min", "lambda", "weights", "tf", "times"}


@dataclass(frozen=True)
class OptimizationConfig:
    tf_min: Fraction = Fraction(0)
    sched_max: Fraction | None = None
    f_min: Fraction | None = None
    lam: Fraction = Fraction(1)
    weights: tuple[Fraction, Fraction, Fraction] = (
        Fraction(1, 2),
        Fraction(3, 10),
        Fraction(1, 5),
    )
    tf_values: Mapping[str, Fraction] = field(default_factory=dict)
    tf_default: Fraction = Fraction(1)
    times: Mapping[str, Fraction] | None = None

    @classmethod
    def from_dict(cls, doc: Mapping) -> "OptimizationConfig":
        unknown = set(doc) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        kwargs: dict = {}
        if "tf_min" in doc:
            kwargs["tf_min"] = to_fraction(doc["tf_min"])
        if "sched_max" in doc and doc["sched_max"] is not None:
            kwargs["sched_max"] = to_fraction(doc["sched_max"])
        if "f_min" in doc and doc["f_min"] is not None:
            kwargs["f_min"] = to_fraction(doc["f_min"])
        if "lambda" in doc:
            kwargs["lam"] = to_fraction(doc["lambda"])
        if "weights" in doc:
            w = doc["weights"]
            if not isinstance(w, Mapping) or set(w) != {"f", "tf", "sched"}:
                raise ConfigError("weights must map exactly f, tf and sched")
            triple = tuple(to_fraction(w[k]) for k in ("f", "tf", "sched"))
            if any(x < 0 for x in triple):
                raise ConfigError("weights must be nonnegative")
            total = sum(triple, Fraction(0))
            if total == 0:
                raise ConfigError("weights must not all be zero")
            kwargs["weights"] = tuple(x / total for x in triple)
        if "tf" in doc:
            t = dict(doc["tf"])
            if "default" in t:
                kwargs["tf_default"] = to_fraction(t.pop("default"))
            kwargs["tf_values"] = {k: to_fraction(v) for k, v in t.items()}
        if "times" in doc and doc["times"] is not None:
            kwargs["times"] = {k: to_fraction(v) for k, v in dict(doc["times"]).items()}
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path: str) -> "OptimizationConfig":
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
        try:
            doc = json.loads(text, parse_float=to_fraction)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid config JSON: {exc.msg} (line {exc.lineno})") from exc
        if not isinstance(doc, Mapping):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(doc)

    def tech_feasibility(self) -> TechFeasibility:
        return TechFeasibility(dict(self.tf_values), self.tf_default)


# -- scoring -------------------------------------------------------------------


@dataclass(frozen=True)
class Normalizers:
    f_lo: Fraction
    f_hi: Fraction
    s_lo: Fraction
    s_hi: Fraction


def _norm(x: Fraction, lo: Fraction, hi: Fraction) -> Fraction:
    if lo == hi:
        return Fraction(1, 2)
    return (x - lo) / (hi - lo)


def objective_z(
    f: Fraction,
    tf: Fraction,
    schedule: ScheduleModel,
    config: OptimizationConfig,
    norm: Normalizers,
) -> Fraction:
    w_f, w_tf, w_s = config.weights
    s = schedule.makespan + schedule.order_cost
    return w_f * _norm(f, norm.f_lo, norm.f_hi) + w_tf * tf - w_s * _norm(s, norm.s_lo, norm.s_hi)


@dataclass(frozen=True)
class SliceScore:
    slice: Slice
    metrics: SliceMetrics
    f: Fraction
    tf: Fraction
    schedule: ScheduleModel
    z: Fraction | None = None
    violated: tuple[str, ...] = ()


@dataclass(frozen=True)
class OptimizationResult:
    best: SliceScore | None
    feasible: tuple[SliceScore, ...]
    pareto: tuple[SliceScore, ...]
    infeasible: tuple[SliceScore, ...]


def _dominates(a: SliceScore, b: SliceScore) -> bool:
    ge = (
        a.f >= b.f
        and a.tf >= b.tf
        and a.schedule.makespan <= b.schedule.makespan
    )
    strict = a.f > b.f or a.tf > b.tf or a.schedule.makespan < b.schedule.makespan
    return ge and strict


def pareto_front(scores: Iterable[SliceScore]) -> tuple[SliceScore, ...]:
    """Nondominated entries under maximize(f, tf, -makespan).

    Maintains a running front: each candidate is dropped if something on the
    front dominates it, otherwise it evicts whatever it dominates.
    """
    front: list[SliceScore] = []
    for s in scores:
        if any(_dominates(f, s) for f in front):
            continue
        front = [f for f in front if not _dominates(s, f)]
        front.append(s)
    return tuple(sorted(front, key=lambda s: s.slice.members))


def optimize(
    graph,
    slices: Sequence[Slice],
    config: OptimizationConfig | None = None,
    tf: TechFeasibility | None = None,
    times: Mapping[str, Fraction] | None = None,
    metrics: Sequence[SliceMetrics] | None = None,
) -> OptimizationResult:
    """Score candidate slices, split by constraints, rank the feasible ones.

    No feasible candidate is an empty result, not an error: best is None and
    every entry sits in infeasible with the constraints it broke.
    """
    config = config or OptimizationConfig()
    tf = tf or config.tech_feasibility()
    times = times if times is not None else config.times
    if metrics is None:
        metrics = [slice_objective(graph, s, config.lam) for s in slices]
    elif len(metrics) != len(slices):
        raise ValueError("metrics and slices must align")

    scored: list[SliceScore] = []
    for s, m in zip(slices, metrics):
        tf_val = slice_feasibility(s, tf)
        sched = schedule_slice(graph, s, times=times, coupling=m.coupling)
        violated = []
        if tf_val < config.tf_min:
            violated.append("tf")
        if config.sched_max is not None and sched.makespan > config.sched_max:
            violated.append("sched")
        if config.f_min is not None and m.aggregate < config.f_min:
            violated.append("f")
        scored.append(
            SliceScore(s, m, m.aggregate, tf_val, sched, violated=tuple(violated))
        )

    feasible = [s for s in scored if not s.violated]
    infeasible = tuple(
        sorted((s for s in scored if s.violated), key=lambda s: s.slice.members)
    )
    if not feasible:
        return OptimizationResult(None, (), (), infeasible)

    norm = Normalizers(
        f_lo=min(s.f for s in feasible),
        f_hi=max(s.f for s in feasible),
        s_lo=min(s.schedule.makespan + s.schedule.order_cost for s in feasible),
        s_hi=max(s.schedule.makespan + s.schedule.order_cost for s in feasible),
    )
    feasible = [
        replace(s, z=objective_z(s.f, s.tf, s.schedule, config, norm)) for s in feasible
    ]
    feasible.sort(key=lambda s: (-s.z, s.slice.members))
    best = feasible[0]
    front = pareto_front(sorted(feasible, key=lambda s: s.slice.members))
    return OptimizationResult(best, tuple(feasible), front, infeasible)


# -- manifest ------------------------------------------------------------------


def export_capabilities(
    graph,
    slc: Slice,
    *,
    lam: Fraction = Fraction(1),
    tf: TechFeasibility | None = None,
    times: Mapping[str, Fraction] | None = None,
) -> dict:
    """Implementation-ready manifest for one slice.

    Each capability lists its owned directives with relevance through the
    winning entry parent, its coupling to and from every other capability,
    and its position in the suggested build order.
    """
    from .graph import impact_category
    from .metrics import parent_routes

    metrics = slice_objective(graph, slc, lam)
    tf = tf or TechFeasibility()
    sched = schedule_slice(graph, slc, times=times, coupling=metrics.coupling)
    position = {m: i for i, m in enumerate(sched.order)}

    capabilities = []
    for m in slc.members:
        owned = slc.owned(m)
        directives = []
        for d in owned:
            routes = sorted(parent_routes(graph, m, d))
            rel = max(graph.relevance(d, p) for p in routes)
            via = min(p for p in routes if graph.relevance(d, p) == rel)
            directives.append(
                {
                    "id": d,
                    "label": graph.node(d).label,
                    "relevance": float(rel),
                    "category": impact_category(rel),
                    "via_parent": via,
                }
            )
        capabilities.append(
            {
                "id": m,
                "label": graph.node(m).label,
                "cohesion": float(metrics.per_node_cohesion[m]),
                "tf": float(tf.value_for(m)),
                "build_time": float(sched.per_node_time[m]),
                "position": position[m],
                "directives": directives,
                "coupling_out": {
                    q: float(metrics.coupling[(m, q)]) for q in slc.members if q != m
                },
                "coupling_in": {
                    q: float(metrics.coupling[(q, m)]) for q in slc.members if q != m
                },
            }
        )

    return {
        "kind": "capability-manifest",
        "members": list(slc.members),
        "aggregate": float(metrics.aggregate),
        "mean_cohesion": float(metrics.mean_cohesion),
        "mean_coupling": float(metrics.mean_coupling),
        "lambda": float(lam),
        "order": list(sched.order),
        "makespan": float(sched.makespan),
        "order_cost": float(sched.order_cost),
        "schedule_method": sched.method,
        "directive_count": sum(len(c["directives"]) for c in capabilities),
        "capabilities": capabilities,
    }


def validate_manifest(doc: Mapping) -> None:
    """Structural completeness check for a manifest; raises ManifestError."""
    problems: list[str] = []
    required = {
        "kind",
        "members",
        "aggregate",
        "mean_cohesion",
        "mean_coupling",
        "lambda",
        "order",
        "makespan",
        "order_cost",
        "schedule_method",
        "directive_count",
        "capabilities",
    }
    missing = required - set(doc)
    if missing:
        raise ManifestError(f"missing manifest keys: {', '.join(sorted(missing))}")
    if doc["kind"] != "capability-manifest":
        problems.append(f"unexpected kind {doc['kind']!r}")

    members = list(doc["members"])
    if not members:
        problems.append("empty member list")
    if members != sorted(set(members)):
        problems.append("members must be sorted and unique")
    if sorted(doc["order"]) != sorted(members):
        problems.append("order is not a permutation of members")

    caps = {c.get("id"): c for c in doc["capabilities"]}
    if sorted(caps) != sorted(members):
        problems.append("capability entries do not match members")
    seen: set[str] = set()
    total = 0
    for m in members:
        cap = caps.get(m)
        if cap is None:
            continue
        order = list(doc["order"])
        if m in order and cap.get("position") != order.index(m):
            problems.append(f"position of {m} disagrees with order")
        ds = [d["id"] for d in cap.get("directives", [])]
        if not ds:
            problems.append(f"capability {m} lists no directives")
        dup = seen & set(ds)
        if dup:
            problems.append(f"directives assigned twice: {', '.join(sorted(dup))}")
        seen |= set(ds)
        total += len(ds)
        others = {q for q in members if q != m}
        for key in ("coupling_out", "coupling_in"):
            if set(cap.get(key, {})) != others:
                problems.append(f"{key} of {m} does not cover the other members")
    if total != doc["directive_count"]:
        problems.append("directive_count disagrees with capability contents")

    if problems:
        raise ManifestError("; ".join(problems))
