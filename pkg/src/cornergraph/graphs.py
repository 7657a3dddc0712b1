"""Typed heterogeneous traffic scene graphs.

A scene graph has ten actor categories and eight relation categories, both
closed sets.  A directed edge ``(head, relation, tail)`` is admitted only when
the category-level grammar licenses the triple; ``validate_grammar`` reports
every breach as data instead of raising, so callers can decide what to do with
an ill-formed graph.

Conventions used throughout the package:

* node ids are dense ``0..n-1`` and double as indices into ``nodes``;
* ``SelfState`` is the only relation allowed (and required) on a self-edge;
* headings are compass-style: ``0`` points along +y and angles grow toward +x,
  so an actor's forward unit vector is ``(sin h, cos h)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence


class ActorCategory(str, Enum):
    EGO = "Ego"
    CAR = "Car"
    BICYCLE = "Bicycle"
    PEDESTRIAN = "Pedestrian"
    TRAFFIC_LIGHT = "TrafficLight"
    OBJECT = "Object"
    LANE = "Lane"
    PAVEMENT = "Pavement"
    SHOULDER = "Shoulder"
    ROAD = "Road"


class RelationCategory(str, Enum):
    IS_IN = "IsIn"
    SAFE_DISTANCE = "SafeDistance"
    UNSAFE_DISTANCE = "UnsafeDistance"
    IN_FRONT_OF = "InFrontOf"
    AT_REAR_OF = "AtRearOf"
    TO_LEFT_OF = "ToLeftOf"
    TO_RIGHT_OF = "ToRightOf"
    SELF_STATE = "SelfState"


class LightState(str, Enum):
    RED = "Red"
    YELLOW = "Yellow"
    GREEN = "Green"


#: position of each relation in the canonical sort order
RELATION_ORDINAL = {rel: i for i, rel in enumerate(RelationCategory)}

DISTANCE_RELATIONS = (RelationCategory.SAFE_DISTANCE, RelationCategory.UNSAFE_DISTANCE)
QUADRANT_RELATIONS = (
    RelationCategory.IN_FRONT_OF,
    RelationCategory.AT_REAR_OF,
    RelationCategory.TO_LEFT_OF,
    RelationCategory.TO_RIGHT_OF,
)

#: categories that move under their own power (and therefore keep exactly one
#: containment edge and may carry velocity)
DYNAMIC_CATEGORIES = frozenset(
    {
        ActorCategory.EGO,
        ActorCategory.CAR,
        ActorCategory.BICYCLE,
        ActorCategory.PEDESTRIAN,
    }
)

#: categories whose per-actor state is expressed as a SelfState self-edge
SELF_STATE_CATEGORIES = frozenset(
    {
        ActorCategory.EGO,
        ActorCategory.CAR,
        ActorCategory.BICYCLE,
        ActorCategory.PEDESTRIAN,
        ActorCategory.TRAFFIC_LIGHT,
    }
)

#: categories allowed to carry a braking flag
BRAKING_CATEGORIES = frozenset({ActorCategory.EGO, ActorCategory.CAR})

CONTAINMENT_CATEGORIES = (
    ActorCategory.LANE,
    ActorCategory.PAVEMENT,
    ActorCategory.SHOULDER,
)


def _build_licensed_triples() -> frozenset:
    triples = set()
    placeable = (
        ActorCategory.EGO,
        ActorCategory.CAR,
        ActorCategory.BICYCLE,
        ActorCategory.PEDESTRIAN,
        ActorCategory.TRAFFIC_LIGHT,
        ActorCategory.OBJECT,
    )
    for head in placeable:
        for tail in CONTAINMENT_CATEGORIES:
            triples.add((head, RelationCategory.IS_IN, tail))
    for head in CONTAINMENT_CATEGORIES:
        triples.add((head, RelationCategory.IS_IN, ActorCategory.ROAD))
    # the ego tracks its separation from surrounding actors and the road edge
    for tail in (
        ActorCategory.CAR,
        ActorCategory.BICYCLE,
        ActorCategory.PEDESTRIAN,
        ActorCategory.OBJECT,
        ActorCategory.TRAFFIC_LIGHT,
        ActorCategory.SHOULDER,
    ):
        for rel in DISTANCE_RELATIONS:
            triples.add((ActorCategory.EGO, rel, tail))
    # moving adversaries relate back to the ego by separation and bearing
    for head in (ActorCategory.CAR, ActorCategory.BICYCLE, ActorCategory.PEDESTRIAN):
        for rel in DISTANCE_RELATIONS:
            triples.add((head, rel, ActorCategory.EGO))
        for rel in QUADRANT_RELATIONS:
            triples.add((head, rel, ActorCategory.EGO))
    return frozenset(triples)


#: every licensed cross-edge triple (head category, relation, tail category)
LICENSED_TRIPLES = _build_licensed_triples()


def licensed(head: ActorCategory, relation: RelationCategory, tail: ActorCategory) -> bool:
    """True iff the grammar licenses the cross-edge triple.

    ``SelfState`` is never a cross edge; it is licensed separately, on a
    self-edge of a category in ``SELF_STATE_CATEGORIES``.
    """
    if relation is RelationCategory.SELF_STATE:
        return False
    return (head, relation, tail) in LICENSED_TRIPLES


@dataclass(frozen=True)
class AgentState:
    """Kinematic state of a placed actor, in world coordinates (meters, radians).

    Field presence follows the category: only dynamic actors have ``velocity``,
    only Ego/Car have ``braking``, and only traffic lights have ``light_state``.
    ``validate_grammar`` checks those pairings.
    """

    location: tuple[float, float]
    heading: float = 0.0
    velocity: tuple[float, float] | None = None
    braking: bool | None = None
    light_state: LightState | None = None

    @property
    def speed(self) -> float:
        if self.velocity is None:
            return 0.0
        vx, vy = self.velocity
        return float((vx * vx + vy * vy) ** 0.5)


@dataclass(frozen=True)
class Node:
    id: int
    category: ActorCategory
    state: AgentState | None = None


@dataclass(frozen=True)
class Edge:
    head: int
    relation: RelationCategory
    tail: int

    def key(self) -> tuple[int, int, int]:
        return (self.head, self.tail, RELATION_ORDINAL[self.relation])


@dataclass(frozen=True)
class SceneGraph:
    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]
    frame_index: int = 0
    is_corner_case: bool = False

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))

    def node(self, node_id: int) -> Node:
        return self.nodes[node_id]

    def ego_id(self) -> int:
        for n in self.nodes:
            if n.category is ActorCategory.EGO:
                return n.id
        raise ValueError("graph has no Ego node")

    def has_edge(self, head: int, relation: RelationCategory, tail: int) -> bool:
        return any(
            e.head == head and e.tail == tail and e.relation is relation
            for e in self.edges
        )


@dataclass(frozen=True)
class Violation:
    """One structural defect: ``kind`` is "grammar" or "invariant"."""

    kind: str
    rule: str
    edge_index: int | None = None


def _categories_without_outgoing() -> frozenset:
    with_outgoing = {h for (h, _, _) in LICENSED_TRIPLES} | SELF_STATE_CATEGORIES
    return frozenset(set(ActorCategory) - with_outgoing)


_NO_OUTGOING = _categories_without_outgoing()


def _check_state_fields(node: Node, out: list) -> None:
    state = node.state
    if state is None:
        return
    cat = node.category
    if state.velocity is not None and cat not in DYNAMIC_CATEGORIES:
        out.append(Violation("invariant", f"{cat.value} cannot carry velocity"))
    if state.braking is not None and cat not in BRAKING_CATEGORIES:
        out.append(Violation("invariant", f"{cat.value} cannot carry a braking flag"))
    if (state.light_state is not None) != (cat is ActorCategory.TRAFFIC_LIGHT):
        out.append(
            Violation("invariant", f"light state present iff TrafficLight, not {cat.value}")
        )


def validate_grammar(graph: SceneGraph) -> list:
    """Return every grammar breach and structural-invariant breach as a list.

    An empty list means the graph is well formed.  Order: node-level invariants
    first, then per-edge checks in edge order, then containment counting.
    """
    out: list = []
    n = len(graph.nodes)

    ids = [node.id for node in graph.nodes]
    if ids != list(range(n)):
        out.append(Violation("invariant", "node ids must be dense 0..n-1 in order"))
        return out  # edge checks below index by id

    ego_count = sum(1 for node in graph.nodes if node.category is ActorCategory.EGO)
    if ego_count != 1:
        out.append(Violation("invariant", f"exactly one Ego required, found {ego_count}"))

    for node in graph.nodes:
        _check_state_fields(node, out)

    seen = set()
    for idx, edge in enumerate(graph.edges):
        if not (0 <= edge.head < n and 0 <= edge.tail < n):
            out.append(Violation("invariant", "edge endpoint out of range", idx))
            continue
        triple = (edge.head, edge.relation, edge.tail)
        if triple in seen:
            out.append(Violation("invariant", "duplicate edge", idx))
            continue
        seen.add(triple)

        head_cat = graph.nodes[edge.head].category
        tail_cat = graph.nodes[edge.tail].category
        if edge.head == edge.tail:
            if edge.relation is not RelationCategory.SELF_STATE:
                out.append(
                    Violation("grammar", "self-edge must use SelfState", idx)
                )
            elif head_cat not in SELF_STATE_CATEGORIES:
                out.append(
                    Violation("grammar", f"{head_cat.value} has no self state", idx)
                )
            continue
        if edge.relation is RelationCategory.SELF_STATE:
            out.append(Violation("grammar", "SelfState requires head = tail", idx))
            continue
        if not licensed(head_cat, edge.relation, tail_cat):
            if head_cat in _NO_OUTGOING:
                rule = f"{head_cat.value} has no outgoing relations"
            else:
                rule = (
                    f"triple not licensed: {head_cat.value} "
                    f"-{edge.relation.value}-> {tail_cat.value}"
                )
            out.append(Violation("grammar", rule, idx))

    # each dynamic actor sits in exactly one containment element
    for node in graph.nodes:
        if node.category not in DYNAMIC_CATEGORIES:
            continue
        count = sum(
            1
            for e in graph.edges
            if e.head == node.id
            and e.relation is RelationCategory.IS_IN
            and 0 <= e.tail < n
        )
        if count != 1:
            out.append(
                Violation(
                    "invariant",
                    f"{node.category.value} node {node.id} needs exactly one "
                    f"containment edge, found {count}",
                )
            )
    return out


# --- JSON serialization ----------------------------------------------------
#
# The wire layout is strict: unknown object keys are rejected so that version
# skew fails loudly instead of silently dropping data.

class SchemaError(ValueError):
    pass


_STATE_KEYS = {"location", "heading", "velocity", "braking", "light_state"}
_NODE_KEYS = {"id", "category", "state"}
_EDGE_KEYS = {"head", "relation", "tail"}
_GRAPH_KEYS = {"frame", "corner_case", "nodes", "edges"}


def _reject_unknown(obj: dict, allowed: set, where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise SchemaError(f"unknown field(s) {sorted(unknown)} in {where}")


def state_to_json(state: AgentState) -> dict:
    out: dict = {
        "location": [state.location[0], state.location[1]],
        "heading": state.heading,
    }
    if state.velocity is not None:
        out["velocity"] = [state.velocity[0], state.velocity[1]]
    if state.braking is not None:
        out["braking"] = state.braking
    if state.light_state is not None:
        out["light_state"] = state.light_state.value
    return out


def state_from_json(obj: dict) -> AgentState:
    if not isinstance(obj, dict):
        raise SchemaError("state must be an object")
    _reject_unknown(obj, _STATE_KEYS, "state")
    try:
        loc = obj["location"]
        location = (float(loc[0]), float(loc[1]))
    except (KeyError, TypeError, IndexError) as exc:
        raise SchemaError("state.location must be [x, y]") from exc
    velocity = None
    if "velocity" in obj:
        vel = obj["velocity"]
        velocity = (float(vel[0]), float(vel[1]))
    light = None
    if "light_state" in obj:
        try:
            light = LightState(obj["light_state"])
        except ValueError as exc:
            raise SchemaError(f"unknown light state {obj['light_state']!r}") from exc
    return AgentState(
        location=location,
        heading=float(obj.get("heading", 0.0)),
        velocity=velocity,
        braking=bool(obj["braking"]) if "braking" in obj else None,
        light_state=light,
    )


def graph_to_json(graph: SceneGraph) -> dict:
    nodes = []
    for node in graph.nodes:
        entry: dict = {"id": node.id, "category": node.category.value}
        if node.state is not None:
            entry["state"] = state_to_json(node.state)
        nodes.append(entry)
    edges = [
        {"head": e.head, "relation": e.relation.value, "tail": e.tail}
        for e in graph.edges
    ]
    return {
        "frame": graph.frame_index,
        "corner_case": graph.is_corner_case,
        "nodes": nodes,
        "edges": edges,
    }


def graph_from_json(obj: dict) -> SceneGraph:
    if not isinstance(obj, dict):
        raise SchemaError("graph must be an object")
    _reject_unknown(obj, _GRAPH_KEYS, "graph")
    try:
        raw_nodes = obj["nodes"]
        raw_edges = obj["edges"]
    except KeyError as exc:
        raise SchemaError(f"graph missing field {exc.args[0]!r}") from exc
    nodes = []
    for raw in raw_nodes:
        _reject_unknown(raw, _NODE_KEYS, "node")
        try:
            category = ActorCategory(raw["category"])
        except (KeyError, ValueError) as exc:
            raise SchemaError(f"bad node category {raw.get('category')!r}") from exc
        state = state_from_json(raw["state"]) if "state" in raw else None
        nodes.append(Node(id=int(raw["id"]), category=category, state=state))
    edges = []
    for raw in raw_edges:
        _reject_unknown(raw, _EDGE_KEYS, "edge")
        try:
            relation = RelationCategory(raw["relation"])
        except (KeyError, ValueError) as exc:
            raise SchemaError(f"bad relation {raw.get('relation')!r}") from exc
        edges.append(Edge(head=int(raw["head"]), relation=relation, tail=int(raw["tail"])))
    return SceneGraph(
        nodes=tuple(nodes),
        edges=tuple(edges),
        frame_index=int(obj.get("frame", 0)),
        is_corner_case=bool(obj.get("corner_case", False)),
    )


def graph_to_json_str(graph: SceneGraph) -> str:
    return json.dumps(graph_to_json(graph), sort_keys=True)


def graph_from_json_str(text: str) -> SceneGraph:
    return graph_from_json(json.loads(text))


def sort_edges(edges: Iterable[Edge]) -> tuple:
    return tuple(sorted(edges, key=Edge.key))
