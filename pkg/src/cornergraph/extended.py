"""Candidate cross-edges over a base scene graph, labels, and decoding.

An extended graph pairs a base (regular-frame) graph with every cross-edge the
grammar licenses over its node set.  Labels mark which candidates appear in the
ground-truth corner-case graph; model probabilities attach to the same list,
and decoding turns probabilities back into a graph.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

from .graphs import (
    Edge,
    RELATION_ORDINAL,
    RelationCategory,
    SceneGraph,
    SchemaError,
    graph_from_json,
    graph_to_json,
    licensed,
    validate_grammar,
)


class NodeMismatch(ValueError):
    pass


class MissingPredictions(ValueError):
    pass


@dataclass(frozen=True)
class CandidateEdge:
    head: int
    relation: RelationCategory
    tail: int
    label: int | None = None
    predicted_prob: float | None = None

    def key(self) -> tuple[int, int, int]:
        return (self.head, self.tail, RELATION_ORDINAL[self.relation])


@dataclass(frozen=True)
class ExtendedGraph:
    base: SceneGraph
    candidates: tuple[CandidateEdge, ...]
    target_frame: int
    scenario_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))

    def labels(self) -> list:
        out = []
        for c in self.candidates:
            if c.label is None:
                raise ValueError("candidate has no label")
            out.append(c.label)
        return out

    def probabilities(self) -> list:
        out = []
        for c in self.candidates:
            if c.predicted_prob is None:
                raise MissingPredictions("candidate has no predicted probability")
            out.append(c.predicted_prob)
        return out


def enumerate_candidates(graph: SceneGraph) -> list:
    """Every grammar-licensed cross-edge over the graph's nodes, sorted by
    (head id, tail id, relation ordinal)."""
    out = []
    cats = [node.category for node in graph.nodes]
    for head in range(len(cats)):
        for tail in range(len(cats)):
            if head == tail:
                continue
            for relation in RelationCategory:
                if relation is RelationCategory.SELF_STATE:
                    continue
                if licensed(cats[head], relation, cats[tail]):
                    out.append(CandidateEdge(head=head, relation=relation, tail=tail))
    out.sort(key=CandidateEdge.key)
    return out


def extend(graph: SceneGraph, target_frame: int, scenario_id: str = "") -> ExtendedGraph:
    return ExtendedGraph(
        base=graph,
        candidates=tuple(enumerate_candidates(graph)),
        target_frame=target_frame,
        scenario_id=scenario_id,
    )


def label_candidates(ext: ExtendedGraph, ground_truth: SceneGraph) -> ExtendedGraph:
    """Label each candidate 1 iff it appears in the ground-truth graph.

    The two graphs must describe the same actors: node (id, category) pairs
    must match exactly.
    """
    base_nodes = [(n.id, n.category) for n in ext.base.nodes]
    gt_nodes = [(n.id, n.category) for n in ground_truth.nodes]
    if base_nodes != gt_nodes:
        raise NodeMismatch("base and ground-truth graphs disagree on nodes")
    present = {
        (e.head, e.relation, e.tail)
        for e in ground_truth.edges
        if e.relation is not RelationCategory.SELF_STATE
    }
    labeled = tuple(
        replace(c, label=1 if (c.head, c.relation, c.tail) in present else 0)
        for c in ext.candidates
    )
    return replace(ext, candidates=labeled)


def attach_predictions(ext: ExtendedGraph, probs: Sequence[float]) -> ExtendedGraph:
    if len(probs) != len(ext.candidates):
        raise ValueError(
            f"{len(probs)} probabilities for {len(ext.candidates)} candidates"
        )
    updated = tuple(
        replace(c, predicted_prob=float(p)) for c, p in zip(ext.candidates, probs)
    )
    return replace(ext, candidates=updated)


@dataclass(frozen=True)
class Threshold:
    tau: float = 0.5


@dataclass(frozen=True)
class ConsistentArgmax:
    pass


def _group_key(c: CandidateEdge):
    if c.relation is RelationCategory.IS_IN:
        return ("isin", c.head)
    if c.relation in (RelationCategory.SAFE_DISTANCE, RelationCategory.UNSAFE_DISTANCE):
        return ("distance", c.head, c.tail)
    return ("quadrant", c.head, c.tail)


def decode_prediction(ext: ExtendedGraph, mode=ConsistentArgmax()) -> SceneGraph:
    """Turn candidate probabilities into a predicted corner-case graph.

    Threshold mode keeps every candidate with probability >= tau.  Consistent
    argmax keeps exactly one candidate per mutually exclusive group (an actor's
    containment targets; an ordered pair's two separation relations; an ordered
    pair's four bearing relations), breaking ties toward the lowest
    (head, tail, relation) ordinal; its output always passes validation.
    Self-state edges of the base graph are carried over unchanged.
    """
    probs = ext.probabilities()
    kept: list = []
    if isinstance(mode, Threshold):
        for c, p in zip(ext.candidates, probs):
            if p >= mode.tau:
                kept.append(c)
    elif isinstance(mode, ConsistentArgmax):
        best: dict = {}
        for c, p in zip(ext.candidates, probs):
            key = _group_key(c)
            if key not in best or p > best[key][1]:
                best[key] = (c, p)
        kept = [c for c, _ in best.values()]
    else:
        raise TypeError(f"unknown decode mode {mode!r}")

    edges = [
        e for e in ext.base.edges if e.relation is RelationCategory.SELF_STATE
    ]
    edges.extend(Edge(head=c.head, relation=c.relation, tail=c.tail) for c in kept)
    edges.sort(key=Edge.key)
    return SceneGraph(
        nodes=ext.base.nodes,
        edges=tuple(edges),
        frame_index=ext.target_frame,
        is_corner_case=True,
    )


# --- JSON-lines dataset io -------------------------------------------------

_INSTANCE_KEYS = {"base", "candidates", "scenario_id", "frame"}
_CANDIDATE_KEYS = {"head", "relation", "tail", "label", "predicted_prob"}


def instance_to_json(ext: ExtendedGraph) -> dict:
    candidates = []
    for c in ext.candidates:
        entry: dict = {"head": c.head, "relation": c.relation.value, "tail": c.tail}
        if c.label is not None:
            entry["label"] = c.label
        if c.predicted_prob is not None:
            entry["predicted_prob"] = c.predicted_prob
        candidates.append(entry)
    return {
        "base": graph_to_json(ext.base),
        "candidates": candidates,
        "scenario_id": ext.scenario_id,
        "frame": ext.target_frame,
    }


def instance_from_json(obj: dict) -> ExtendedGraph:
    if not isinstance(obj, dict):
        raise SchemaError("instance must be an object")
    unknown = set(obj) - _INSTANCE_KEYS
    if unknown:
        raise SchemaError(f"unknown field(s) {sorted(unknown)} in instance")
    candidates = []
    for raw in obj["candidates"]:
        unknown = set(raw) - _CANDIDATE_KEYS
        if unknown:
            raise SchemaError(f"unknown field(s) {sorted(unknown)} in candidate")
        candidates.append(
            CandidateEdge(
                head=int(raw["head"]),
                relation=RelationCategory(raw["relation"]),
                tail=int(raw["tail"]),
                label=int(raw["label"]) if "label" in raw else None,
                predicted_prob=(
                    float(raw["predicted_prob"]) if "predicted_prob" in raw else None
                ),
            )
        )
    return ExtendedGraph(
        base=graph_from_json(obj["base"]),
        candidates=tuple(candidates),
        target_frame=int(obj["frame"]),
        scenario_id=str(obj.get("scenario_id", "")),
    )


def write_instances(path, instances: Iterable[ExtendedGraph]) -> None:
    with open(path, "w") as fh:
        for ext in instances:
            fh.write(json.dumps(instance_to_json(ext), sort_keys=True) + "\n")


def read_instances(path) -> list:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(instance_from_json(json.loads(line)))
    return out
