"""Link predictor over extended scene graphs.

Pipeline: per-node and per-edge feature vectors are squeezed to scalars by
small encoder MLPs; two attention layers (with an MLP between) propagate
context over the base graph's edges; each candidate edge is scored by a small
MLP over [head embedding | candidate-relation encoding | tail embedding] and
squashed to a probability.

Message direction: a graph edge (head -> tail) delivers the head's embedding
to the tail, so a node aggregates over its incoming edges.  Every node needs
a self-edge for the self term of the aggregation; nodes without a recorded
state get a synthetic self-loop during graph preparation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import MissingSelfEdge, Tensor
from .extended import ExtendedGraph
from .graphs import (
    ActorCategory,
    LightState,
    Node,
    RELATION_ORDINAL,
    RelationCategory,
    SceneGraph,
)

SPEED_SCALE = 30.0
NODE_FEATURE_SIZE = 11
EDGE_FEATURE_SIZE = 9
FEATURE_LAYOUT_ID = "node[cat10,speed1]-edge[rel7,self1,state1]-v1"
CHECKPOINT_SCHEMA_VERSION = 1

_CATEGORY_INDEX = {cat: i for i, cat in enumerate(ActorCategory)}
_LIGHT_SCALAR = {LightState.RED: 0.0, LightState.YELLOW: 0.5, LightState.GREEN: 1.0}


class SchemaVersionMismatch(ValueError):
    pass


def node_feature_vector(node: Node) -> np.ndarray:
    """10-way category one-hot plus speed normalized to [0, 1]."""
    out = np.zeros(NODE_FEATURE_SIZE)
    out[_CATEGORY_INDEX[node.category]] = 1.0
    if node.state is not None and node.state.velocity is not None:
        out[10] = min(node.state.speed / SPEED_SCALE, 1.0)
    return out


def cross_edge_feature(relation: RelationCategory) -> np.ndarray:
    """7-way relation one-hot; self flag and state scalar stay zero."""
    if relation is RelationCategory.SELF_STATE:
        raise ValueError("SelfState is not a cross relation")
    out = np.zeros(EDGE_FEATURE_SIZE)
    out[RELATION_ORDINAL[relation]] = 1.0
    return out


def self_edge_feature(node: Node) -> np.ndarray:
    """Self flag plus one state scalar: braking flag for vehicles, light phase
    for traffic lights, zero otherwise."""
    out = np.zeros(EDGE_FEATURE_SIZE)
    out[7] = 1.0
    state = node.state
    if state is None:
        return out
    if state.braking is not None:
        out[8] = 1.0 if state.braking else 0.0
    elif state.light_state is not None:
        out[8] = _LIGHT_SCALAR[state.light_state]
    return out


def prepare_attention_graph(graph: SceneGraph):
    """Edge arrays for the attention layers: destination ids, source ids and
    per-edge features, in canonical (dst, src, relation) order.  Nodes lacking
    a self-edge get a synthetic self-loop so the self term is always defined.
    """
    entries = []
    with_self = set()
    for edge in graph.edges:
        if edge.relation is RelationCategory.SELF_STATE:
            with_self.add(edge.head)
            feat = self_edge_feature(graph.nodes[edge.head])
        else:
            feat = cross_edge_feature(edge.relation)
        entries.append((edge.tail, edge.head, RELATION_ORDINAL[edge.relation], feat))
    loop_ord = RELATION_ORDINAL[RelationCategory.SELF_STATE]
    for node in graph.nodes:
        if node.id not in with_self:
            feat = np.zeros(EDGE_FEATURE_SIZE)
            feat[7] = 1.0
            entries.append((node.id, node.id, loop_ord, feat))
    entries.sort(key=lambda e: (e[0], e[1], e[2]))
    dst = np.array([e[0] for e in entries], dtype=np.int64)
    src = np.array([e[1] for e in entries], dtype=np.int64)
    attrs = np.stack([e[3] for e in entries])
    return dst, src, attrs


@dataclass(frozen=True)
class ModelDims:
    """Layer widths; the defaults are the reference configuration."""

    node_features: int = NODE_FEATURE_SIZE
    edge_features: int = EDGE_FEATURE_SIZE
    encoder_hidden: int = 64
    gat1_out: int = 64
    mid_hidden: int = 128
    mid_out: int = 256
    triple_hidden: int = 4

    def to_json(self) -> dict:
        return {
            "node_features": self.node_features,
            "edge_features": self.edge_features,
            "encoder_hidden": self.encoder_hidden,
            "gat1_out": self.gat1_out,
            "mid_hidden": self.mid_hidden,
            "mid_out": self.mid_out,
            "triple_hidden": self.triple_hidden,
        }

    @staticmethod
    def from_json(obj: dict) -> "ModelDims":
        return ModelDims(**{k: int(v) for k, v in obj.items()})


DEFAULT_DIMS = ModelDims()
#: total parameter count of the reference configuration
DEFAULT_PARAM_COUNT = 44188


def _mlp_shapes(n_in: int, n_hidden: int, n_out: int, prefix: str):
    return [
        (f"{prefix}.w1", (n_hidden, n_in)),
        (f"{prefix}.b1", (n_hidden,)),
        (f"{prefix}.w2", (n_out, n_hidden)),
        (f"{prefix}.b2", (n_out,)),
    ]


def _gat_shapes(n_in: int, n_out: int, prefix: str):
    return [
        (f"{prefix}.theta", (n_out, n_in)),
        (f"{prefix}.theta_p", (n_out, 1)),
        (f"{prefix}.att", (3 * n_out,)),
    ]


def parameter_shapes(dims: ModelDims) -> list:
    shapes = []
    shapes += _mlp_shapes(dims.node_features, dims.encoder_hidden, 1, "enc_node")
    shapes += _mlp_shapes(dims.edge_features, dims.encoder_hidden, 1, "enc_edge")
    shapes += _mlp_shapes(dims.edge_features, dims.encoder_hidden, 1, "enc_kg")
    shapes += _gat_shapes(1, dims.gat1_out, "gat1")
    shapes += _mlp_shapes(dims.gat1_out, dims.mid_hidden, dims.mid_out, "mid")
    shapes += _gat_shapes(dims.mid_out, 1, "gat2")
    shapes += _mlp_shapes(3, dims.triple_hidden, 1, "triple")
    return shapes


def expected_param_count(dims: ModelDims) -> int:
    return sum(int(np.prod(shape)) for _, shape in parameter_shapes(dims))


class ModelParams:
    """Named parameter tensors in a fixed order.

    Weights start uniform in +-1/sqrt(fan_in); biases start at zero.  The
    total count is asserted at construction, and the reference configuration
    must come to exactly ``DEFAULT_PARAM_COUNT``.
    """

    def __init__(self, dims: ModelDims, tensors: dict):
        self.dims = dims
        self.tensors = tensors
        total = sum(t.data.size for t in tensors.values())
        expected = expected_param_count(dims)
        if total != expected:
            raise ValueError(f"parameter count {total} != expected {expected}")
        if dims == DEFAULT_DIMS and total != DEFAULT_PARAM_COUNT:
            raise ValueError(
                f"reference configuration must have {DEFAULT_PARAM_COUNT} parameters"
            )

    @classmethod
    def initialize(cls, dims: ModelDims = DEFAULT_DIMS, seed: int = 0) -> "ModelParams":
        rng = np.random.default_rng(seed)
        tensors = {}
        for name, shape in parameter_shapes(dims):
            if name.endswith((".b1", ".b2")):
                data = np.zeros(shape)
            else:
                if len(shape) == 2:
                    fan_in = shape[1]
                else:
                    fan_in = shape[0]
                bound = 1.0 / np.sqrt(fan_in)
                data = rng.uniform(-bound, bound, size=shape)
            tensors[name] = Tensor(data, requires_grad=True)
        return cls(dims, tensors)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def items(self):
        return self.tensors.items()

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.zero_grad()

    def clone(self) -> "ModelParams":
        tensors = {
            name: Tensor(t.data.copy(), requires_grad=True)
            for name, t in self.tensors.items()
        }
        return ModelParams(self.dims, tensors)

    def load_from(self, other: "ModelParams") -> None:
        for name, t in self.tensors.items():
            t.data = other.tensors[name].data.copy()


def _mlp(params: ModelParams, prefix: str, x: Tensor) -> Tensor:
    hidden = ad.elu(ad.linear(x, params[f"{prefix}.w1"], params[f"{prefix}.b1"]))
    return ad.linear(hidden, params[f"{prefix}.w2"], params[f"{prefix}.b2"])


def attend(
    h: Tensor,
    dst: np.ndarray,
    src: np.ndarray,
    p: Tensor,
    theta: Tensor,
    theta_p: Tensor,
    att: Tensor,
) -> Tensor:
    """One attention layer over a fixed edge structure.

    Per edge, a raw score is the attention vector dotted with
    [transformed dst embedding | transformed src embedding | transformed edge
    encoding], passed through a leaky rectifier; scores normalize over each
    destination's incoming edges and weight the source embeddings, which are
    then summed per destination.
    """
    n = h.data.shape[0]
    covered = set(int(d) for d, s in zip(dst, src) if d == s)
    missing = [i for i in range(n) if i not in covered]
    if missing:
        raise MissingSelfEdge(f"nodes {missing} have no self-edge")

    z = ad.linear(h, theta)
    zp = ad.linear(p, theta_p)
    zi = ad.gather_rows(z, dst)
    zj = ad.gather_rows(z, src)
    scores = ad.flatten(ad.linear(ad.hstack([zi, zj, zp]), ad.as_row(att)))
    alpha = ad.grouped_softmax(ad.leaky_relu(scores), dst)
    messages = ad.scale_rows(zj, alpha)
    return ad.segment_sum(messages, dst, n)


def gat_layer(h, edges: Sequence, theta, theta_p, att) -> Tensor:
    """Attention layer over explicit ``(destination, source, encoding)`` edges.

    ``h`` may be a 1-D vector of per-node scalars or an (n, d) matrix; the
    result is (n, out).  Every node must appear in a self-edge.
    """
    if not isinstance(h, Tensor):
        h = Tensor(h)
    if h.data.ndim == 1:
        h = ad.as_column(h)
    theta = theta if isinstance(theta, Tensor) else Tensor(theta)
    theta_p = theta_p if isinstance(theta_p, Tensor) else Tensor(theta_p)
    att = att if isinstance(att, Tensor) else Tensor(att)
    dst = np.array([e[0] for e in edges], dtype=np.int64)
    src = np.array([e[1] for e in edges], dtype=np.int64)
    p = Tensor(np.array([[float(e[2])] for e in edges]))
    return attend(h, dst, src, p, theta, theta_p, att)


def encode(params: ModelParams, ext: ExtendedGraph):
    """Scalar encodings: per-node, per-attention-edge, per-candidate.

    Returns ``(h, p, p_kg)`` with shapes (n,1), (m,1), (q,1); ``p`` aligns
    with ``prepare_attention_graph``'s edge order and ``p_kg`` with the
    candidate order.
    """
    graph = ext.base
    x = Tensor(np.stack([node_feature_vector(node) for node in graph.nodes]))
    dst, src, attrs = prepare_attention_graph(graph)
    kg_attrs = np.stack(
        [cross_edge_feature(c.relation) for c in ext.candidates]
    ) if ext.candidates else np.zeros((0, EDGE_FEATURE_SIZE))
    h = _mlp(params, "enc_node", x)
    p = _mlp(params, "enc_edge", Tensor(attrs))
    p_kg = _mlp(params, "enc_kg", Tensor(kg_attrs))
    return h, p, p_kg


def forward(params: ModelParams, ext: ExtendedGraph) -> Tensor:
    """Probability per candidate, aligned with ``ext.candidates``."""
    graph = ext.base
    dst, src, _ = prepare_attention_graph(graph)
    h, p, p_kg = encode(params, ext)

    h1 = attend(h, dst, src, p, params["gat1.theta"], params["gat1.theta_p"], params["gat1.att"])
    z = ad.elu(_mlp(params, "mid", h1))
    h2 = attend(z, dst, src, p, params["gat2.theta"], params["gat2.theta_p"], params["gat2.att"])

    heads = np.array([c.head for c in ext.candidates], dtype=np.int64)
    tails = np.array([c.tail for c in ext.candidates], dtype=np.int64)
    triple_in = ad.hstack([ad.gather_rows(h2, heads), p_kg, ad.gather_rows(h2, tails)])
    logits = _mlp(params, "triple", triple_in)
    return ad.sigmoid(ad.flatten(logits))


def predict_probs(params: ModelParams, ext: ExtendedGraph) -> np.ndarray:
    """Forward pass without gradient recording."""
    return forward(params, ext).data


# --- checkpoints -----------------------------------------------------------


def checkpoint_to_json(params: ModelParams, extra: dict | None = None) -> dict:
    out = {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "feature_layout_id": FEATURE_LAYOUT_ID,
        "dims": params.dims.to_json(),
        "tensors": {
            name: {"shape": list(t.data.shape), "data": t.data.reshape(-1).tolist()}
            for name, t in params.items()
        },
    }
    if extra:
        out.update(extra)
    return out


def checkpoint_from_json(obj: dict) -> ModelParams:
    version = obj.get("schema_version")
    if version != CHECKPOINT_SCHEMA_VERSION:
        raise SchemaVersionMismatch(
            f"checkpoint schema_version {version!r}, expected {CHECKPOINT_SCHEMA_VERSION}"
        )
    layout = obj.get("feature_layout_id")
    if layout != FEATURE_LAYOUT_ID:
        raise SchemaVersionMismatch(
            f"checkpoint feature layout {layout!r}, expected {FEATURE_LAYOUT_ID}"
        )
    dims = ModelDims.from_json(obj["dims"])
    tensors = {}
    for name, shape in parameter_shapes(dims):
        raw = obj["tensors"][name]
        if tuple(raw["shape"]) != shape:
            raise SchemaVersionMismatch(
                f"tensor {name} has shape {raw['shape']}, expected {list(shape)}"
            )
        data = np.asarray(raw["data"], dtype=np.float64).reshape(shape)
        tensors[name] = Tensor(data, requires_grad=True)
    return ModelParams(dims, tensors)


def save_checkpoint(path, params: ModelParams, extra: dict | None = None) -> None:
    with open(path, "w") as fh:
        json.dump(checkpoint_to_json(params, extra), fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path) -> ModelParams:
    with open(path) as fh:
        return checkpoint_from_json(json.load(fh))
