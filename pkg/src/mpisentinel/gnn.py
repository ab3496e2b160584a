"""Heterogeneous GATv2 classifier over program graphs.

Three attention layers (128, 64, 32) per relation, summed per destination
node type with ELU between layers, elementwise max pooling over all nodes,
and a two-layer fully connected head.  Trained with cross-entropy and Adam.
Relations are the typed edge combinations the program graph produces plus a
self-relation per node type so isolated nodes still update.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, ClassOutOfRange, ShapeMismatch, Tensor, adam_step
from .graph import EdgeType, NodeType, ProgramGraph

__all__ = [
    "GnnConfig", "GnnModel", "RelationParams", "EmptyGraph",
    "MissingRelationParams", "ClassOutOfRange", "ShapeMismatch", "AdamState",
    "adam_step", "gatv2_relation", "hetero_layer", "forward", "logits_batch",
    "cross_entropy", "train", "predict_gnn", "softmax_probabilities",
    "save_checkpoint", "load_checkpoint", "write_loss_log_csv", "RELATIONS",
]


class EmptyGraph(Exception):
    pass


class EmptyDataset(Exception):
    pass


class MissingRelationParams(Exception):
    pass


class InvalidGnnConfig(Exception):
    pass


CONTROL = NodeType.CONTROL.value
VARIABLE = NodeType.VARIABLE.value
CONSTANT = NodeType.CONSTANT.value
NODE_TYPES = (CONTROL, VARIABLE, CONSTANT)

# (source node type, relation name, destination node type); "self" loops are
# added so every node receives at least one message per layer
RELATIONS: tuple[tuple[str, str, str], ...] = (
    (CONTROL, "control", CONTROL),
    (CONTROL, "call", CONTROL),
    (VARIABLE, "data", CONTROL),
    (CONSTANT, "data", CONTROL),
    (CONTROL, "data", VARIABLE),
    (CONTROL, "self", CONTROL),
    (VARIABLE, "self", VARIABLE),
    (CONSTANT, "self", CONSTANT),
)

OOV_TOKEN = "<unk>"


@dataclass
class GnnConfig:
    num_classes: int = 2
    layer_sizes: tuple[int, int, int] = (128, 64, 32)
    node_embed_dim: int = 64
    fc_hidden: int = 16
    leaky_slope: float = 0.2
    heads: int = 1
    lr: float = 4e-4
    epochs: int = 10
    batch_size: int = 32
    rng_seed: int = 0

    def validate(self):
        if len(self.layer_sizes) != 3:
            raise InvalidGnnConfig("exactly three attention layers are supported")
        dims = (*self.layer_sizes, self.node_embed_dim, self.fc_hidden,
                self.num_classes)
        if any(d < 1 for d in dims):
            raise InvalidGnnConfig("all dimensions must be >= 1")
        if self.heads != 1:
            raise InvalidGnnConfig("only single-head attention is supported")


@dataclass
class RelationParams:
    w_att: Tensor   # (out, 2*in) scoring transform
    a: Tensor       # (out, 1) attention vector
    w_val: Tensor   # (out, in) value transform

    def tensors(self):
        return [self.w_att, self.a, self.w_val]


@dataclass
class GnnModel:
    config: GnnConfig
    vocab: dict[str, int]                 # token -> embedding row; row 0 = OOV
    embedding: Tensor
    layers: list[dict[tuple[str, str, str], RelationParams]]
    fc1_w: Tensor
    fc1_b: Tensor
    fc2_w: Tensor
    fc2_b: Tensor
    label_space: list[str] = field(default_factory=list)

    def parameters(self) -> list[Tensor]:
        out = [self.embedding]
        for layer in self.layers:
            for rel in RELATIONS:
                out.extend(layer[rel].tensors())
        out.extend([self.fc1_w, self.fc1_b, self.fc2_w, self.fc2_b])
        return out

    def parameter_items(self) -> list[tuple[str, Tensor]]:
        items = [("embedding", self.embedding)]
        for li, layer in enumerate(self.layers):
            for rel in RELATIONS:
                tag = f"layer{li}.{rel[0]}-{rel[1]}-{rel[2]}"
                p = layer[rel]
                items += [(f"{tag}.w_att", p.w_att), (f"{tag}.a", p.a),
                          (f"{tag}.w_val", p.w_val)]
        items += [("fc1.w", self.fc1_w), ("fc1.b", self.fc1_b),
                  ("fc2.w", self.fc2_w), ("fc2.b", self.fc2_b)]
        return items


def build_vocab(graphs: list[ProgramGraph]) -> dict[str, int]:
    tokens = sorted({n.token for g in graphs for n in g.nodes})
    return {tok: i + 1 for i, tok in enumerate(tokens)}  # row 0 is the OOV bucket


def init_model(cfg: GnnConfig, vocab: dict[str, int],
               label_space: list[str]) -> GnnModel:
    """Xavier-uniform parameters drawn from the seeded generator in a fixed
    order (embedding, then per layer per relation, then the FC head)."""
    cfg.validate()
    if cfg.num_classes != len(label_space):
        raise InvalidGnnConfig("num_classes must match the label space")
    rng = np.random.Generator(np.random.PCG64(cfg.rng_seed))
    emb = Tensor(ad.xavier_uniform(rng, len(vocab) + 1, cfg.node_embed_dim,
                                   (len(vocab) + 1, cfg.node_embed_dim)),
                 requires_grad=True, name="embedding")
    layers = []
    in_dim = cfg.node_embed_dim
    for li, out_dim in enumerate(cfg.layer_sizes):
        layer = {}
        for rel in RELATIONS:
            tag = f"layer{li}.{'-'.join(rel)}"
            layer[rel] = RelationParams(
                w_att=Tensor(ad.xavier_uniform(rng, 2 * in_dim, out_dim,
                                               (out_dim, 2 * in_dim)),
                             requires_grad=True, name=f"{tag}.w_att"),
                a=Tensor(ad.xavier_uniform(rng, out_dim, 1, (out_dim, 1)),
                         requires_grad=True, name=f"{tag}.a"),
                w_val=Tensor(ad.xavier_uniform(rng, in_dim, out_dim,
                                               (out_dim, in_dim)),
                             requires_grad=True, name=f"{tag}.w_val"),
            )
        layers.append(layer)
        in_dim = out_dim
    fc1_w = Tensor(ad.xavier_uniform(rng, in_dim, cfg.fc_hidden,
                                     (in_dim, cfg.fc_hidden)),
                   requires_grad=True, name="fc1.w")
    fc1_b = Tensor(np.zeros(cfg.fc_hidden), requires_grad=True, name="fc1.b")
    fc2_w = Tensor(ad.xavier_uniform(rng, cfg.fc_hidden, cfg.num_classes,
                                     (cfg.fc_hidden, cfg.num_classes)),
                   requires_grad=True, name="fc2.w")
    fc2_b = Tensor(np.zeros(cfg.num_classes), requires_grad=True, name="fc2.b")
    return GnnModel(cfg, dict(vocab), emb, layers, fc1_w, fc1_b, fc2_w, fc2_b,
                    list(label_space))


def gatv2_relation(h_src: Tensor, h_dst: Tensor, edges, params: RelationParams,
                   slope: float = 0.2) -> Tensor:
    """Attention messages for one relation.

    Per edge (i, j): score = a . leaky_relu(W_att [h_i || h_j]); attention is
    the softmax of scores over each destination's incoming edges; the output
    row for j sums attention-weighted value transforms of the sources.
    Destinations without incoming edges output zeros.
    """
    n_dst = h_dst.data.shape[0]
    out_dim = params.w_val.data.shape[0]
    if params.w_att.data.shape[1] != h_src.data.shape[1] + h_dst.data.shape[1]:
        raise ShapeMismatch(
            f"w_att expects width {params.w_att.data.shape[1]}, got "
            f"{h_src.data.shape[1]} + {h_dst.data.shape[1]}")
    if len(edges) == 0:
        return ad.zeros((n_dst, out_dim))
    src_idx = np.array([e[0] for e in edges], dtype=np.int64)
    dst_idx = np.array([e[1] for e in edges], dtype=np.int64)
    hs = ad.gather_rows(h_src, src_idx)
    hd = ad.gather_rows(h_dst, dst_idx)
    pair = ad.concat([hs, hd], axis=1)
    scores = ad.matmul(ad.leaky_relu(ad.matmul(pair, _t(params.w_att)), slope),
                       params.a)                         # (E, 1)
    # softmax per destination; the shift is a constant so gradients are exact
    shift = np.full(n_dst, -np.inf)
    np.maximum.at(shift, dst_idx, scores.data.ravel())
    shifted = ad.add(scores, Tensor(-shift[dst_idx][:, None]))
    expd = ad.exp(shifted)
    denom = ad.segment_sum(expd, dst_idx, n_dst)          # (n_dst, 1)
    alpha = ad.div(expd, ad.gather_rows(denom, dst_idx))  # (E, 1)
    values = ad.matmul(hs, _t(params.w_val))              # (E, out)
    return ad.segment_sum(ad.mul(values, alpha), dst_idx, n_dst)


def _t(p: Tensor) -> Tensor:
    """Transposed view of a parameter that accumulates into the original."""
    out = Tensor(p.data.T, parents=(p,))

    def backward(g):
        if p.requires_grad:
            p.accumulate(g.T)
    out._backward = backward
    return out


def hetero_layer(features: dict[str, Tensor],
                 rel_edges: dict[tuple[str, str, str], tuple[np.ndarray, np.ndarray]],
                 layer_params: dict[tuple[str, str, str], RelationParams],
                 slope: float = 0.2) -> dict[str, Tensor]:
    """One heterogeneous round: sum relation messages per destination type,
    then ELU."""
    for rel in rel_edges:
        if rel not in layer_params:
            raise MissingRelationParams(f"no parameters for relation {rel}")
    out_dim = next(iter(layer_params.values())).w_val.data.shape[0]
    accum: dict[str, Tensor] = {}
    for rel, params in layer_params.items():
        src_t, _, dst_t = rel
        if src_t not in features or dst_t not in features:
            continue
        edges = rel_edges.get(rel, ())
        if len(edges) == 0:
            continue  # a relation without edges contributes only zeros
        msg = gatv2_relation(features[src_t], features[dst_t], edges, params, slope)
        accum[dst_t] = ad.add(accum[dst_t], msg) if dst_t in accum else msg
    out: dict[str, Tensor] = {}
    for t, feats in features.items():
        pre = accum.get(t)
        if pre is None:
            pre = ad.zeros((feats.data.shape[0], out_dim))
        out[t] = ad.elu(pre)
    return out


@dataclass
class _Batch:
    token_rows: dict[str, np.ndarray]
    graph_ids: dict[str, np.ndarray]
    rel_edges: dict[tuple[str, str, str], list[tuple[int, int]]]
    n_graphs: int


def _build_batch(graphs: list[ProgramGraph], vocab: dict[str, int]) -> _Batch:
    token_rows = {t: [] for t in NODE_TYPES}
    graph_ids = {t: [] for t in NODE_TYPES}
    rel_edges: dict[tuple[str, str, str], list[tuple[int, int]]] = {
        rel: [] for rel in RELATIONS}
    for gi, g in enumerate(graphs):
        if not g.nodes:
            raise EmptyGraph(f"graph {gi} has no nodes")
        local: dict[int, tuple[str, int]] = {}
        for node in g.nodes:
            t = node.node_type.value
            local[node.id] = (t, len(token_rows[t]))
            token_rows[t].append(vocab.get(node.token, 0))
            graph_ids[t].append(gi)
        for node in g.nodes:
            t, li = local[node.id]
            rel_edges[(t, "self", t)].append((li, li))
        for e in g.edges:
            st, si = local[e.src]
            dt, di = local[e.dst]
            rel = (st, e.edge_type.value, dt)
            if rel not in rel_edges:
                raise MissingRelationParams(
                    f"edge type {e.edge_type.value} connecting {st}->{dt} "
                    f"has no relation")
            rel_edges[rel].append((si, di))
    return _Batch(
        {t: np.array(v, dtype=np.int64) for t, v in token_rows.items()},
        {t: np.array(v, dtype=np.int64) for t, v in graph_ids.items()},
        rel_edges, len(graphs))


def logits_batch(model: GnnModel, graphs: list[ProgramGraph]) -> Tensor:
    """Forward pass over a disjoint-union batch; returns (n_graphs, C) logits."""
    cfg = model.config
    batch = _build_batch(graphs, model.vocab)
    feats = {t: ad.gather_rows(model.embedding, batch.token_rows[t])
             for t in NODE_TYPES}
    for layer in model.layers:
        feats = hetero_layer(feats, batch.rel_edges, layer, cfg.leaky_slope)
    pooled_parts = []
    seg_parts = []
    for t in NODE_TYPES:
        if feats[t].data.shape[0]:
            pooled_parts.append(feats[t])
            seg_parts.append(batch.graph_ids[t])
    all_nodes = ad.concat(pooled_parts, axis=0) if len(pooled_parts) > 1 \
        else pooled_parts[0]
    segs = np.concatenate(seg_parts)
    pooled = ad.segment_max(all_nodes, segs, batch.n_graphs)   # (B, 32)
    hidden = ad.relu(ad.add(ad.matmul(pooled, model.fc1_w), model.fc1_b))
    return ad.add(ad.matmul(hidden, model.fc2_w), model.fc2_b)


def forward(model: GnnModel, graph: ProgramGraph) -> np.ndarray:
    """Logits for a single graph."""
    return logits_batch(model, [graph]).data[0]


def cross_entropy(logits, true_class: int) -> float:
    """Stable -log softmax(logits)[true_class] for one sample."""
    z = np.asarray(logits, dtype=np.float64).ravel()
    if not 0 <= true_class < z.shape[0]:
        raise ClassOutOfRange(f"class {true_class} outside [0, {z.shape[0]})")
    shifted = z - z.max()
    return float(np.log(np.exp(shifted).sum()) - shifted[true_class])


def train(model: GnnModel, samples: list[tuple[ProgramGraph, str]],
          cfg: GnnConfig | None = None) -> tuple[GnnModel, list[tuple[int, float]]]:
    """Seeded mini-batch training; returns the model and per-epoch mean loss."""
    cfg = cfg or model.config
    if not samples:
        raise EmptyDataset("no graphs to train on")
    index = {lab: i for i, lab in enumerate(model.label_space)}
    for _, lab in samples:
        if lab not in index:
            raise ClassOutOfRange(f"label {lab!r} not in label space")
    targets = np.array([index[lab] for _, lab in samples])
    graphs = [g for g, _ in samples]
    params = model.parameters()
    state = AdamState()
    rng = np.random.Generator(np.random.PCG64(cfg.rng_seed))
    log: list[tuple[int, float]] = []
    n = len(graphs)
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            rows = perm[start:start + cfg.batch_size]
            logits = logits_batch(model, [graphs[i] for i in rows])
            loss = ad.cross_entropy_logits(logits, targets[rows])
            for p in params:
                p.zero_grad()
            loss.backward()
            adam_step(params, state, cfg.lr)
            total += float(loss.data) * len(rows)
        log.append((epoch, total / n))
    return model, log


class EmptyDataset(Exception):
    pass


def predict_gnn(model: GnnModel, graph: ProgramGraph) -> str:
    z = forward(model, graph)
    return model.label_space[int(np.argmax(z))]  # ties break to earliest label


def softmax_probabilities(model: GnnModel, graph: ProgramGraph) -> dict[str, float]:
    z = forward(model, graph)
    e = np.exp(z - z.max())
    p = e / e.sum()
    return {lab: float(p[i]) for i, lab in enumerate(model.label_space)}


def per_sample_losses(model: GnnModel, samples: list[tuple[ProgramGraph, str]],
                      batched: bool = True) -> np.ndarray:
    """Per-graph cross-entropy, computed batched or one graph at a time."""
    index = {lab: i for i, lab in enumerate(model.label_space)}
    if batched:
        z = logits_batch(model, [g for g, _ in samples]).data
        return np.array([cross_entropy(z[i], index[lab])
                         for i, (_, lab) in enumerate(samples)])
    return np.array([cross_entropy(forward(model, g), index[lab])
                     for g, lab in samples])


# ---------------------------------------------------------------------------
# Checkpoint file

def save_checkpoint(path, model: GnnModel):
    tokens = [None] * len(model.vocab)
    for tok, row in model.vocab.items():
        tokens[row - 1] = tok
    doc = {
        "kind": "gnn",
        "config": asdict(model.config),
        "tokens": tokens,
        "label_space": model.label_space,
        "params": [{"name": name, "shape": list(t.data.shape),
                    "values": t.data.ravel().tolist()}
                   for name, t in model.parameter_items()],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path) -> GnnModel:
    with open(path) as fh:
        doc = json.load(fh)
    cfg_doc = dict(doc["config"])
    cfg_doc["layer_sizes"] = tuple(cfg_doc["layer_sizes"])
    cfg = GnnConfig(**cfg_doc)
    vocab = {tok: i + 1 for i, tok in enumerate(doc["tokens"])}
    model = init_model(cfg, vocab, doc["label_space"])
    by_name = dict(model.parameter_items())
    for entry in doc["params"]:
        t = by_name[entry["name"]]
        data = np.array(entry["values"], dtype=np.float64).reshape(entry["shape"])
        if data.shape != t.data.shape:
            raise ShapeMismatch(f"checkpoint {entry['name']} has shape "
                                f"{data.shape}, expected {t.data.shape}")
        t.data = data
    return model


def write_loss_log_csv(log: list[tuple[int, float]], path):
    with open(path, "w") as fh:
        fh.write("epoch,mean_loss\n")
        for epoch, loss in log:
            fh.write(f"{epoch},{loss:.10f}\n")
