"""Node embedding, relation-aware Transformer encoder, pointer decoder.

The encoder is a standard post-norm Transformer whose attention scores and
value sums both receive learned per-edge-label vectors: for nodes i, j the
raw score is (Wq x_i) . (Wk x_j + edge_key[label(i, j)]) and the mixed value
adds edge_value[label(i, j)], edge tables shared across heads but unique per
layer. The decoder points at column/row nodes to emit an answer selection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Rng, Tensor
from .errors import ConfigError, InvalidExampleError, ShapeError
from .graph import (
    ANSWER_FLAG_INDEX,
    AnnotatedGraph,
    KIND_INDEX,
    NodeKind,
    num_edge_labels,
)
from .tables import AnswerSelection
from .text import Vocabulary

_QUESTION_SIDE = (NodeKind.TOKEN, NodeKind.QNUMBER, NodeKind.QUESTION)


@dataclass
class ModelConfig:
    """Architecture hyperparameters; the feed-forward width is fixed at 4x."""

    num_layers: int = 4
    d_model: int = 128
    heads: int = 8
    dropout_p: float = 0.2
    rel_pos_clip: int = 6
    indicator_dim: int = 16
    max_decode_len: Optional[int] = None
    max_rows: int = 256
    max_columns: int = 64
    max_rank: int = 256

    def __post_init__(self) -> None:
        if self.d_model % self.heads != 0:
            raise ConfigError(f"d_model {self.d_model} not divisible by heads {self.heads}")
        if not 0 < self.indicator_dim < self.d_model:
            raise ConfigError(f"indicator_dim {self.indicator_dim} must be in (0, d_model)")
        if self.rel_pos_clip < 1:
            raise ConfigError("rel_pos_clip must be >= 1")

    @property
    def d_ff(self) -> int:
        return 4 * self.d_model

    @property
    def d_head(self) -> int:
        return self.d_model // self.heads

    @property
    def d_embed(self) -> int:
        return self.d_model - self.indicator_dim

    @property
    def n_edge_labels(self) -> int:
        return num_edge_labels(self.rel_pos_clip)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        return cls(**data)


# Candidate layout for the decoder's output distribution.
EOS_SYMBOL = 0
SEP_SYMBOL = 1
FIRST_NODE_SYMBOL = 2

_FEATURE_FAMILIES = (
    "kind", "word", "column_index", "row_index",
    "alignment_bin", "rank", "inverse_rank", "answer_flag",
)


def init_parameters(config: ModelConfig, vocab: Vocabulary, seed: int = 0, dtype=None) -> dict[str, Tensor]:
    """Named parameter tensors; deterministic for a given seed."""
    rng = Rng(seed)
    dtype = dtype or ad.default_dtype()
    d, de, dh = config.d_model, config.d_embed, config.d_head
    rows = {
        "kind": len(NodeKind.ALL),
        "word": vocab.total_ids,
        "column_index": config.max_columns,
        "row_index": config.max_rows,
        "alignment_bin": 5,
        "rank": config.max_rank,
        "inverse_rank": config.max_rank,
        "answer_flag": len(ANSWER_FLAG_INDEX),
    }
    params: dict[str, Tensor] = {}

    def param(name: str, data: np.ndarray) -> None:
        params[name] = Tensor(data.astype(dtype), requires_grad=True)

    for family in _FEATURE_FAMILIES:
        param(f"embed/{family}", ad.embedding_init(rng, rows[family], de))
    param("embed/indicator", ad.embedding_init(rng, 2, config.indicator_dim))

    for i in range(config.num_layers):
        for w in ("Wq", "Wk", "Wv", "Wo"):
            param(f"enc{i}/attn/{w}", ad.xavier_uniform(rng, d, d))
        param(f"enc{i}/attn/edge_key", ad.embedding_init(rng, config.n_edge_labels, dh))
        param(f"enc{i}/attn/edge_value", ad.embedding_init(rng, config.n_edge_labels, dh))
        param(f"enc{i}/ln1/gain", np.ones(d))
        param(f"enc{i}/ln1/bias", np.zeros(d))
        param(f"enc{i}/ffn/W1", ad.xavier_uniform(rng, d, config.d_ff))
        param(f"enc{i}/ffn/b1", np.zeros(config.d_ff))
        param(f"enc{i}/ffn/W2", ad.xavier_uniform(rng, config.d_ff, d))
        param(f"enc{i}/ffn/b2", np.zeros(d))
        param(f"enc{i}/ln2/gain", np.ones(d))
        param(f"enc{i}/ln2/bias", np.zeros(d))

    param("dec/h0", np.zeros((1, d)))
    param("dec/Wz", ad.xavier_uniform(rng, 2 * d, d))
    param("dec/bz", np.zeros(d))
    param("dec/Wh", ad.xavier_uniform(rng, 2 * d, d))
    param("dec/bh", np.zeros(d))
    param("dec/ln/gain", np.ones(d))
    param("dec/ln/bias", np.zeros(d))
    param("dec/pointer_proj", ad.xavier_uniform(rng, d, d))
    param("dec/w_eos", ad.xavier_uniform(rng, d, 1).reshape(d))
    param("dec/w_sep", ad.xavier_uniform(rng, d, 1).reshape(d))
    param("dec/embed_eos", ad.embedding_init(rng, 1, d))
    param("dec/embed_sep", ad.embedding_init(rng, 1, d))
    return params


@dataclass
class GraphTensors:
    """Index arrays precomputed from one graph, reusable across steps.

    Each feature family contributes a flat id vector plus a (n_nodes, n_ids)
    averaging matrix whose row i holds 1/total_feature_count(i) at the slots
    of node i's features, so the per-node feature mean is a single matmul.
    """

    n_nodes: int
    family_ids: dict[str, np.ndarray]
    family_weights: dict[str, np.ndarray]
    indicator_ids: np.ndarray
    labels: np.ndarray
    column_nodes: np.ndarray
    row_nodes: np.ndarray
    question_node: int
    pointable: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.pointable = np.concatenate([self.column_nodes, self.row_nodes])

    @property
    def n_columns(self) -> int:
        return len(self.column_nodes)

    @property
    def n_rows(self) -> int:
        return len(self.row_nodes)


def tensorize(graph: AnnotatedGraph, config: ModelConfig, dtype=None) -> GraphTensors:
    if graph.rel_pos_clip != config.rel_pos_clip:
        raise ConfigError(
            f"graph clip {graph.rel_pos_clip} != model clip {config.rel_pos_clip}"
        )
    dtype = dtype or ad.default_dtype()
    n = graph.n_nodes
    counts = np.array([node.feature_count() for node in graph.nodes], dtype=np.float64)

    per_family: dict[str, list[tuple[int, int]]] = {f: [] for f in _FEATURE_FAMILIES}
    for i, node in enumerate(graph.nodes):
        per_family["kind"].append((i, KIND_INDEX[node.kind]))
        for w in node.words:
            per_family["word"].append((i, w))
        if node.column_index is not None:
            per_family["column_index"].append((i, min(node.column_index, config.max_columns - 1)))
        for r in node.row_indexes:
            per_family["row_index"].append((i, min(r, config.max_rows - 1)))
        if node.alignment_bin is not None:
            per_family["alignment_bin"].append((i, node.alignment_bin - 1))
        if node.rank is not None:
            per_family["rank"].append((i, min(node.rank - 1, config.max_rank - 1)))
        if node.inverse_rank is not None:
            per_family["inverse_rank"].append((i, min(node.inverse_rank - 1, config.max_rank - 1)))
        for flag in sorted(node.answer_flags):
            per_family["answer_flag"].append((i, ANSWER_FLAG_INDEX[flag]))

    family_ids: dict[str, np.ndarray] = {}
    family_weights: dict[str, np.ndarray] = {}
    for family, entries in per_family.items():
        if not entries:
            continue
        ids = np.array([e[1] for e in entries], dtype=np.int64)
        weights = np.zeros((n, len(entries)), dtype=dtype)
        for slot, (node_index, _) in enumerate(entries):
            weights[node_index, slot] = 1.0 / counts[node_index]
        family_ids[family] = ids
        family_weights[family] = weights

    indicator = np.array(
        [1 if node.kind in _QUESTION_SIDE else 0 for node in graph.nodes], dtype=np.int64
    )
    return GraphTensors(
        n_nodes=n,
        family_ids=family_ids,
        family_weights=family_weights,
        indicator_ids=indicator,
        labels=graph.edge_labels.astype(np.int64),
        column_nodes=np.array(graph.column_nodes, dtype=np.int64),
        row_nodes=np.array(graph.row_nodes, dtype=np.int64),
        question_node=graph.question_node,
    )


def embed_nodes(gt: GraphTensors, params: dict[str, Tensor]) -> Tensor:
    """Mean of feature embeddings per node, plus the question-side indicator."""
    total: Optional[Tensor] = None
    for family in _FEATURE_FAMILIES:
        if family not in gt.family_ids:
            continue
        table = params[f"embed/{family}"]
        ids = gt.family_ids[family]
        if ids.max(initial=-1) >= table.shape[0]:
            raise ConfigError(f"feature id out of range for embedding family {family!r}")
        gathered = ad.gather(table, ids)
        weighted = ad.matmul(Tensor(gt.family_weights[family]), gathered)
        total = weighted if total is None else ad.add(total, weighted)
    indicator = ad.gather(params["embed/indicator"], gt.indicator_ids)
    return ad.concat([total, indicator], axis=-1)


def encode(
    gt: GraphTensors,
    params: dict[str, Tensor],
    config: ModelConfig,
    train_mode: bool = False,
    rng: Optional[Rng] = None,
    trace: Optional[dict] = None,
) -> Tensor:
    """Contextual node matrix (n_nodes, d_model) after all encoder layers."""
    if gt.labels.shape != (gt.n_nodes, gt.n_nodes):
        raise ShapeError(
            f"edge label matrix {gt.labels.shape} does not match {gt.n_nodes} nodes"
        )
    x = embed_nodes(gt, params)
    p = config.dropout_p
    inv_sqrt = 1.0 / math.sqrt(config.d_head)

    for layer in range(config.num_layers):
        prefix = f"enc{layer}"
        q_all = ad.matmul(x, params[f"{prefix}/attn/Wq"])
        k_all = ad.matmul(x, params[f"{prefix}/attn/Wk"])
        v_all = ad.matmul(x, params[f"{prefix}/attn/Wv"])
        edge_k = ad.gather(params[f"{prefix}/attn/edge_key"], gt.labels)
        edge_v = ad.gather(params[f"{prefix}/attn/edge_value"], gt.labels)

        head_outputs = []
        for h in range(config.heads):
            lo, hi = h * config.d_head, (h + 1) * config.d_head
            q = ad.slice_last(q_all, lo, hi)
            k = ad.slice_last(k_all, lo, hi)
            v = ad.slice_last(v_all, lo, hi)
            scores = ad.add(ad.matmul(q, ad.transpose(k)), ad.edge_score(q, edge_k))
            attn = ad.softmax(ad.scale(scores, inv_sqrt))
            if trace is not None:
                trace.setdefault("scores", []).append(
                    (layer, h, (scores.data * inv_sqrt).copy())
                )
            attn = ad.dropout(attn, p, train_mode, rng)
            head_outputs.append(ad.add(ad.matmul(attn, v), ad.edge_mix(attn, edge_v)))

        combined = ad.matmul(ad.concat(head_outputs, axis=-1), params[f"{prefix}/attn/Wo"])
        combined = ad.dropout(combined, p, train_mode, rng)
        x = ad.layer_norm(ad.add(x, combined), params[f"{prefix}/ln1/gain"], params[f"{prefix}/ln1/bias"])

        hidden = ad.relu(ad.add(ad.matmul(x, params[f"{prefix}/ffn/W1"]), params[f"{prefix}/ffn/b1"]))
        ff = ad.add(ad.matmul(hidden, params[f"{prefix}/ffn/W2"]), params[f"{prefix}/ffn/b2"])
        ff = ad.dropout(ff, p, train_mode, rng)
        x = ad.layer_norm(ad.add(x, ff), params[f"{prefix}/ln2/gain"], params[f"{prefix}/ln2/bias"])
    return x


def _decoder_step(h: Tensor, u: Tensor, params: dict[str, Tensor]) -> Tensor:
    """One gated recurrence update followed by layer norm."""
    cat = ad.concat([h, u], axis=-1)
    z = ad.sigmoid(ad.add(ad.matmul(cat, params["dec/Wz"]), params["dec/bz"]))
    candidate = ad.tanh(ad.add(ad.matmul(cat, params["dec/Wh"]), params["dec/bh"]))
    one_minus_z = ad.add_const(ad.scale(z, -1.0), 1.0)
    mixed = ad.add(ad.multiply(one_minus_z, h), ad.multiply(z, candidate))
    return ad.layer_norm(mixed, params["dec/ln/gain"], params["dec/ln/bias"])


def _candidate_logits(h: Tensor, projected: Tensor, params: dict[str, Tensor]) -> Tensor:
    """Logits [EOS, SEP, pointable nodes...] for the current decoder state."""
    d = h.shape[-1]
    node_logits = ad.reshape(ad.matmul(projected, ad.transpose(h)), (projected.shape[0],))
    eos = ad.reshape(ad.matmul(h, ad.reshape(params["dec/w_eos"], (d, 1))), (1,))
    sep = ad.reshape(ad.matmul(h, ad.reshape(params["dec/w_sep"], (d, 1))), (1,))
    return ad.concat([eos, sep, node_logits], axis=0)


def linearize_target(target: AnswerSelection, gt: GraphTensors) -> list[int]:
    """Target symbol sequence: columns ascending, SEP, rows ascending, EOS."""
    if not target.columns or not target.rows:
        raise InvalidExampleError("target selection needs at least one column and one row")
    symbols = [FIRST_NODE_SYMBOL + c for c in sorted(target.columns)]
    symbols.append(SEP_SYMBOL)
    symbols += [FIRST_NODE_SYMBOL + gt.n_columns + r for r in sorted(target.rows)]
    symbols.append(EOS_SYMBOL)
    return symbols


def _symbol_input(symbol: int, encoded: Tensor, gt: GraphTensors, params: dict[str, Tensor]) -> Tensor:
    if symbol == SEP_SYMBOL:
        return params["dec/embed_sep"]
    if symbol == EOS_SYMBOL:
        return params["dec/embed_eos"]
    node = int(gt.pointable[symbol - FIRST_NODE_SYMBOL])
    return ad.gather(encoded, np.array([node]))


def decode_training_loss(
    encoded: Tensor,
    gt: GraphTensors,
    target: AnswerSelection,
    params: dict[str, Tensor],
) -> Tensor:
    """Teacher-forced mean cross-entropy over the linearized target."""
    symbols = linearize_target(target, gt)
    projected = ad.matmul(ad.gather(encoded, gt.pointable), params["dec/pointer_proj"])
    h = params["dec/h0"]
    u = ad.gather(encoded, np.array([gt.question_node]))
    total: Optional[Tensor] = None
    for symbol in symbols:
        h = _decoder_step(h, u, params)
        step_loss = ad.cross_entropy(_candidate_logits(h, projected, params), symbol)
        total = step_loss if total is None else ad.add(total, step_loss)
        if symbol != EOS_SYMBOL:
            u = _symbol_input(symbol, encoded, gt, params)
    return ad.scale(total, 1.0 / len(symbols))


def decode_greedy(
    encoded: Tensor,
    gt: GraphTensors,
    params: dict[str, Tensor],
    config: ModelConfig,
) -> AnswerSelection:
    """Greedy pointer decoding with phase masks.

    Phase 1 chooses columns until SEP, phase 2 rows until EOS; selected nodes
    are masked out and an empty phase forces its best-scoring candidate, so
    the result always has at least one column and one row.
    """
    n_cols, n_rows = gt.n_columns, gt.n_rows
    budget = config.max_decode_len or (2 + n_rows + n_cols)
    cols: list[int] = []
    rows: list[int] = []

    with ad.no_grad():
        projected = ad.matmul(ad.gather(encoded, gt.pointable), params["dec/pointer_proj"])
        h = params["dec/h0"]
        u = ad.gather(encoded, np.array([gt.question_node]))
        phase = 1
        for _ in range(budget):
            h = _decoder_step(h, u, params)
            logits = _candidate_logits(h, projected, params).data.copy()
            col_logits = logits[FIRST_NODE_SYMBOL:FIRST_NODE_SYMBOL + n_cols].copy()
            row_logits = logits[FIRST_NODE_SYMBOL + n_cols:].copy()

            if phase == 1:
                logits[EOS_SYMBOL] = -np.inf
                logits[FIRST_NODE_SYMBOL + n_cols:] = -np.inf
                for c in cols:
                    logits[FIRST_NODE_SYMBOL + c] = -np.inf
                pick = int(logits.argmax())
                if pick == SEP_SYMBOL:
                    if not cols:
                        cols.append(int(col_logits.argmax()))
                    phase = 2
                    u = params["dec/embed_sep"]
                else:
                    c = pick - FIRST_NODE_SYMBOL
                    cols.append(c)
                    u = ad.gather(encoded, np.array([int(gt.column_nodes[c])]))
            else:
                logits[SEP_SYMBOL] = -np.inf
                logits[FIRST_NODE_SYMBOL:FIRST_NODE_SYMBOL + n_cols] = -np.inf
                for r in rows:
                    logits[FIRST_NODE_SYMBOL + n_cols + r] = -np.inf
                pick = int(logits.argmax())
                if pick == EOS_SYMBOL:
                    if not rows:
                        rows.append(int(row_logits.argmax()))
                    break
                r = pick - FIRST_NODE_SYMBOL - n_cols
                rows.append(r)
                u = ad.gather(encoded, np.array([int(gt.row_nodes[r])]))

        if not cols:
            cols.append(int(col_logits.argmax()))
        if not rows:
            rows.append(int(row_logits.argmax()))

    return AnswerSelection(columns=tuple(cols), rows=tuple(rows))
