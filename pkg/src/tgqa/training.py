"""Optimization loop: Adam with warmup/decay schedule, batching, checkpoints.

Training samples question turns with gold previous answers as context
(teacher forcing across turns), so turns are independent given their
conversation's gold history and graphs can be built once and cached.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Rng, Tensor
from .errors import CheckpointError, ConfigError, InvalidExampleError, TrainingError
from .graph import GraphOptions, build_graph
from .network import (
    GraphTensors,
    ModelConfig,
    decode_greedy,
    decode_training_loss,
    encode,
    init_parameters,
    tensorize,
)
from .tables import (
    AnswerSelection,
    Conversation,
    Table,
    answer_texts,
    selection_from_cells,
    selection_to_cells,
)
from .text import Vocabulary, build_vocab, corpus_tokens, normalize_tokenize, parse_numeric_spans, annotate_column_types

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.98
ADAM_EPS = 1e-9


@dataclass
class TrainConfig:
    base_lr: float = 1.0
    warmup_steps: int = 2000
    total_steps: int = 100_000
    batch_size: int = 32
    seed: int = 0
    eval_every: int = 1000
    clip_grad_norm: Optional[float] = 1.0
    early_stop_accuracy: Optional[float] = None
    grid: Optional[dict] = None

    def __post_init__(self) -> None:
        if self.warmup_steps < 1:
            raise ConfigError("warmup_steps must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        return cls(**data)


def lr_at_step(base_lr: float, d_model: int, warmup: int, step: int) -> float:
    """Transformer schedule: linear warmup then inverse-sqrt decay."""
    if step < 1:
        raise TrainingError(f"learning rate undefined for step {step}")
    return base_lr * d_model ** -0.5 * min(step ** -0.5, step * warmup ** -1.5)


class AdamState:
    """First/second moment accumulators plus the shared step counter."""

    def __init__(self, params: dict[str, Tensor]):
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.t = 0


def adam_update(params: dict[str, Tensor], state: AdamState, lr: float) -> None:
    """Bias-corrected Adam step over every parameter with a gradient."""
    state.t += 1
    t = state.t
    for name, p in params.items():
        if p.grad is None:
            continue
        g = p.grad
        if not np.isfinite(g).all():
            raise TrainingError(f"non-finite gradient for parameter {name!r}")
        m = state.m[name]
        v = state.v[name]
        m *= ADAM_BETA1
        m += (1 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1 - ADAM_BETA2) * g * g
        m_hat = m / (1 - ADAM_BETA1 ** t)
        v_hat = v / (1 - ADAM_BETA2 ** t)
        p.data -= (lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)).astype(p.data.dtype)


def clip_gradients(params: dict[str, Tensor], max_norm: float) -> float:
    norm = ad.global_grad_norm(params.values())
    if norm > max_norm and norm > 0:
        factor = max_norm / norm
        for p in params.values():
            if p.grad is not None:
                p.grad = p.grad * factor
    return norm


@dataclass
class TurnExample:
    """One question turn with gold context, ready for the model."""

    sequence_id: str
    position: int
    table: Table
    question: str
    gold_texts: list[str]
    target: AnswerSelection
    tensors: GraphTensors
    non_rectangular: bool


def prepare_examples(
    conversations: list[Conversation],
    tables: dict[str, Table],
    vocab: Vocabulary,
    config: ModelConfig,
    options: Optional[GraphOptions] = None,
) -> list[TurnExample]:
    """Build gold-context graphs for every turn once, up front."""
    options = options or GraphOptions(rel_pos_clip=config.rel_pos_clip)
    examples: list[TurnExample] = []
    for conv in conversations:
        table = tables[conv.table_id]
        prev = None
        for turn in conv.turns:
            tokens = normalize_tokenize(turn.text)
            spans = parse_numeric_spans(tokens)
            graph = build_graph(table, tokens, spans, vocab, prev_cells=prev, options=options)
            target, rectangular = selection_from_cells(turn.gold_answers)
            gold_texts = turn.gold_answer_texts or answer_texts(turn.gold_answers, table)
            examples.append(TurnExample(
                sequence_id=conv.sequence_id,
                position=turn.position,
                table=table,
                question=turn.text,
                gold_texts=gold_texts,
                target=target,
                tensors=tensorize(graph, config),
                non_rectangular=not rectangular,
            ))
            prev = turn.gold_answers
    return examples


def ensure_column_types(tables: dict[str, Table]) -> None:
    for table in tables.values():
        annotate_column_types(table)


@dataclass
class TrainResult:
    params: dict[str, Tensor]
    vocab: Vocabulary
    final_step: int
    final_loss: float
    log: list[dict]


def _train_subset_accuracy(
    examples: list[TurnExample],
    params: dict[str, Tensor],
    config: ModelConfig,
    limit: int = 128,
) -> float:
    """Greedy-decoding text accuracy on gold-context graphs (training view)."""
    subset = examples[:limit]
    correct = 0
    for ex in subset:
        with ad.no_grad():
            encoded = encode(ex.tensors, params, config, train_mode=False)
            sel = decode_greedy(encoded, ex.tensors, params, config)
        cells = selection_to_cells(sel, ex.table)
        predicted = [t.strip().lower() for t in answer_texts(cells, ex.table)]
        gold = [t.strip().lower() for t in ex.gold_texts]
        if sorted(predicted) == sorted(gold):
            correct += 1
    return correct / len(subset) if subset else 0.0


def train(
    conversations: list[Conversation],
    tables: dict[str, Table],
    model_config: ModelConfig,
    train_config: TrainConfig,
    vocab: Optional[Vocabulary] = None,
    log_path: Optional[Path] = None,
    progress: Optional[Callable[[dict], None]] = None,
) -> TrainResult:
    """Run the optimization loop and return final parameters.

    The final parameters are the result (no early stopping on a dev set);
    ``early_stop_accuracy`` only short-circuits once the train subset is
    solved, which desk-scale overfit runs use to save time.
    """
    if not conversations:
        raise InvalidExampleError("training needs at least one conversation")
    ensure_column_types(tables)
    if vocab is None:
        vocab = build_vocab(corpus_tokens(
            (t.text for c in conversations for t in c.turns), tables.values()
        ))
    examples = prepare_examples(conversations, tables, vocab, model_config)
    params = init_parameters(model_config, vocab, seed=train_config.seed)
    state = AdamState(params)
    rng = Rng(train_config.seed ^ 0x5EED5EED)
    log: list[dict] = []
    log_file = open(log_path, "w") if log_path else None

    loss_value = float("nan")
    step = 0
    try:
        for step in range(1, train_config.total_steps + 1):
            batch_idx = rng.integers(len(examples), train_config.batch_size)
            for p in params.values():
                p.zero_grad()
            batch_loss = 0.0
            for idx in batch_idx:
                ex = examples[int(idx)]
                encoded = encode(
                    ex.tensors, params, model_config, train_mode=True, rng=rng
                )
                loss = decode_training_loss(encoded, ex.tensors, ex.target, params)
                loss = ad.scale(loss, 1.0 / train_config.batch_size)
                loss.backward()
                batch_loss += loss.item() * train_config.batch_size
            loss_value = batch_loss / train_config.batch_size
            if train_config.clip_grad_norm is not None:
                clip_gradients(params, train_config.clip_grad_norm)
            lr = lr_at_step(
                train_config.base_lr, model_config.d_model, train_config.warmup_steps, step
            )
            adam_update(params, state, lr)

            if step % train_config.eval_every == 0 or step == train_config.total_steps:
                acc = _train_subset_accuracy(examples, params, model_config)
                entry = {"step": step, "loss": loss_value, "lr": lr, "train_all": acc}
                log.append(entry)
                if log_file:
                    log_file.write(json.dumps(entry) + "\n")
                    log_file.flush()
                if progress:
                    progress(entry)
                if (
                    train_config.early_stop_accuracy is not None
                    and acc >= train_config.early_stop_accuracy
                ):
                    break
    finally:
        if log_file:
            log_file.close()
    return TrainResult(params=params, vocab=vocab, final_step=step, final_loss=loss_value, log=log)


CHECKPOINT_MAGIC = b"TGQA"
CHECKPOINT_VERSION = 1


@dataclass
class Checkpoint:
    params: dict[str, Tensor]
    model_config: ModelConfig
    vocab: Vocabulary
    train_config: Optional[TrainConfig] = None


def checkpoint_save(
    path,
    params: dict[str, Tensor],
    model_config: ModelConfig,
    vocab: Vocabulary,
    train_config: Optional[TrainConfig] = None,
) -> None:
    """Write the binary checkpoint container.

    Layout: magic, u32 version, u64 header length, header JSON, raw
    little-endian tensor payloads, trailing CRC32 of everything before it.
    """
    names = sorted(params)
    manifest = []
    payloads = []
    offset = 0
    for name in names:
        data = np.ascontiguousarray(params[name].data)
        if data.dtype == np.float64:
            data = data.astype(np.float32)
        raw = data.astype("<f4").tobytes()
        manifest.append({
            "name": name,
            "shape": list(data.shape),
            "dtype": "f4",
            "offset": offset,
            "nbytes": len(raw),
        })
        payloads.append(raw)
        offset += len(raw)
    header = {
        "format_version": CHECKPOINT_VERSION,
        "model_config": model_config.to_dict(),
        "train_config": train_config.to_dict() if train_config else None,
        "vocab": {
            "words": vocab.words_in_id_order(),
            "known_capacity": vocab.known_capacity,
            "oov_bucket_count": vocab.oov_bucket_count,
        },
        "tensors": manifest,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = (
        CHECKPOINT_MAGIC
        + struct.pack("<I", CHECKPOINT_VERSION)
        + struct.pack("<Q", len(header_bytes))
        + header_bytes
        + b"".join(payloads)
    )
    crc = zlib.crc32(body) & 0xFFFFFFFF
    Path(path).write_bytes(body + struct.pack("<I", crc))


def checkpoint_load(path) -> Checkpoint:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(blob) < 20:
        raise CheckpointError(f"checkpoint {path} is truncated")
    body, crc_bytes = blob[:-4], blob[-4:]
    if zlib.crc32(body) & 0xFFFFFFFF != struct.unpack("<I", crc_bytes)[0]:
        raise CheckpointError(f"checkpoint {path} failed its checksum")
    if body[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"checkpoint {path} has wrong magic bytes")
    version = struct.unpack("<I", body[4:8])[0]
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"checkpoint version {version} unsupported (expected {CHECKPOINT_VERSION})")
    header_len = struct.unpack("<Q", body[8:16])[0]
    header_end = 16 + header_len
    if header_end > len(body):
        raise CheckpointError(f"checkpoint {path} is truncated")
    header = json.loads(body[16:header_end].decode("utf-8"))
    payload = body[header_end:]

    params: dict[str, Tensor] = {}
    for entry in header["tensors"]:
        start, nbytes = entry["offset"], entry["nbytes"]
        if start + nbytes > len(payload):
            raise CheckpointError(f"checkpoint {path} payload is truncated")
        data = np.frombuffer(payload[start:start + nbytes], dtype="<f4").reshape(entry["shape"])
        params[entry["name"]] = Tensor(data.astype(np.float32).copy(), requires_grad=True)

    vocab_info = header["vocab"]
    vocab = Vocabulary(
        word_to_id={w: 4 + i for i, w in enumerate(vocab_info["words"])},
        known_capacity=vocab_info["known_capacity"],
        oov_bucket_count=vocab_info["oov_bucket_count"],
    )
    model_config = ModelConfig.from_dict(header["model_config"])
    train_config = (
        TrainConfig.from_dict(header["train_config"]) if header["train_config"] else None
    )
    return Checkpoint(params=params, model_config=model_config, vocab=vocab, train_config=train_config)
