"""SQA metrics (ALL / SEQ / POSk), context modes, breakdowns, error export.

Two context modes: PREDICTED feeds each turn the model's own previous
answer, REFERENCE feeds the gold previous answer (the oracle that isolates
error propagation). Matching defaults to duplicate-sensitive text multisets;
coordinate matching is kept for analysis.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Callable, Optional, Sequence

from . import autodiff as ad
from .errors import ConfigError, EvaluationError
from .graph import GraphOptions, build_graph
from .network import ModelConfig, decode_greedy, encode, tensorize
from .tables import (
    AnswerSelection,
    CellCoord,
    Conversation,
    PredictionRecord,
    Table,
    answer_texts,
    selection_to_cells,
)
from .text import Vocabulary, normalize_tokenize, parse_numeric_spans

CONTEXT_PREDICTED = "PREDICTED"
CONTEXT_REFERENCE = "REFERENCE"
MATCH_TEXT_MULTISET = "TEXT_MULTISET"
MATCH_COORDS = "COORDS"

ERROR_CATEGORIES = (
    "MATCH",
    "TABLE_UNDERSTANDING",
    "COMPLEX_MATCH",
    "GOLD",
    "ANSWER_SET",
    "CONTEXT",
    "OTHER",
)

_SUPERLATIVE_WORDS = {"most", "least"}


@dataclass
class EvalConfig:
    context_mode: str = CONTEXT_PREDICTED
    match_mode: str = MATCH_TEXT_MULTISET
    numeric_relations_enabled: bool = True

    def __post_init__(self) -> None:
        if self.context_mode not in (CONTEXT_PREDICTED, CONTEXT_REFERENCE):
            raise ConfigError(f"context_mode must be PREDICTED or REFERENCE, got {self.context_mode!r}")
        if self.match_mode not in (MATCH_TEXT_MULTISET, MATCH_COORDS):
            raise ConfigError(f"match_mode must be TEXT_MULTISET or COORDS, got {self.match_mode!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "EvalConfig":
        return cls(**data)


def question_match(predicted, gold, match_mode: str = MATCH_TEXT_MULTISET) -> bool:
    """Compare one question's predicted answers against gold.

    TEXT_MULTISET compares unordered multisets of normalized answer strings
    (duplicates count); COORDS compares coordinate sets.
    """
    if match_mode == MATCH_COORDS:
        to_pair = lambda c: c.as_tuple() if isinstance(c, CellCoord) else tuple(c)
        return {to_pair(c) for c in predicted} == {to_pair(c) for c in gold}
    normalize = lambda texts: sorted(str(t).strip().lower() for t in texts)
    return normalize(predicted) == normalize(gold)


def is_superlative_question(text: str) -> bool:
    """Token heuristic: an -est suffix or the words most/least."""
    for token in normalize_tokenize(text):
        if token in _SUPERLATIVE_WORDS or (len(token) > 3 and token.endswith("est")):
            return True
    return False


@dataclass
class ErrorAnnotation:
    sequence_id: str
    position: int
    category: str
    note: str


@dataclass
class EvalReport:
    all_acc: float
    seq_acc: float
    pos_acc: dict[int, float]
    n_questions: int
    n_sequences: int
    records: list[PredictionRecord] = field(default_factory=list)
    per_table: list[dict] = field(default_factory=list)
    table_size_deciles: list[dict] = field(default_factory=list)
    superlative: Optional[dict] = None
    annotations: list[ErrorAnnotation] = field(default_factory=list)
    config: Optional[EvalConfig] = None

    def summary_positions(self, up_to: int = 3) -> dict[int, Optional[float]]:
        return {k: self.pos_acc.get(k) for k in range(1, up_to + 1)}


def compute_metrics(
    records: list[PredictionRecord],
    conversations: Optional[list[Conversation]] = None,
) -> EvalReport:
    """Aggregate per-question records into ALL / SEQ / POSk.

    When conversations are given, coverage is checked: exactly one record
    per question turn.
    """
    if conversations is not None:
        expected = {(c.sequence_id, t.position) for c in conversations for t in c.turns}
        got = {(r.sequence_id, r.position) for r in records}
        if expected != got or len(records) != len(expected):
            missing = sorted(expected - got)[:3]
            extra = sorted(got - expected)[:3]
            raise EvaluationError(
                f"evaluation incomplete: missing {missing}, unexpected {extra}"
            )
    if not records:
        raise EvaluationError("no prediction records to aggregate")

    by_sequence: dict[str, list[PredictionRecord]] = {}
    for r in records:
        by_sequence.setdefault(r.sequence_id, []).append(r)

    n_questions = len(records)
    all_acc = sum(r.correct for r in records) / n_questions
    seq_acc = sum(all(r.correct for r in seq) for seq in by_sequence.values()) / len(by_sequence)

    by_position: dict[int, list[bool]] = {}
    for r in records:
        by_position.setdefault(r.position, []).append(r.correct)
    pos_acc = {k: sum(v) / len(v) for k, v in sorted(by_position.items())}

    return EvalReport(
        all_acc=all_acc,
        seq_acc=seq_acc,
        pos_acc=pos_acc,
        n_questions=n_questions,
        n_sequences=len(by_sequence),
    )


Predictor = Callable[[Table, str, Optional[Sequence[CellCoord]]], AnswerSelection]


def run_predictions(
    predictor: Predictor,
    conversations: list[Conversation],
    tables: dict[str, Table],
    config: EvalConfig,
) -> list[PredictionRecord]:
    """Drive a predictor over every turn under the configured context mode."""
    records: list[PredictionRecord] = []
    for conv in conversations:
        table = tables[conv.table_id]
        prev: Optional[list[CellCoord]] = None
        for turn in conv.turns:
            selection = predictor(table, turn.text, prev)
            cells = selection_to_cells(selection, table)
            texts = answer_texts(cells, table, dedupe=False)
            if config.match_mode == MATCH_COORDS:
                correct = question_match(cells, turn.gold_answers, MATCH_COORDS)
            else:
                gold_texts = turn.gold_answer_texts or answer_texts(turn.gold_answers, table)
                correct = question_match(texts, gold_texts, MATCH_TEXT_MULTISET)
            records.append(PredictionRecord(
                sequence_id=conv.sequence_id,
                position=turn.position,
                predicted=selection,
                predicted_cells=cells,
                predicted_texts=texts,
                correct=correct,
            ))
            if config.context_mode == CONTEXT_REFERENCE:
                prev = turn.gold_answers
            else:
                prev = cells
    return records


def neural_predictor(
    params,
    model_config: ModelConfig,
    vocab: Vocabulary,
    numeric_relations: bool = True,
    context_marking: bool = True,
) -> Predictor:
    """Wrap a trained model as a (table, question, prev cells) -> selection."""
    options = GraphOptions(
        numeric_relations=numeric_relations,
        context_marking=context_marking,
        rel_pos_clip=model_config.rel_pos_clip,
    )

    def predict(table: Table, question: str, prev: Optional[Sequence[CellCoord]]) -> AnswerSelection:
        tokens = normalize_tokenize(question)
        spans = parse_numeric_spans(tokens)
        graph = build_graph(table, tokens, spans, vocab, prev_cells=prev, options=options)
        gt = tensorize(graph, model_config)
        with ad.no_grad():
            encoded = encode(gt, params, model_config, train_mode=False)
            return decode_greedy(encoded, gt, params, model_config)

    return predict


def _attach_breakdowns(
    report: EvalReport,
    records: list[PredictionRecord],
    conversations: list[Conversation],
    tables: dict[str, Table],
) -> None:
    conv_by_id = {c.sequence_id: c for c in conversations}
    by_record = {(r.sequence_id, r.position): r for r in records}

    per_table: dict[str, list[bool]] = {}
    superlative_hits: list[bool] = []
    plain_hits: list[bool] = []
    for conv in conversations:
        for turn in conv.turns:
            r = by_record[(conv.sequence_id, turn.position)]
            per_table.setdefault(conv.table_id, []).append(r.correct)
            if is_superlative_question(turn.text):
                superlative_hits.append(r.correct)
            else:
                plain_hits.append(r.correct)

    report.per_table = sorted(
        (
            {
                "table_id": tid,
                "n_cells": tables[tid].n_cells,
                "n_questions": len(hits),
                "accuracy": sum(hits) / len(hits),
            }
            for tid, hits in per_table.items()
        ),
        key=lambda e: e["n_cells"],
    )

    deciles = []
    entries = report.per_table
    if entries:
        for d in range(10):
            lo = len(entries) * d // 10
            hi = len(entries) * (d + 1) // 10
            chunk = entries[lo:hi]
            if not chunk:
                continue
            total_q = sum(e["n_questions"] for e in chunk)
            weighted = sum(e["accuracy"] * e["n_questions"] for e in chunk)
            deciles.append({
                "decile": d + 1,
                "max_cells": chunk[-1]["n_cells"],
                "n_questions": total_q,
                "accuracy": weighted / total_q if total_q else 0.0,
            })
    report.table_size_deciles = deciles

    report.superlative = {
        "n_superlative": len(superlative_hits),
        "superlative_accuracy": (
            sum(superlative_hits) / len(superlative_hits) if superlative_hits else None
        ),
        "other_accuracy": sum(plain_hits) / len(plain_hits) if plain_hits else None,
    }


def evaluate_with_predictor(
    predictor: Predictor,
    conversations: list[Conversation],
    tables: dict[str, Table],
    config: EvalConfig,
) -> EvalReport:
    records = run_predictions(predictor, conversations, tables, config)
    report = compute_metrics(records, conversations)
    report.records = records
    report.config = config
    _attach_breakdowns(report, records, conversations, tables)
    return report


def evaluate(
    checkpoint,
    conversations: list[Conversation],
    tables: dict[str, Table],
    config: EvalConfig,
) -> EvalReport:
    """Evaluate a loaded checkpoint on a split under the given config."""
    from .text import annotate_column_types

    for table in tables.values():
        annotate_column_types(table)
    predictor = neural_predictor(
        checkpoint.params,
        checkpoint.model_config,
        checkpoint.vocab,
        numeric_relations=config.numeric_relations_enabled,
    )
    return evaluate_with_predictor(predictor, conversations, tables, config)


def report_to_dict(report: EvalReport) -> dict:
    return {
        "all_acc": report.all_acc,
        "seq_acc": report.seq_acc,
        "pos_acc": {str(k): v for k, v in report.pos_acc.items()},
        "n_questions": report.n_questions,
        "n_sequences": report.n_sequences,
        "config": report.config.to_dict() if report.config else None,
        "per_table": report.per_table,
        "table_size_deciles": report.table_size_deciles,
        "superlative": report.superlative,
        "records": [
            {
                "sequence_id": r.sequence_id,
                "position": r.position,
                "columns": list(r.predicted.columns),
                "rows": list(r.predicted.rows),
                "cells": [c.as_tuple() for c in r.predicted_cells],
                "texts": r.predicted_texts,
                "correct": r.correct,
            }
            for r in report.records
        ],
    }


def report_from_dict(data: dict) -> EvalReport:
    records = [
        PredictionRecord(
            sequence_id=r["sequence_id"],
            position=r["position"],
            predicted=AnswerSelection(columns=tuple(r["columns"]), rows=tuple(r["rows"])),
            predicted_cells=[CellCoord(*c) for c in r["cells"]],
            predicted_texts=list(r["texts"]),
            correct=bool(r["correct"]),
        )
        for r in data.get("records", [])
    ]
    report = EvalReport(
        all_acc=data["all_acc"],
        seq_acc=data["seq_acc"],
        pos_acc={int(k): v for k, v in data["pos_acc"].items()},
        n_questions=data["n_questions"],
        n_sequences=data["n_sequences"],
        records=records,
        per_table=data.get("per_table", []),
        table_size_deciles=data.get("table_size_deciles", []),
        superlative=data.get("superlative"),
    )
    if data.get("config"):
        report.config = EvalConfig.from_dict(data["config"])
    return report


def write_report(report: EvalReport, path) -> None:
    Path(path).write_text(json.dumps(report_to_dict(report), indent=2, sort_keys=True))


def load_report(path) -> EvalReport:
    return report_from_dict(json.loads(Path(path).read_text()))


def write_records_tsv(report: EvalReport, path) -> None:
    """Per-question delimited output alongside the JSON report."""
    lines = ["sequence_id\tposition\tcorrect\tcolumns\trows\tpredicted_texts"]
    for r in report.records:
        lines.append("\t".join([
            r.sequence_id,
            str(r.position),
            "1" if r.correct else "0",
            ",".join(map(str, r.predicted.columns)),
            ",".join(map(str, r.predicted.rows)),
            "|".join(r.predicted_texts),
        ]))
    Path(path).write_text("\n".join(lines) + "\n")


def summary_text(report: EvalReport) -> str:
    """Plain-text table mirroring the ALL/SEQ/POS1/POS2/POS3 columns."""
    pos = report.summary_positions()
    cells = [
        f"{report.all_acc * 100:5.1f}",
        f"{report.seq_acc * 100:5.1f}",
    ] + [f"{pos[k] * 100:5.1f}" if pos[k] is not None else "    -" for k in (1, 2, 3)]
    lines = [
        "  ALL    SEQ   POS1   POS2   POS3",
        " ".join(f"{c:>6}" for c in cells),
        f"questions={report.n_questions} sequences={report.n_sequences}",
    ]
    return "\n".join(lines) + "\n"


def export_error_annotations(report: EvalReport, path) -> int:
    """Write annotation stubs (JSON lines) for every incorrect question."""
    count = 0
    with open(path, "w") as f:
        for r in report.records:
            if r.correct:
                continue
            f.write(json.dumps({
                "sequence_id": r.sequence_id,
                "position": r.position,
                "category": "",
                "note": "",
                "predicted_texts": r.predicted_texts,
            }) + "\n")
            count += 1
    return count


def load_error_annotations(path) -> list[ErrorAnnotation]:
    """Read back human-labeled annotations, validating categories."""
    annotations = []
    for line_no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        data = json.loads(line)
        category = data.get("category", "")
        if category and category not in ERROR_CATEGORIES:
            raise EvaluationError(
                f"line {line_no}: unknown category {category!r}; expected one of {ERROR_CATEGORIES}"
            )
        annotations.append(ErrorAnnotation(
            sequence_id=data["sequence_id"],
            position=int(data["position"]),
            category=category,
            note=data.get("note", ""),
        ))
    return annotations
