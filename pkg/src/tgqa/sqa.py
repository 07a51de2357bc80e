"""Dataset ingestion (SQA release format), graph dumps, config loading.

The release ships a tab-separated question file whose coordinate and answer
columns hold python-ish quoted lists, plus one CSV per table. The reader is
tolerant by default: malformed rows land in a rejects report instead of
being silently dropped.
"""

from __future__ import annotations

import ast
import csv
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import ConfigError, DataFormatError, InvalidTableError
from .evaluation import EvalConfig
from .graph import GraphOptions, build_graph, graph_to_dump, label_from_name
from .network import ModelConfig
from .tables import CellCoord, Conversation, QuestionTurn, Table, answer_texts
from .text import Vocabulary, normalize_tokenize, parse_numeric_spans

_COORD_RE = re.compile(r"\(\s*(\d+)\s*,\s*(\d+)\s*\)")
_REQUIRED_COLUMNS = ("id", "annotator", "position", "question", "table_file", "answer_coordinates", "answer_text")


def parse_coordinate_list(text: str, strict: bool = False) -> list[CellCoord]:
    """Parse the release's quoted coordinate notation, e.g. "['(0, 1)']"."""
    pairs = _COORD_RE.findall(text)
    if not pairs:
        raise DataFormatError(f"no coordinates found in {text!r}")
    if strict and not text.strip().startswith("["):
        raise DataFormatError(f"coordinate list {text!r} is not bracketed")
    return [CellCoord(int(r), int(c)) for r, c in pairs]


def parse_text_list(text: str) -> list[str]:
    """Parse the quoted answer-text list, falling back to the raw string."""
    try:
        value = ast.literal_eval(text)
        if isinstance(value, list):
            return [str(v) for v in value]
    except (ValueError, SyntaxError):
        pass
    return [text]


def load_table_csv(path: Path, table_id: str) -> Table:
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    if len(rows) < 2:
        raise InvalidTableError(f"table file {path} needs a header and at least one row")
    header, body = rows[0], rows[1:]
    width = len(header)
    cells = []
    for row in body:
        if len(row) < width:
            row = row + [""] * (width - len(row))
        elif len(row) > width:
            row = row[:width]
        cells.append(row)
    return Table(table_id=table_id, column_names=header, cells=cells)


@dataclass
class LoadStats:
    n_sequences: int = 0
    n_questions: int = 0
    n_rejected_rows: int = 0
    n_non_rectangular: int = 0
    n_text_mismatch: int = 0


@dataclass
class SplitData:
    conversations: list[Conversation]
    tables: dict[str, Table]
    rejects: list[dict] = field(default_factory=list)
    stats: LoadStats = field(default_factory=LoadStats)


def _check_rectangular(coords: list[CellCoord]) -> bool:
    cols = {c.col for c in coords}
    rows = {c.row for c in coords}
    return len({c.as_tuple() for c in coords}) == len(cols) * len(rows)


def load_split(tsv_path, tables_dir, strict: bool = False) -> SplitData:
    """Load one split: conversations grouped by (id, annotator), tables cached.

    Positions may start at 0 or 1 in the file; they are normalized to
    1-based and must be consecutive within a sequence.
    """
    tsv_path = Path(tsv_path)
    tables_dir = Path(tables_dir)
    rejects: list[dict] = []
    table_cache: dict[str, Table] = {}
    stats = LoadStats()

    grouped: dict[tuple[str, str], list[tuple[int, dict]]] = {}
    with open(tsv_path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f, delimiter="\t")
        missing = [c for c in _REQUIRED_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise DataFormatError(f"{tsv_path} is missing columns {missing}")
        for line_no, row in enumerate(reader, start=2):
            grouped.setdefault((row["id"], row["annotator"]), []).append((line_no, row))

    def reject_sequence(entries: list[tuple[int, dict]], reason: str) -> None:
        if strict:
            raise DataFormatError(f"{tsv_path.name}:{entries[0][0]}: {reason}")
        for line_no, row in entries:
            rejects.append({"line": line_no, "reason": reason, "row": row})
        stats.n_rejected_rows += len(entries)

    conversations = []
    for (seq_id, annotator), entries in grouped.items():
        sequence_id = f"{seq_id}/{annotator}"
        parsed_turns = []
        failure: Optional[str] = None
        for line_no, row in sorted(entries, key=lambda e: int(e[1]["position"])):
            table_file = row["table_file"]
            if table_file not in table_cache:
                table_path = tables_dir / table_file
                if not table_path.exists():
                    failure = f"missing table file {table_file}"
                    break
                try:
                    table_cache[table_file] = load_table_csv(table_path, table_file)
                except InvalidTableError as exc:
                    failure = str(exc)
                    break
            try:
                coords = parse_coordinate_list(row["answer_coordinates"], strict=strict)
            except DataFormatError as exc:
                failure = str(exc)
                break
            table = table_cache[table_file]
            if any(not (0 <= c.row < table.n_rows and 0 <= c.col < table.n_cols) for c in coords):
                failure = f"answer coordinates out of range for table {table_file}"
                break
            parsed_turns.append((int(row["position"]), row["question"], coords,
                                 parse_text_list(row["answer_text"]), table_file))

        if failure is None:
            positions = [p for p, *_ in parsed_turns]
            base = positions[0] if positions else 1
            if base not in (0, 1) or positions != list(range(base, base + len(positions))):
                failure = f"non-consecutive positions {positions} in sequence {sequence_id}"
            elif len({t[4] for t in parsed_turns}) != 1:
                failure = f"sequence {sequence_id} spans multiple tables"
        if failure is not None:
            reject_sequence(entries, failure)
            continue

        table_file = parsed_turns[0][4]
        table = table_cache[table_file]
        turns = []
        for position, question, coords, texts, _ in parsed_turns:
            rectangular = _check_rectangular(coords)
            deduped = sorted(t.strip().lower() for t in answer_texts(coords, table, dedupe=True))
            verbatim = sorted(t.strip().lower() for t in answer_texts(coords, table))
            given_texts = sorted(t.strip().lower() for t in texts)
            mismatch = bool(texts) and given_texts not in (deduped, verbatim)
            turn = QuestionTurn(
                position=position if base == 1 else position + 1,
                text=question,
                gold_answers=coords,
                gold_answer_texts=texts,
                non_rectangular=not rectangular,
                answer_text_mismatch=mismatch,
            )
            stats.n_non_rectangular += not rectangular
            stats.n_text_mismatch += mismatch
            turns.append(turn)
        conversations.append(Conversation(sequence_id=sequence_id, table_id=table_file, turns=turns))

    conversations.sort(key=lambda c: c.sequence_id)
    stats.n_sequences = len(conversations)
    stats.n_questions = sum(len(c.turns) for c in conversations)
    return SplitData(conversations=conversations, tables=table_cache, rejects=rejects, stats=stats)


def write_rejects(split: SplitData, path) -> None:
    with open(path, "w") as f:
        for reject in split.rejects:
            f.write(json.dumps(reject) + "\n")


def dump_graphs(
    split: SplitData,
    vocab: Vocabulary,
    out_path,
    options: Optional[GraphOptions] = None,
) -> int:
    """One JSON line per question turn, with gold previous-answer context."""
    options = options or GraphOptions()
    count = 0
    with open(out_path, "w") as f:
        for conv in split.conversations:
            table = split.tables[conv.table_id]
            prev = None
            for turn in conv.turns:
                tokens = normalize_tokenize(turn.text)
                spans = parse_numeric_spans(tokens)
                graph = build_graph(table, tokens, spans, vocab, prev_cells=prev, options=options)
                dump = graph_to_dump(graph, conv.sequence_id, turn.position, conv.table_id)
                f.write(json.dumps(dump, sort_keys=True) + "\n")
                prev = turn.gold_answers
                count += 1
    return count


def read_graph_dump(path, rel_pos_clip: int = 6) -> list[dict]:
    """Re-parse a dump file; edge names are validated against the label set."""
    entries = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        entry = json.loads(line)
        for _, _, name in entry["edges"]:
            label_from_name(name, rel_pos_clip)
        entries.append(entry)
    return entries


_MODEL_DOMAINS = {
    "num_layers": lambda v: 3 <= v <= 6,
    "d_model": lambda v: v in (128, 256, 512),
    "heads": lambda v: v in (4, 8, 16),
    "dropout_p": lambda v: v in (0.2, 0.4, 0.5),
}
_MODEL_DOMAIN_TEXT = {
    "num_layers": "[3, 6]",
    "d_model": "{128, 256, 512}",
    "heads": "{4, 8, 16}",
    "dropout_p": "{0.2, 0.4, 0.5}",
}
_TRAIN_DOMAINS = {
    "warmup_steps": lambda v: 1 <= v <= 2000,
    "batch_size": lambda v: v in (32, 64),
}
_TRAIN_DOMAIN_TEXT = {
    "warmup_steps": "[1, 2000]",
    "batch_size": "{32, 64}",
}

_MODEL_KEYS = set(ModelConfig().to_dict())
_EVAL_KEYS = {"context_mode", "match_mode", "numeric_relations_enabled"}


def load_config(path) -> tuple[ModelConfig, "TrainConfig", EvalConfig]:
    """Read a flat JSON config holding model, training, and eval fields.

    Unknown keys are rejected. Hyperparameter domains follow the published
    sweep ranges unless ``desk_scale`` is true, which keeps structural checks
    but allows small models for quick CPU experiments.
    """
    from .training import TrainConfig

    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a JSON object")

    train_keys = set(TrainConfig().to_dict())
    known = _MODEL_KEYS | train_keys | _EVAL_KEYS | {"desk_scale"}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown config keys {unknown}; known keys: {sorted(known)}")

    desk_scale = bool(raw.get("desk_scale", False))
    model_kwargs = {k: raw[k] for k in raw if k in _MODEL_KEYS}
    train_kwargs = {k: raw[k] for k in raw if k in train_keys}
    eval_kwargs = {k: raw[k] for k in raw if k in _EVAL_KEYS}

    for key, value in model_kwargs.items():
        default = ModelConfig().to_dict()[key]
        if default is not None and value is not None and not isinstance(value, type(default)) and not (
            isinstance(default, float) and isinstance(value, (int, float))
        ):
            raise ConfigError(f"config key {key!r} expects {type(default).__name__}, got {type(value).__name__}")
    if not desk_scale:
        for key, check in _MODEL_DOMAINS.items():
            if key in model_kwargs and not check(model_kwargs[key]):
                raise ConfigError(
                    f"{key}={model_kwargs[key]} outside the legal set {_MODEL_DOMAIN_TEXT[key]}"
                )
        for key, check in _TRAIN_DOMAINS.items():
            if key in train_kwargs and not check(train_kwargs[key]):
                raise ConfigError(
                    f"{key}={train_kwargs[key]} outside the legal set {_TRAIN_DOMAIN_TEXT[key]}"
                )

    try:
        model_config = ModelConfig.from_dict({**ModelConfig().to_dict(), **model_kwargs})
        train_config = TrainConfig.from_dict({**TrainConfig().to_dict(), **train_kwargs})
        eval_config = EvalConfig.from_dict({**EvalConfig().to_dict(), **eval_kwargs})
    except TypeError as exc:
        raise ConfigError(f"invalid config {path}: {exc}") from exc
    return model_config, train_config, eval_config


def expand_grid(base: dict, grid: dict[str, list]) -> list[dict]:
    """Explicit sweep: cross product of the grid values over the base config."""
    combos = [dict(base)]
    for key, values in grid.items():
        combos = [{**c, key: v} for c in combos for v in values]
    for combo in combos:
        combo.pop("grid", None)
    return combos
