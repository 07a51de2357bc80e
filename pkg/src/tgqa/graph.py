"""Table + question + previous answers -> annotated graph.

Nodes are columns, rows, collapsed cells, one question node, one node per
question token, and one node per numeric expression in the question. Every
ordered node pair carries exactly one edge label; the diagonal is SELF and
unrelated pairs are NO_EDGE so attention can stay unmasked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidTableError
from .tables import CellCoord, ColumnType, Table
from .text import (
    NumericSpan,
    NumericValue,
    QNODE_ID,
    Vocabulary,
    normalize_join,
    normalize_tokenize,
    parse_cell_value,
)


class NodeKind:
    COLUMN = "COLUMN"
    ROW = "ROW"
    CELL = "CELL"
    QUESTION = "QUESTION"
    TOKEN = "TOKEN"
    QNUMBER = "QNUMBER"

    ALL = (COLUMN, ROW, CELL, QUESTION, TOKEN, QNUMBER)


KIND_INDEX = {kind: i for i, kind in enumerate(NodeKind.ALL)}

ANSWER_ROW = "ANSWER_ROW"
ANSWER_COLUMN = "ANSWER_COLUMN"
ANSWER_CELL = "ANSWER_CELL"
ANSWER_FLAG_INDEX = {ANSWER_ROW: 0, ANSWER_COLUMN: 1, ANSWER_CELL: 2}

# Fixed edge labels; relative token positions follow from REL_POS_BASE.
SELF = 0
NO_EDGE = 1
COLUMN_TO_CELL = 2
CELL_TO_COLUMN = 3
ROW_TO_CELL = 4
CELL_TO_ROW = 5
QUESTION_TO_TABLE = 6
TABLE_TO_QUESTION = 7
NUM_LESSER = 8
NUM_GREATER = 9
NUM_EQUAL = 10
REL_POS_BASE = 11

_FIXED_LABEL_NAMES = {
    SELF: "SELF",
    NO_EDGE: "NO_EDGE",
    COLUMN_TO_CELL: "COLUMN_TO_CELL",
    CELL_TO_COLUMN: "CELL_TO_COLUMN",
    ROW_TO_CELL: "ROW_TO_CELL",
    CELL_TO_ROW: "CELL_TO_ROW",
    QUESTION_TO_TABLE: "QUESTION_TO_TABLE",
    TABLE_TO_QUESTION: "TABLE_TO_QUESTION",
    NUM_LESSER: "NUM_LESSER",
    NUM_GREATER: "NUM_GREATER",
    NUM_EQUAL: "NUM_EQUAL",
}


def rel_pos_label(distance: int, clip: int) -> int:
    clipped = max(-clip, min(clip, distance))
    return REL_POS_BASE + clipped + clip


def num_edge_labels(clip: int) -> int:
    return REL_POS_BASE + 2 * clip + 1


def label_name(label: int, clip: int) -> str:
    if label in _FIXED_LABEL_NAMES:
        return _FIXED_LABEL_NAMES[label]
    return f"REL_POS({label - REL_POS_BASE - clip})"


def label_from_name(name: str, clip: int) -> int:
    for value, fixed in _FIXED_LABEL_NAMES.items():
        if name == fixed:
            return value
    if name.startswith("REL_POS(") and name.endswith(")"):
        return rel_pos_label(int(name[len("REL_POS("):-1]), clip)
    raise ValueError(f"unknown edge label name {name!r}")


@dataclass
class Node:
    """One graph node with its nominal feature set."""

    kind: str
    words: tuple[int, ...] = ()
    column_index: Optional[int] = None
    row_indexes: tuple[int, ...] = ()
    alignment_bin: Optional[int] = None
    rank: Optional[int] = None
    inverse_rank: Optional[int] = None
    answer_flags: set[str] = field(default_factory=set)
    text: str = ""
    coords: tuple[CellCoord, ...] = ()
    token_index: Optional[int] = None
    value: Optional[NumericValue] = None

    def feature_count(self) -> int:
        count = 1 + len(self.words) + len(self.row_indexes) + len(self.answer_flags)
        count += sum(x is not None for x in (self.column_index, self.alignment_bin, self.rank, self.inverse_rank))
        return count


@dataclass
class GraphOptions:
    """Knobs for graph construction; defaults mirror the trained system."""

    numeric_relations: bool = True
    context_marking: bool = True
    ngram_max: int = 6
    rel_pos_clip: int = 6


@dataclass
class AnnotatedGraph:
    nodes: list[Node]
    edge_labels: np.ndarray  # (n, n) int16, a total labeling
    column_nodes: list[int]  # node index per table column
    row_nodes: list[int]  # node index per table row
    cell_node_by_coord: dict[tuple[int, int], int]
    question_node: int
    token_nodes: list[int]
    qnumber_nodes: list[int]
    rel_pos_clip: int

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def pointable(self) -> list[int]:
        return list(self.column_nodes) + list(self.row_nodes)


def normalized_edit_distance(v: str, w: str) -> float:
    """Character-level Levenshtein distance over the longer length; in [0, 1]."""
    if not v and not w:
        return 0.0
    return levenshtein(v, w) / max(len(v), len(w))


def levenshtein(v: str, w: str) -> int:
    if len(v) < len(w):
        v, w = w, v
    previous = list(range(len(w) + 1))
    for i, a in enumerate(v, start=1):
        current = [i]
        for j, b in enumerate(w, start=1):
            current.append(min(
                previous[j] + 1,
                current[j - 1] + 1,
                previous[j - 1] + (a != b),
            ))
        previous = current
    return previous[-1]


def similarity_bin(similarity: float) -> int:
    """Bin similarities in (0.5, 1.0] into 5 width-0.1 bins, 1 (low) to 5 (exact)."""
    value = (similarity - 0.5) * 10.0
    return max(1, min(5, math.ceil(value - 1e-9)))


@dataclass(frozen=True)
class AlignmentLink:
    target_node: int
    token_start: int
    token_end: int
    similarity: float

    @property
    def bin(self) -> int:
        return similarity_bin(self.similarity)


def _best_span(tokens: Sequence[str], target_text: str, ngram_max: int) -> Optional[tuple[int, int, float]]:
    """Best-similarity n-gram for one target; ties to leftmost, then longest."""
    if not target_text:
        return None
    best: Optional[tuple[int, int, float]] = None
    n_tokens = len(tokens)
    for start in range(n_tokens):
        joined = ""
        for end in range(start + 1, min(start + ngram_max, n_tokens) + 1):
            joined = tokens[end - 1] if end == start + 1 else joined + " " + tokens[end - 1]
            sim = 1.0 - normalized_edit_distance(joined, target_text)
            if sim <= 0.5:
                continue
            if best is None or sim > best[2]:
                best = (start, end, sim)
            elif sim == best[2] and (start < best[0] or (start == best[0] and end > best[1])):
                best = (start, end, sim)
    return best


def align_question_to_table(
    tokens: Sequence[str],
    targets: Sequence[tuple[int, str]],
    ngram_max: int = 6,
) -> list[AlignmentLink]:
    """Link each (node index, normalized text) target to its best question span."""
    links = []
    for node_index, text in targets:
        span = _best_span(tokens, text, ngram_max)
        if span is not None:
            links.append(AlignmentLink(node_index, span[0], span[1], span[2]))
    return links


def rank_features(cells: Sequence[str], column_type: str) -> list[Optional[tuple[int, int]]]:
    """Dense (rank, inverse rank) per cell over parseable values; 1 = smallest.

    Cells that are empty, unparseable, or parse to a kind other than the
    column's type get no rank. Equal values share a rank.
    """
    if column_type not in (ColumnType.NUMBER, ColumnType.DATE):
        return [None] * len(cells)
    values: list[Optional[NumericValue]] = []
    for cell in cells:
        parsed = parse_cell_value(cell) if cell and cell.strip() else None
        values.append(parsed if parsed is not None and parsed.kind == column_type else None)
    keys = sorted({v.sort_key() for v in values if v is not None})
    key_rank = {key: i + 1 for i, key in enumerate(keys)}
    distinct = len(keys)
    out: list[Optional[tuple[int, int]]] = []
    for v in values:
        if v is None:
            out.append(None)
        else:
            r = key_rank[v.sort_key()]
            out.append((r, distinct - r + 1))
    return out


def numeric_edges(
    spans: Sequence[NumericSpan],
    qnumber_nodes: Sequence[int],
    cell_nodes: Sequence[int],
    nodes: Sequence[Node],
    table: Table,
) -> list[tuple[int, int, int]]:
    """Comparison labels between question numbers and matching-kind cells.

    Returns (qnumber node, cell node, label) triples; the label reflects the
    cell value relative to the question value and is written symmetrically.
    """
    triples = []
    for span, q_node in zip(spans, qnumber_nodes):
        for cell_node in cell_nodes:
            node = nodes[cell_node]
            col = node.column_index
            if table.column_types[col] != span.value.kind:
                continue
            cell_value = parse_cell_value(node.text)
            if cell_value is None or cell_value.kind != span.value.kind:
                continue
            cmp = cell_value.compare(span.value)
            if cmp is None:
                continue
            label = NUM_EQUAL if cmp == 0 else (NUM_GREATER if cmp > 0 else NUM_LESSER)
            triples.append((q_node, cell_node, label))
    return triples


def mark_previous_answers(graph: AnnotatedGraph, prev_cells: Sequence[CellCoord]) -> AnnotatedGraph:
    """Flag the previous turn's answer rows, columns, and cells in place.

    A collapsed cell node is flagged if any coordinate it covers is an
    answer. The previous question's text is never encoded, only its answers.
    """
    rows = {c.row for c in prev_cells}
    cols = {c.col for c in prev_cells}
    coords = {c.as_tuple() for c in prev_cells}
    for row in rows:
        graph.nodes[graph.row_nodes[row]].answer_flags.add(ANSWER_ROW)
    for col in cols:
        graph.nodes[graph.column_nodes[col]].answer_flags.add(ANSWER_COLUMN)
    flagged = set()
    for coord in coords:
        node_index = graph.cell_node_by_coord.get(coord)
        if node_index is not None and node_index not in flagged:
            graph.nodes[node_index].answer_flags.add(ANSWER_CELL)
            flagged.add(node_index)
    return graph


def build_graph(
    table: Table,
    question_tokens: Sequence[str],
    spans: Sequence[NumericSpan],
    vocab: Vocabulary,
    prev_cells: Optional[Sequence[CellCoord]] = None,
    options: GraphOptions = GraphOptions(),
) -> AnnotatedGraph:
    """Assemble the full node list and dense edge-label matrix for one turn."""
    if table.n_rows < 1 or table.n_cols < 1:
        raise InvalidTableError(f"table {table.table_id!r} must have at least one row and column")
    if not options.numeric_relations:
        spans = []

    nodes: list[Node] = []
    column_nodes: list[int] = []
    row_nodes: list[int] = []

    for col, name in enumerate(table.column_names):
        tokens = normalize_tokenize(name)
        nodes.append(Node(
            kind=NodeKind.COLUMN,
            words=tuple(vocab.token_ids(tokens)),
            column_index=col,
            text=name,
        ))
        column_nodes.append(len(nodes) - 1)

    for row in range(table.n_rows):
        nodes.append(Node(kind=NodeKind.ROW, row_indexes=(row,)))
        row_nodes.append(len(nodes) - 1)

    # Collapse identical normalized texts within each column into one node.
    cell_nodes: list[int] = []
    cell_node_by_coord: dict[tuple[int, int], int] = {}
    ranks_by_col = {}
    if options.numeric_relations:
        ranks_by_col = {
            col: rank_features(table.column_cells(col), table.column_types[col])
            for col in range(table.n_cols)
        }
    for col in range(table.n_cols):
        seen: dict[str, int] = {}
        for row in range(table.n_rows):
            raw = table.cells[row][col]
            key = normalize_join(raw)
            if key in seen:
                node_index = seen[key]
                node = nodes[node_index]
                node.row_indexes = node.row_indexes + (row,)
                node.coords = node.coords + (CellCoord(row, col),)
            else:
                rank_pair = ranks_by_col.get(col, [None] * table.n_rows)[row]
                nodes.append(Node(
                    kind=NodeKind.CELL,
                    words=tuple(vocab.token_ids(key.split())),
                    column_index=col,
                    row_indexes=(row,),
                    rank=rank_pair[0] if rank_pair else None,
                    inverse_rank=rank_pair[1] if rank_pair else None,
                    text=raw,
                    coords=(CellCoord(row, col),),
                ))
                node_index = len(nodes) - 1
                seen[key] = node_index
                cell_nodes.append(node_index)
            cell_node_by_coord[(row, col)] = node_index

    question_words = (QNODE_ID,) + tuple(vocab.token_ids(question_tokens))
    nodes.append(Node(kind=NodeKind.QUESTION, words=question_words, text=" ".join(question_tokens)))
    question_node = len(nodes) - 1

    token_nodes = []
    for i, token in enumerate(question_tokens):
        nodes.append(Node(
            kind=NodeKind.TOKEN,
            words=(vocab.token_id(token),),
            text=token,
            token_index=i,
        ))
        token_nodes.append(len(nodes) - 1)

    qnumber_nodes = []
    for span in spans:
        span_tokens = question_tokens[span.token_start:span.token_end]
        nodes.append(Node(
            kind=NodeKind.QNUMBER,
            words=tuple(vocab.token_ids(span_tokens)),
            text=" ".join(span_tokens),
            value=span.value,
        ))
        qnumber_nodes.append(len(nodes) - 1)

    n = len(nodes)
    labels = np.full((n, n), NO_EDGE, dtype=np.int16)
    np.fill_diagonal(labels, SELF)

    for cell_index in cell_nodes:
        node = nodes[cell_index]
        col_index = column_nodes[node.column_index]
        labels[col_index, cell_index] = COLUMN_TO_CELL
        labels[cell_index, col_index] = CELL_TO_COLUMN
        for row in node.row_indexes:
            row_index = row_nodes[row]
            labels[row_index, cell_index] = ROW_TO_CELL
            labels[cell_index, row_index] = CELL_TO_ROW

    # The question node reaches tokens, columns, and cells (not rows).
    for target in token_nodes + column_nodes + cell_nodes:
        labels[question_node, target] = QUESTION_TO_TABLE
        labels[target, question_node] = TABLE_TO_QUESTION

    clip = options.rel_pos_clip
    for i, node_i in enumerate(token_nodes):
        for j, node_j in enumerate(token_nodes):
            if i != j:
                labels[node_i, node_j] = rel_pos_label(j - i, clip)

    for span, q_node in zip(spans, qnumber_nodes):
        for t in range(span.token_start, span.token_end):
            labels[q_node, token_nodes[t]] = QUESTION_TO_TABLE
            labels[token_nodes[t], q_node] = TABLE_TO_QUESTION

    targets = [(idx, normalize_join(nodes[idx].text)) for idx in column_nodes]
    targets += [(idx, normalize_join(nodes[idx].text)) for idx in cell_nodes]
    for link in align_question_to_table(list(question_tokens), targets, options.ngram_max):
        nodes[link.target_node].alignment_bin = link.bin
        for t in range(link.token_start, link.token_end):
            labels[token_nodes[t], link.target_node] = QUESTION_TO_TABLE
            labels[link.target_node, token_nodes[t]] = TABLE_TO_QUESTION

    if options.numeric_relations:
        for q_node, cell_node, label in numeric_edges(spans, qnumber_nodes, cell_nodes, nodes, table):
            labels[q_node, cell_node] = label
            labels[cell_node, q_node] = label

    graph = AnnotatedGraph(
        nodes=nodes,
        edge_labels=labels,
        column_nodes=column_nodes,
        row_nodes=row_nodes,
        cell_node_by_coord=cell_node_by_coord,
        question_node=question_node,
        token_nodes=token_nodes,
        qnumber_nodes=qnumber_nodes,
        rel_pos_clip=clip,
    )
    if prev_cells and options.context_marking:
        mark_previous_answers(graph, prev_cells)
    return graph


def graph_to_dump(graph: AnnotatedGraph, sequence_id: str = "", position: int = 0, table_id: str = "") -> dict:
    """JSON-ready dict with node features and sparse non-trivial edges."""
    node_dicts = []
    for node in graph.nodes:
        entry: dict = {"kind": node.kind}
        if node.words:
            entry["words"] = list(node.words)
        if node.column_index is not None:
            entry["column"] = node.column_index
        if node.row_indexes:
            entry["rows"] = list(node.row_indexes)
        if node.alignment_bin is not None:
            entry["alignment_bin"] = node.alignment_bin
        if node.rank is not None:
            entry["rank"] = node.rank
            entry["inverse_rank"] = node.inverse_rank
        if node.answer_flags:
            entry["answer_flags"] = sorted(node.answer_flags)
        if node.text:
            entry["text"] = node.text
        if node.token_index is not None:
            entry["token_index"] = node.token_index
        node_dicts.append(entry)

    edges = []
    n = graph.n_nodes
    for i in range(n):
        for j in range(n):
            label = int(graph.edge_labels[i, j])
            if label not in (SELF, NO_EDGE):
                edges.append([i, j, label_name(label, graph.rel_pos_clip)])
    return {
        "sequence_id": sequence_id,
        "position": position,
        "table_id": table_id,
        "nodes": node_dicts,
        "edges": edges,
    }
