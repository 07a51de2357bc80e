"""Domain model for tables, conversations, answers, and predictions.

Everything here is immutable after construction and safe to share across
threads. Cell texts are stored verbatim; normalization is applied lazily by
the text pipeline so the raw grid stays displayable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import InvalidSelectionError, InvalidTableError


class ColumnType:
    """Per-column content tag. Plain string constants keep JSON dumps simple."""

    TEXT = "TEXT"
    NUMBER = "NUMBER"
    DATE = "DATE"

    ALL = (TEXT, NUMBER, DATE)


@dataclass(frozen=True)
class CellCoord:
    """0-based (row, col) address of one table cell."""

    row: int
    col: int

    def as_tuple(self) -> tuple[int, int]:
        return (self.row, self.col)


@dataclass
class Table:
    """A rectangular grid of verbatim cell strings with named columns.

    ``column_types`` is filled in by the text pipeline
    (:func:`tgqa.text.infer_column_type`); it defaults to all-TEXT.
    """

    table_id: str
    column_names: list[str]
    cells: list[list[str]]
    column_types: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.column_names:
            raise InvalidTableError(f"table {self.table_id!r} has no columns")
        if not self.cells:
            raise InvalidTableError(f"table {self.table_id!r} has no rows")
        n_cols = len(self.column_names)
        for i, row in enumerate(self.cells):
            if len(row) != n_cols:
                raise InvalidTableError(
                    f"table {self.table_id!r} row {i} has {len(row)} cells, expected {n_cols}"
                )
        if not self.column_types:
            self.column_types = [ColumnType.TEXT] * n_cols
        elif len(self.column_types) != n_cols:
            raise InvalidTableError(
                f"table {self.table_id!r} has {len(self.column_types)} column types, expected {n_cols}"
            )

    @property
    def n_rows(self) -> int:
        return len(self.cells)

    @property
    def n_cols(self) -> int:
        return len(self.column_names)

    @property
    def n_cells(self) -> int:
        return self.n_rows * self.n_cols

    def cell_text(self, coord: CellCoord) -> str:
        self._check_coord(coord)
        return self.cells[coord.row][coord.col]

    def column_cells(self, col: int) -> list[str]:
        if not 0 <= col < self.n_cols:
            raise InvalidSelectionError(f"column {col} out of range for table {self.table_id!r}")
        return [row[col] for row in self.cells]

    def _check_coord(self, coord: CellCoord) -> None:
        if not (0 <= coord.row < self.n_rows and 0 <= coord.col < self.n_cols):
            raise InvalidSelectionError(
                f"cell ({coord.row}, {coord.col}) out of range for "
                f"{self.n_rows}x{self.n_cols} table {self.table_id!r}"
            )


@dataclass
class QuestionTurn:
    """One question in a conversation, with its gold answer cells.

    ``non_rectangular`` marks gold answers whose coordinates are not a full
    columns-x-rows cross product; such turns cannot be matched exactly by a
    column/row selection and count as errors. ``answer_text_mismatch`` marks
    turns where the dataset's answer texts disagree with the texts found at
    the answer coordinates (known dataset noise; both are retained).
    """

    position: int
    text: str
    gold_answers: list[CellCoord]
    gold_answer_texts: list[str] = field(default_factory=list)
    non_rectangular: bool = False
    answer_text_mismatch: bool = False

    def __post_init__(self) -> None:
        if self.position < 1:
            raise InvalidSelectionError(f"turn position must be >= 1, got {self.position}")


@dataclass
class Conversation:
    """An ordered sequence of question turns about a single table."""

    sequence_id: str
    table_id: str
    turns: list[QuestionTurn]

    def __post_init__(self) -> None:
        positions = [t.position for t in self.turns]
        if positions != list(range(1, len(positions) + 1)):
            raise InvalidSelectionError(
                f"sequence {self.sequence_id!r} has non-consecutive turn positions {positions}"
            )


@dataclass(frozen=True)
class AnswerSelection:
    """The decoder's output space: an ordered set of columns plus rows.

    The answered cells are the cross product of the two index lists.
    """

    columns: tuple[int, ...]
    rows: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(set(self.columns)) != len(self.columns):
            raise InvalidSelectionError(f"duplicate column indexes in {self.columns}")
        if len(set(self.rows)) != len(self.rows):
            raise InvalidSelectionError(f"duplicate row indexes in {self.rows}")


@dataclass
class PredictionRecord:
    """One evaluated question: what the model said and whether it was right."""

    sequence_id: str
    position: int
    predicted: AnswerSelection
    predicted_cells: list[CellCoord]
    predicted_texts: list[str]
    correct: bool


def selection_to_cells(sel: AnswerSelection, table: Table) -> list[CellCoord]:
    """Expand a column/row selection into cell coordinates.

    The result enumerates selected rows in order, and within each row the
    selected columns in order (row-major over the selection).
    """
    for col in sel.columns:
        if not 0 <= col < table.n_cols:
            raise InvalidSelectionError(
                f"column {col} out of range for table {table.table_id!r}"
            )
    for row in sel.rows:
        if not 0 <= row < table.n_rows:
            raise InvalidSelectionError(f"row {row} out of range for table {table.table_id!r}")
    return [CellCoord(row, col) for row in sel.rows for col in sel.columns]


def answer_texts(cells: list[CellCoord], table: Table, dedupe: bool = False) -> list[str]:
    """Read the texts at the given coordinates, in order.

    With ``dedupe`` the first occurrence of each text is kept and later
    duplicates dropped, preserving order.
    """
    texts = [table.cell_text(c) for c in cells]
    if not dedupe:
        return texts
    seen: set[str] = set()
    out: list[str] = []
    for t in texts:
        if t not in seen:
            seen.add(t)
            out.append(t)
    return out


def selection_from_cells(cells: list[CellCoord]) -> tuple[AnswerSelection, bool]:
    """Derive the (unique columns, unique rows) selection covering gold cells.

    Returns the selection and whether the gold set was a full cross product
    of those columns and rows (rectangular). Non-rectangular answers cannot
    be reproduced exactly by any selection.
    """
    cols = sorted({c.col for c in cells})
    rows = sorted({c.row for c in cells})
    sel = AnswerSelection(columns=tuple(cols), rows=tuple(rows))
    rectangular = len(set(c.as_tuple() for c in cells)) == len(cols) * len(rows)
    return sel, rectangular
