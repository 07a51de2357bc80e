"""Small built-in corpora: desk-scale conversations for overfit runs & demos.

The first table is the medal-count example with its canonical three-turn
conversation; the remaining tables are generated with an entity column and
two numeric columns, and their conversations exercise column matching,
numeric comparison against a question number, and previous-answer filtering.
"""

from __future__ import annotations

import random
from typing import Optional

from .tables import CellCoord, Conversation, QuestionTurn, Table

_ENTITY_COLUMNS = ["team", "player", "city", "club", "house", "crew", "guild"]
_METRIC_COLUMNS = ["points", "coins", "stars", "wins", "goals", "medals", "tokens"]
_ENTITY_NAMES = [
    "alder", "birch", "cedar", "maple", "rowan", "aspen", "willow", "hazel",
    "linden", "poplar", "walnut", "laurel",
]
_NUMBER_WORDS = {
    0: "zero", 1: "one", 2: "two", 3: "three", 4: "four", 5: "five",
    6: "six", 7: "seven", 8: "eight", 9: "nine", 10: "ten",
}


def medals_table() -> Table:
    return Table(
        table_id="medals",
        column_names=["Rank", "Nation", "Gold", "Silver", "Bronze", "Total"],
        cells=[
            ["1", "Australia", "2", "1", "0", "3"],
            ["2", "Italy", "1", "1", "1", "3"],
            ["3", "Germany", "1", "0", "1", "2"],
            ["4", "Soviet Union", "1", "0", "0", "1"],
            ["5", "Switzerland", "0", "2", "1", "3"],
            ["6", "United States", "0", "1", "0", "1"],
            ["7", "Great Britain", "0", "0", "1", "1"],
            ["7", "France", "0", "0", "1", "1"],
        ],
    )


def medals_conversation(sequence_id: str = "medals-canonical") -> Conversation:
    """The three-question medal conversation with its gold cell answers."""
    nation_col = 1
    all_rows = list(range(8))
    gold_winners = [0, 1, 2, 3]  # gold >= 1
    more_than_one = [0]  # gold > 1
    turns = [
        QuestionTurn(1, "What are all the nations?",
                     [CellCoord(r, nation_col) for r in all_rows]),
        QuestionTurn(2, "Which won gold medals?",
                     [CellCoord(r, nation_col) for r in gold_winners]),
        QuestionTurn(3, "Which won more than one?",
                     [CellCoord(r, nation_col) for r in more_than_one]),
    ]
    return Conversation(sequence_id=sequence_id, table_id="medals", turns=turns)


def _number_phrase(value: int) -> str:
    return _NUMBER_WORDS.get(value, str(value))


def _threshold_candidates(values: list[int]) -> list[int]:
    """Thresholds t >= 0 with at least one value strictly above t."""
    return sorted({v for v in values if any(w > v for w in values)} | ({0} if max(values) > 0 else set()))


def _comparison_conversation(
    table: Table,
    entity_col: int,
    metric_cols: list[int],
    sequence_id: str,
    rng: random.Random,
    plural: str,
) -> Optional[Conversation]:
    """all-entities / numeric-filter / filter-within-previous three turns."""
    n_rows = table.n_rows
    col_values = {c: [int(table.cells[r][c]) for r in range(n_rows)] for c in metric_cols}

    first_col = rng.choice(metric_cols)
    candidates = _threshold_candidates(col_values[first_col])
    if not candidates:
        return None
    k = rng.choice(candidates)
    second_rows = [r for r in range(n_rows) if col_values[first_col][r] > k]
    if not second_rows or len(second_rows) == n_rows:
        return None

    followup_options = []
    for col in metric_cols:
        if col == first_col:
            continue
        subset = [col_values[col][r] for r in second_rows]
        for t in _threshold_candidates(subset):
            kept = [r for r in second_rows if col_values[col][r] > t]
            if kept and len(kept) < len(second_rows):
                followup_options.append((col, t, kept))
    if not followup_options:
        return None
    second_col, j, third_rows = rng.choice(followup_options)

    first_name = table.column_names[first_col].lower()
    second_name = table.column_names[second_col].lower()
    turns = [
        QuestionTurn(1, f"what are all the {plural}?",
                     [CellCoord(r, entity_col) for r in range(n_rows)]),
        QuestionTurn(2, f"which have more than {_number_phrase(k)} {first_name}?",
                     [CellCoord(r, entity_col) for r in second_rows]),
        QuestionTurn(3, f"which of those have more than {_number_phrase(j)} {second_name}?",
                     [CellCoord(r, entity_col) for r in third_rows]),
    ]
    return Conversation(sequence_id=sequence_id, table_id=table.table_id, turns=turns)


def _generate_table(index: int, rng: random.Random) -> tuple[Table, int, list[int], str]:
    entity_name = _ENTITY_COLUMNS[index % len(_ENTITY_COLUMNS)]
    metrics = rng.sample(_METRIC_COLUMNS, 2)
    n_rows = rng.randint(4, 7)
    names = rng.sample(_ENTITY_NAMES, n_rows)
    cells = [
        [names[r], str(rng.randint(0, 9)), str(rng.randint(0, 9))]
        for r in range(n_rows)
    ]
    table = Table(
        table_id=f"toy-{index}",
        column_names=[entity_name, metrics[0], metrics[1]],
        cells=cells,
    )
    return table, 0, [1, 2], entity_name + "s"


def build_synthetic_corpus(
    n_tables: int = 8,
    conversations_per_table: int = 4,
    seed: int = 13,
) -> tuple[list[Conversation], dict[str, Table]]:
    """Overfit corpus: medals plus generated tables, 3-turn conversations."""
    rng = random.Random(seed)
    tables: dict[str, Table] = {"medals": medals_table()}
    conversations: list[Conversation] = [medals_conversation()]

    medals = tables["medals"]
    count = 1
    while count < conversations_per_table:
        conv = _comparison_conversation(
            medals, 1, [2, 3, 5], f"medals-gen-{count}", rng, "nations"
        )
        if conv is not None:
            conversations.append(conv)
            count += 1

    for index in range(1, n_tables):
        while True:
            table, entity_col, metric_cols, plural = _generate_table(index, rng)
            convs = []
            attempts = 0
            while len(convs) < conversations_per_table and attempts < 50:
                conv = _comparison_conversation(
                    table, entity_col, metric_cols,
                    f"{table.table_id}-c{len(convs)}", rng, plural,
                )
                if conv is not None:
                    convs.append(conv)
                attempts += 1
            if len(convs) == conversations_per_table:
                tables[table.table_id] = table
                conversations.extend(convs)
                break
    return conversations, tables


def build_context_task(
    n_tables: int = 4,
    n_rows: int = 4,
    n_eval: int = 200,
    seed: int = 29,
) -> tuple[list[Conversation], list[Conversation], dict[str, Table]]:
    """Follow-up task solvable only from previous-answer marking.

    Turn 1 names an item ("pick maple"), answerable from the question text;
    turn 2 asks "which of those is marked?", identical across examples, so
    its only usable signal is the previous answer's context flags. Eval
    conversations draw the picked row uniformly at random.
    """
    rng = random.Random(seed)
    tables: dict[str, Table] = {}
    for t in range(n_tables):
        names = rng.sample(_ENTITY_NAMES, n_rows)
        tables[f"ctx-{t}"] = Table(
            table_id=f"ctx-{t}",
            column_names=["item", "tag"],
            cells=[[names[r], "x"] for r in range(n_rows)],
        )

    def conversation(table: Table, row: int, sequence_id: str) -> Conversation:
        name = table.cells[row][0]
        return Conversation(
            sequence_id=sequence_id,
            table_id=table.table_id,
            turns=[
                QuestionTurn(1, f"pick {name}", [CellCoord(row, 0)]),
                QuestionTurn(2, "which of those is marked?", [CellCoord(row, 0)]),
            ],
        )

    train_convs = [
        conversation(tables[f"ctx-{t}"], r, f"ctx-train-{t}-{r}")
        for t in range(n_tables)
        for r in range(n_rows)
    ]
    eval_convs = []
    for i in range(n_eval):
        t = rng.randrange(n_tables)
        r = rng.randrange(n_rows)
        eval_convs.append(conversation(tables[f"ctx-{t}"], r, f"ctx-eval-{i}-{t}-{r}"))
    return train_convs, eval_convs, tables
