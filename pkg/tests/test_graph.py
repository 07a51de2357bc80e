import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_force_label_matrix, dense_rank_oracle, ned_oracle, random_question, random_table
from tgqa.errors import InvalidTableError
from tgqa.graph import (
    ANSWER_CELL,
    ANSWER_COLUMN,
    ANSWER_ROW,
    CELL_TO_COLUMN,
    CELL_TO_ROW,
    COLUMN_TO_CELL,
    GraphOptions,
    NO_EDGE,
    NUM_EQUAL,
    NUM_GREATER,
    NUM_LESSER,
    NodeKind,
    QUESTION_TO_TABLE,
    ROW_TO_CELL,
    SELF,
    TABLE_TO_QUESTION,
    align_question_to_table,
    build_graph,
    label_from_name,
    label_name,
    mark_previous_answers,
    normalized_edit_distance,
    rank_features,
    rel_pos_label,
    similarity_bin,
)
from tgqa.tables import CellCoord, ColumnType, Table
from tgqa.text import annotate_column_types, build_vocab, normalize_tokenize, parse_numeric_spans


def _graph_for(table, question, vocab=None, prev=None, options=GraphOptions()):
    vocab = vocab or build_vocab(normalize_tokenize(question))
    tokens = normalize_tokenize(question)
    spans = parse_numeric_spans(tokens)
    return build_graph(table, tokens, spans, vocab, prev_cells=prev, options=options)


class TestEditDistance:
    def test_identical(self):
        assert normalized_edit_distance("floors", "floors") == 0.0

    def test_nations_nation(self):
        assert normalized_edit_distance("nations", "nation") == pytest.approx(1 / 7)

    def test_disjoint(self):
        assert normalized_edit_distance("a", "xyz") == 1.0

    def test_both_empty(self):
        assert normalized_edit_distance("", "") == 0.0

    @given(st.text(max_size=12), st.text(max_size=12))
    @settings(max_examples=200)
    def test_matches_dp_oracle(self, v, w):
        assert normalized_edit_distance(v, w) == ned_oracle(v, w)

    @given(st.text(max_size=12), st.text(max_size=12))
    def test_symmetric_and_bounded(self, v, w):
        d = normalized_edit_distance(v, w)
        assert 0.0 <= d <= 1.0
        assert d == normalized_edit_distance(w, v)


class TestAlignment:
    def test_gold_column_exact_match(self):
        links = align_question_to_table(["which", "won", "gold", "medals"], [(0, "gold")])
        assert len(links) == 1
        link = links[0]
        assert (link.token_start, link.token_end) == (2, 3)
        assert link.similarity == 1.0
        assert link.bin == 5

    def test_below_threshold_no_link(self):
        # 1 - ned("rank", "france") = 1 - 5/6 < 0.5
        assert align_question_to_table(["rank"], [(0, "france")]) == []

    def test_boundary_half_excluded(self):
        # ned("ab", "ax") = 1/2 puts similarity exactly at 0.5: no link.
        assert align_question_to_table(["ab"], [(0, "ax")]) == []

    def test_plural_column_match(self):
        links = align_question_to_table(["what", "are", "the", "nations"], [(7, "nation")])
        assert links and links[0].target_node == 7
        assert links[0].similarity == pytest.approx(6 / 7)

    def test_multiword_span(self):
        links = align_question_to_table(
            ["find", "soviet", "union", "now"], [(3, "soviet union")]
        )
        assert (links[0].token_start, links[0].token_end) == (1, 3)

    def test_similarity_bins(self):
        assert similarity_bin(0.51) == 1
        assert similarity_bin(0.6) == 1
        assert similarity_bin(0.601) == 2
        assert similarity_bin(0.7) == 2
        assert similarity_bin(0.95) == 5
        assert similarity_bin(1.0) == 5


class TestRankFeatures:
    def test_medals_gold_column(self, medals):
        pairs = rank_features(medals.column_cells(2), ColumnType.NUMBER)
        assert [p[0] for p in pairs] == [3, 2, 2, 2, 1, 1, 1, 1]
        assert [p[1] for p in pairs] == [1, 2, 2, 2, 3, 3, 3, 3]

    def test_singleton(self):
        assert rank_features(["7"], ColumnType.NUMBER) == [(1, 1)]

    def test_empty_cells_skipped(self):
        assert rank_features(["5", "", "3"], ColumnType.NUMBER) == [(2, 1), None, (1, 2)]

    def test_text_column_gets_none(self):
        assert rank_features(["a", "b"], ColumnType.TEXT) == [None, None]

    def test_date_ranks(self):
        pairs = rank_features(["1999", "1986-present", "March 5 1999"], ColumnType.DATE)
        assert [p[0] for p in pairs] == [2, 1, 3]

    @given(st.lists(st.integers(0, 20).map(str), min_size=1, max_size=12))
    def test_rank_plus_inverse_invariant(self, cells):
        pairs = rank_features(cells, ColumnType.NUMBER)
        distinct = len(set(cells))
        for pair in pairs:
            assert pair is not None
            assert pair[0] + pair[1] == distinct + 1

    @given(st.lists(st.integers(0, 9), min_size=1, max_size=10))
    def test_matches_sort_oracle(self, values):
        cells = [str(v) for v in values]
        expected = dense_rank_oracle([float(v) for v in values])
        assert rank_features(cells, ColumnType.NUMBER) == expected


class TestBuildGraph:
    def test_medals_node_census(self, medals, small_vocab):
        g = _graph_for(medals, "which won gold medals", small_vocab)
        kinds = {}
        for node in g.nodes:
            kinds[node.kind] = kinds.get(node.kind, 0) + 1
        assert kinds[NodeKind.COLUMN] == 6
        assert kinds[NodeKind.ROW] == 8
        # Distinct texts per column: 7 + 8 + 3 + 3 + 2 + 3.
        assert kinds[NodeKind.CELL] == 26
        assert kinds[NodeKind.QUESTION] == 1
        assert kinds[NodeKind.TOKEN] == 4

    def test_collapsed_cells_share_one_node(self):
        table = Table(
            table_id="t",
            column_names=["City", "Year"],
            cells=[["Toronto", "1990"], ["Toronto", "1991"], ["Montreal", "1990"]],
        )
        annotate_column_types(table)
        g = _graph_for(table, "which city")
        city_cells = [n for n in g.nodes if n.kind == NodeKind.CELL and n.column_index == 0]
        assert len(city_cells) == 2
        toronto = next(n for n in city_cells if n.text == "Toronto")
        assert toronto.row_indexes == (0, 1)

    def test_one_by_one_table(self):
        table = Table(table_id="t", column_names=["name"], cells=[["alpha"]])
        annotate_column_types(table)
        g = _graph_for(table, "alpha")
        assert g.n_nodes == 5
        labels = g.edge_labels
        assert all(labels[i, i] == SELF for i in range(5))
        col, row, cell, q, tok = 0, 1, 2, 3, 4
        assert labels[col, cell] == COLUMN_TO_CELL and labels[cell, col] == CELL_TO_COLUMN
        assert labels[row, cell] == ROW_TO_CELL and labels[cell, row] == CELL_TO_ROW
        assert labels[q, tok] == QUESTION_TO_TABLE and labels[tok, q] == TABLE_TO_QUESTION
        assert labels[q, cell] == QUESTION_TO_TABLE and labels[q, col] == QUESTION_TO_TABLE
        assert labels[q, row] == NO_EDGE and labels[row, q] == NO_EDGE

    def test_zero_size_rejected(self, small_vocab):
        with pytest.raises(InvalidTableError):
            Table(table_id="t", column_names=[], cells=[])

    def test_question_links_exclude_rows(self, medals, small_vocab):
        g = _graph_for(medals, "which won gold medals", small_vocab)
        q = g.question_node
        for row_node in g.row_nodes:
            assert g.edge_labels[q, row_node] == NO_EDGE
        for col_node in g.column_nodes:
            assert g.edge_labels[q, col_node] == QUESTION_TO_TABLE

    def test_rel_pos_clipping(self, medals, small_vocab):
        g = _graph_for(medals, "which won gold medals", small_vocab)
        t = g.token_nodes
        assert g.edge_labels[t[0], t[1]] == rel_pos_label(1, 6)
        assert g.edge_labels[t[1], t[0]] == rel_pos_label(-1, 6)
        long_q = " ".join(f"w{i}" for i in range(10))
        vocab = build_vocab(normalize_tokenize(long_q))
        g2 = _graph_for(medals, long_q, vocab)
        t2 = g2.token_nodes
        assert g2.edge_labels[t2[0], t2[9]] == rel_pos_label(6, 6)

    def test_numeric_edges_medals(self, medals, small_vocab):
        g = _graph_for(medals, "which won more than one", small_vocab)
        assert len(g.qnumber_nodes) == 1
        qn = g.qnumber_nodes[0]
        by_value = {}
        for idx, node in enumerate(g.nodes):
            if node.kind == NodeKind.CELL and node.column_index == 2:
                by_value[node.text] = g.edge_labels[qn, idx]
        assert by_value["2"] == NUM_GREATER
        assert by_value["1"] == NUM_EQUAL
        assert by_value["0"] == NUM_LESSER
        numeric = (NUM_LESSER, NUM_GREATER, NUM_EQUAL)
        for idx in range(g.n_nodes):
            if g.edge_labels[qn, idx] in numeric or g.edge_labels[idx, qn] in numeric:
                assert g.edge_labels[qn, idx] == g.edge_labels[idx, qn]

    def test_numeric_edges_skip_text_columns(self, medals, small_vocab):
        g = _graph_for(medals, "which won more than one", small_vocab)
        qn = g.qnumber_nodes[0]
        for idx, node in enumerate(g.nodes):
            if node.kind == NodeKind.CELL and node.column_index == 1:
                assert g.edge_labels[qn, idx] == NO_EDGE

    def test_number_question_vs_date_column_no_edges(self):
        table = Table(table_id="t", column_names=["year"], cells=[["1999"], ["2001"]])
        annotate_column_types(table)
        assert table.column_types == [ColumnType.DATE]
        g = _graph_for(table, "more than five")
        assert g.qnumber_nodes
        assert not np.isin(g.edge_labels, [NUM_LESSER, NUM_GREATER, NUM_EQUAL]).any()

    def test_alignment_feature_binned(self, medals, small_vocab):
        g = _graph_for(medals, "which won gold medals", small_vocab)
        gold_col = g.nodes[g.column_nodes[2]]
        assert gold_col.alignment_bin == 5
        tok_gold = g.token_nodes[2]
        assert g.edge_labels[tok_gold, g.column_nodes[2]] == QUESTION_TO_TABLE
        assert g.edge_labels[g.column_nodes[2], tok_gold] == TABLE_TO_QUESTION

    def test_numeric_ablation_removes_everything(self, medals, small_vocab):
        options = GraphOptions(numeric_relations=False)
        g = _graph_for(medals, "which won more than one", small_vocab, options=options)
        assert g.qnumber_nodes == []
        assert not np.isin(g.edge_labels, [NUM_LESSER, NUM_GREATER, NUM_EQUAL]).any()
        for node in g.nodes:
            assert node.rank is None and node.inverse_rank is None

    def test_pointable_covers_columns_and_rows(self, medals, small_vocab):
        g = _graph_for(medals, "which won gold medals", small_vocab)
        assert len(g.pointable) == 6 + 8
        for idx in g.pointable:
            assert g.nodes[idx].kind in (NodeKind.COLUMN, NodeKind.ROW)


class TestMarkPreviousAnswers:
    def test_first_turn_no_flags(self, medals, small_vocab):
        g = _graph_for(medals, "what are all the nations", small_vocab)
        assert all(not n.answer_flags for n in g.nodes)

    def test_flags_rows_columns_cells(self, medals, small_vocab):
        prev = [CellCoord(r, 1) for r in range(4)]
        g = _graph_for(medals, "which won more than one", small_vocab, prev=prev)
        for r in range(8):
            flags = g.nodes[g.row_nodes[r]].answer_flags
            assert (ANSWER_ROW in flags) == (r < 4)
        assert ANSWER_COLUMN in g.nodes[g.column_nodes[1]].answer_flags
        assert ANSWER_COLUMN not in g.nodes[g.column_nodes[2]].answer_flags
        flagged_cells = [n for n in g.nodes if ANSWER_CELL in n.answer_flags]
        assert sorted(n.text for n in flagged_cells) == [
            "Australia", "Germany", "Italy", "Soviet Union"
        ]

    def test_collapsed_node_flagged_on_any_coverage(self):
        table = Table(table_id="t", column_names=["city"], cells=[["Toronto"], ["Toronto"]])
        annotate_column_types(table)
        vocab = build_vocab(["toronto"])
        g = _graph_for(table, "which city", vocab, prev=[CellCoord(0, 0)])
        cell = next(n for n in g.nodes if n.kind == NodeKind.CELL)
        assert ANSWER_CELL in cell.answer_flags

    def test_marking_disabled_option(self, medals, small_vocab):
        options = GraphOptions(context_marking=False)
        prev = [CellCoord(0, 1)]
        g = _graph_for(medals, "which won more than one", small_vocab, prev=prev, options=options)
        assert all(not n.answer_flags for n in g.nodes)

    def test_mark_is_feature_only(self, medals, small_vocab):
        bare = _graph_for(medals, "which won gold medals", small_vocab)
        before = bare.edge_labels.copy()
        mark_previous_answers(bare, [CellCoord(r, 1) for r in range(8)])
        assert np.array_equal(before, bare.edge_labels)


class TestLabelNames:
    def test_roundtrip_fixed(self):
        for label in (SELF, NO_EDGE, COLUMN_TO_CELL, NUM_EQUAL):
            assert label_from_name(label_name(label, 6), 6) == label

    def test_roundtrip_rel_pos(self):
        for k in range(-6, 7):
            label = rel_pos_label(k, 6)
            assert label_from_name(label_name(label, 6), 6) == label


class TestStructuralInvariants:
    def _random_graph(self, rng):
        table = random_table(rng)
        tokens = random_question(rng)
        vocab = build_vocab(tokens)
        spans = parse_numeric_spans(tokens)
        prev = None
        if rng.random() < 0.5:
            prev = [CellCoord(rng.randrange(table.n_rows), rng.randrange(table.n_cols))]
        return build_graph(table, tokens, spans, vocab, prev_cells=prev), table

    def test_totality_and_direction_pairing(self):
        rng = random.Random(7)
        for _ in range(40):
            g, _ = self._random_graph(rng)
            labels = g.edge_labels
            n = g.n_nodes
            assert labels.shape == (n, n)
            assert (np.diag(labels) == SELF).all()
            pair = {COLUMN_TO_CELL: CELL_TO_COLUMN, ROW_TO_CELL: CELL_TO_ROW}
            for i in range(n):
                for j in range(n):
                    if labels[i, j] == COLUMN_TO_CELL:
                        assert labels[j, i] == CELL_TO_COLUMN
                    if labels[i, j] == ROW_TO_CELL:
                        assert labels[j, i] == CELL_TO_ROW

    def test_cell_node_count_matches_distinct_texts(self):
        rng = random.Random(11)
        for _ in range(40):
            g, table = self._random_graph(rng)
            from tgqa.text import normalize_join

            for c in range(table.n_cols):
                distinct = len({normalize_join(x) for x in table.column_cells(c)})
                cells = [n for n in g.nodes if n.kind == NodeKind.CELL and n.column_index == c]
                assert len(cells) == distinct

    def test_matches_brute_force_oracle(self):
        rng = random.Random(23)
        for _ in range(60):
            table = random_table(rng)
            tokens = random_question(rng)
            vocab = build_vocab(tokens)
            spans = parse_numeric_spans(tokens)
            g = build_graph(table, tokens, spans, vocab)
            expected = brute_force_label_matrix(table, tokens, spans)
            assert np.array_equal(g.edge_labels, expected)
