import json

import pytest

from tgqa.errors import ConfigError, DataFormatError
from tgqa.sqa import (
    dump_graphs,
    expand_grid,
    load_config,
    load_split,
    load_table_csv,
    parse_coordinate_list,
    parse_text_list,
    read_graph_dump,
    write_rejects,
)
from tgqa.tables import CellCoord
from tgqa.text import build_vocab, corpus_tokens
from tgqa.training import ensure_column_types


class TestCoordinateParsing:
    def test_release_notation(self):
        coords = parse_coordinate_list("['(0, 1)', '(1, 1)']")
        assert coords == [CellCoord(0, 1), CellCoord(1, 1)]

    def test_whitespace_and_quote_variations(self):
        assert parse_coordinate_list('["(2,3)"]') == [CellCoord(2, 3)]
        assert parse_coordinate_list("[(0, 0)]") == [CellCoord(0, 0)]

    def test_no_coordinates_is_an_error(self):
        with pytest.raises(DataFormatError):
            parse_coordinate_list("[]")

    def test_text_list(self):
        assert parse_text_list("['Australia']") == ["Australia"]
        assert parse_text_list("['a', 'b']") == ["a", "b"]
        assert parse_text_list("plain text") == ["plain text"]


class TestTableCsv:
    def test_loads_medals(self, sqa_mini_dir):
        table = load_table_csv(sqa_mini_dir / "table_csv/medals.csv", "medals")
        assert table.n_rows == 8 and table.n_cols == 6
        assert table.cells[0][1] == "Australia"

    def test_short_rows_padded(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("a,b,c\n1,2\n")
        table = load_table_csv(path, "t")
        assert table.cells == [["1", "2", ""]]


class TestLoadSplit:
    def test_mini_fixture_counts(self, sqa_mini_dir):
        data = load_split(sqa_mini_dir / "train.tsv", sqa_mini_dir)
        manifest = json.loads((sqa_mini_dir / "manifest.json").read_text())
        assert data.stats.n_sequences == manifest["sequences"]
        assert data.stats.n_questions == manifest["questions"]
        assert data.rejects == []

    def test_positions_normalized_to_one_based(self, sqa_mini_dir):
        data = load_split(sqa_mini_dir / "train.tsv", sqa_mini_dir)
        for conv in data.conversations:
            assert [t.position for t in conv.turns] == list(range(1, len(conv.turns) + 1))

    def test_table_cache_shares_objects(self, sqa_mini_dir):
        data = load_split(sqa_mini_dir / "train.tsv", sqa_mini_dir)
        medals_convs = [c for c in data.conversations if c.table_id == "table_csv/medals.csv"]
        assert len(medals_convs) >= 2
        assert data.tables["table_csv/medals.csv"] is data.tables[medals_convs[0].table_id]

    def test_single_row_fixture(self, tmp_path, sqa_mini_dir):
        tsv = tmp_path / "train.tsv"
        tsv.write_text(
            "id\tannotator\tposition\tquestion\ttable_file\tanswer_coordinates\tanswer_text\n"
            "q-1\t0\t0\twhat is there?\ttable_csv/medals.csv\t\"['(0, 1)']\"\t['Australia']\n"
        )
        data = load_split(tsv, sqa_mini_dir)
        assert data.stats.n_sequences == 1
        assert data.conversations[0].turns[0].position == 1

    def _write_rows(self, tmp_path, rows):
        tsv = tmp_path / "train.tsv"
        header = "id\tannotator\tposition\tquestion\ttable_file\tanswer_coordinates\tanswer_text\n"
        tsv.write_text(header + "".join(rows))
        return tsv

    def test_missing_table_rejected(self, tmp_path, sqa_mini_dir):
        tsv = self._write_rows(tmp_path, [
            "q-1\t0\t0\tq?\ttable_csv/nope.csv\t\"['(0, 0)']\"\t['x']\n",
        ])
        data = load_split(tsv, sqa_mini_dir)
        assert data.stats.n_sequences == 0
        assert len(data.rejects) == 1
        assert "missing table" in data.rejects[0]["reason"]

    def test_bad_coordinates_rejected(self, tmp_path, sqa_mini_dir):
        tsv = self._write_rows(tmp_path, [
            "q-1\t0\t0\tq?\ttable_csv/medals.csv\tgarbage\t['x']\n",
        ])
        data = load_split(tsv, sqa_mini_dir)
        assert len(data.rejects) == 1

    def test_non_consecutive_positions_reject_whole_sequence(self, tmp_path, sqa_mini_dir):
        tsv = self._write_rows(tmp_path, [
            "q-1\t0\t0\ta?\ttable_csv/medals.csv\t\"['(0, 1)']\"\t['Australia']\n",
            "q-1\t0\t2\tb?\ttable_csv/medals.csv\t\"['(0, 1)']\"\t['Australia']\n",
        ])
        data = load_split(tsv, sqa_mini_dir)
        assert data.stats.n_sequences == 0
        assert len(data.rejects) == 2
        assert data.stats.n_rejected_rows == 2

    def test_out_of_range_coordinates_rejected(self, tmp_path, sqa_mini_dir):
        tsv = self._write_rows(tmp_path, [
            "q-1\t0\t0\tq?\ttable_csv/medals.csv\t\"['(9, 1)']\"\t['x']\n",
        ])
        data = load_split(tsv, sqa_mini_dir)
        assert len(data.rejects) == 1

    def test_strict_mode_raises(self, tmp_path, sqa_mini_dir):
        tsv = self._write_rows(tmp_path, [
            "q-1\t0\t0\tq?\ttable_csv/nope.csv\t\"['(0, 0)']\"\t['x']\n",
        ])
        with pytest.raises(DataFormatError):
            load_split(tsv, sqa_mini_dir, strict=True)

    def test_text_mismatch_flagged(self, tmp_path, sqa_mini_dir):
        tsv = self._write_rows(tmp_path, [
            "q-1\t0\t0\tq?\ttable_csv/medals.csv\t\"['(0, 1)']\"\t['Italy']\n",
        ])
        data = load_split(tsv, sqa_mini_dir)
        assert data.stats.n_text_mismatch == 1
        assert data.conversations[0].turns[0].answer_text_mismatch

    def test_non_rectangular_counted(self, tmp_path, sqa_mini_dir):
        tsv = self._write_rows(tmp_path, [
            "q-1\t0\t0\tq?\ttable_csv/medals.csv\t\"['(0, 1)', '(1, 2)']\"\t['Australia', '1']\n",
        ])
        data = load_split(tsv, sqa_mini_dir)
        assert data.stats.n_non_rectangular == 1

    def test_rejects_report_written(self, tmp_path, sqa_mini_dir):
        tsv = self._write_rows(tmp_path, [
            "q-1\t0\t0\tq?\ttable_csv/nope.csv\t\"['(0, 0)']\"\t['x']\n",
        ])
        data = load_split(tsv, sqa_mini_dir)
        out = tmp_path / "rejects.jsonl"
        write_rejects(data, out)
        entries = [json.loads(l) for l in out.read_text().splitlines()]
        assert entries[0]["line"] == 2


class TestDumpGraphs:
    def test_dump_schema_and_roundtrip(self, sqa_mini_dir, tmp_path):
        data = load_split(sqa_mini_dir / "train.tsv", sqa_mini_dir)
        ensure_column_types(data.tables)
        vocab = build_vocab(corpus_tokens(
            (t.text for c in data.conversations for t in c.turns), data.tables.values()
        ), known_capacity=256, oov_bucket_count=32)
        out = tmp_path / "graphs.jsonl"
        count = dump_graphs(data, vocab, out)
        assert count == data.stats.n_questions
        entries = read_graph_dump(out)
        assert len(entries) == count
        for entry in entries:
            assert {"sequence_id", "position", "table_id", "nodes", "edges"} <= set(entry)
            for i, j, name in entry["edges"]:
                assert name not in ("SELF", "NO_EDGE")
                assert 0 <= i < len(entry["nodes"]) and 0 <= j < len(entry["nodes"])

    def test_first_turn_has_no_answer_flags(self, sqa_mini_dir, tmp_path):
        data = load_split(sqa_mini_dir / "train.tsv", sqa_mini_dir)
        ensure_column_types(data.tables)
        vocab = build_vocab(["which"])
        out = tmp_path / "graphs.jsonl"
        dump_graphs(data, vocab, out)
        for entry in read_graph_dump(out):
            flagged = [n for n in entry["nodes"] if "answer_flags" in n]
            if entry["position"] == 1:
                assert flagged == []
            else:
                assert flagged

    def test_medals_alignment_edge_present(self, sqa_mini_dir, tmp_path):
        data = load_split(sqa_mini_dir / "train.tsv", sqa_mini_dir)
        ensure_column_types(data.tables)
        vocab = build_vocab(corpus_tokens(
            (t.text for c in data.conversations for t in c.turns), data.tables.values()
        ), known_capacity=256, oov_bucket_count=32)
        out = tmp_path / "graphs.jsonl"
        dump_graphs(data, vocab, out)
        turn2 = next(
            e for e in read_graph_dump(out)
            if e["sequence_id"] == "nt-100/0" and e["position"] == 2
        )
        nodes = turn2["nodes"]
        gold_token = next(i for i, n in enumerate(nodes)
                          if n["kind"] == "TOKEN" and n["text"] == "gold")
        gold_column = next(i for i, n in enumerate(nodes)
                           if n["kind"] == "COLUMN" and n["text"] == "Gold")
        assert [gold_token, gold_column, "QUESTION_TO_TABLE"] in turn2["edges"]

    def test_label_multiset_matches_in_memory_graph(self, sqa_mini_dir, tmp_path):
        from collections import Counter

        from tgqa.graph import build_graph, label_name, NO_EDGE, SELF
        from tgqa.text import normalize_tokenize, parse_numeric_spans

        data = load_split(sqa_mini_dir / "train.tsv", sqa_mini_dir)
        ensure_column_types(data.tables)
        vocab = build_vocab(["which"])
        out = tmp_path / "graphs.jsonl"
        dump_graphs(data, vocab, out)
        entries = read_graph_dump(out)
        conv = data.conversations[0]
        table = data.tables[conv.table_id]
        tokens = normalize_tokenize(conv.turns[0].text)
        graph = build_graph(table, tokens, parse_numeric_spans(tokens), vocab)
        expected = Counter(
            label_name(int(l), graph.rel_pos_clip)
            for l in graph.edge_labels.reshape(-1)
            if l not in (SELF, NO_EDGE)
        )
        entry = next(e for e in entries
                     if e["sequence_id"] == conv.sequence_id and e["position"] == 1)
        assert Counter(name for _, _, name in entry["edges"]) == expected


class TestLoadConfig:
    def _write(self, tmp_path, payload):
        path = tmp_path / "config.json"
        path.write_text(json.dumps(payload))
        return path

    def test_valid_config(self, tmp_path):
        path = self._write(tmp_path, {"dropout_p": 0.4, "num_layers": 3, "heads": 8})
        model, train, _ = load_config(path)
        assert model.dropout_p == 0.4 and model.num_layers == 3

    def test_heads_domain_rejected_naming_legal_set(self, tmp_path):
        path = self._write(tmp_path, {"heads": 5})
        with pytest.raises(ConfigError, match=r"\{4, 8, 16\}"):
            load_config(path)

    def test_missing_total_steps_defaults(self, tmp_path):
        path = self._write(tmp_path, {})
        _, train, _ = load_config(path)
        assert train.total_steps == 100_000

    def test_unknown_key_rejected(self, tmp_path):
        path = self._write(tmp_path, {"learning_rate_warmup": 5})
        with pytest.raises(ConfigError, match="unknown config keys"):
            load_config(path)

    def test_type_mismatch_rejected(self, tmp_path):
        path = self._write(tmp_path, {"num_layers": "three"})
        with pytest.raises(ConfigError):
            load_config(path)

    def test_desk_scale_relaxes_domains(self, tmp_path):
        path = self._write(tmp_path, {
            "desk_scale": True, "num_layers": 2, "d_model": 64, "heads": 4,
            "dropout_p": 0.0, "batch_size": 16,
        })
        model, train, _ = load_config(path)
        assert model.d_model == 64 and train.batch_size == 16

    def test_desk_scale_keeps_structural_checks(self, tmp_path):
        path = self._write(tmp_path, {"desk_scale": True, "d_model": 65, "heads": 4})
        with pytest.raises(ConfigError):
            load_config(path)

    def test_eval_fields(self, tmp_path):
        path = self._write(tmp_path, {"context_mode": "REFERENCE", "numeric_relations_enabled": False})
        _, _, eval_config = load_config(path)
        assert eval_config.context_mode == "REFERENCE"
        assert not eval_config.numeric_relations_enabled

    def test_warmup_domain(self, tmp_path):
        path = self._write(tmp_path, {"warmup_steps": 5000})
        with pytest.raises(ConfigError, match="warmup"):
            load_config(path)


def test_expand_grid():
    combos = expand_grid({"d_model": 128}, {"num_layers": [3, 4], "heads": [4, 8]})
    assert len(combos) == 4
    assert {c["num_layers"] for c in combos} == {3, 4}
    assert all(c["d_model"] == 128 for c in combos)
