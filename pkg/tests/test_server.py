import json
import threading
import urllib.request

import pytest

from tgqa.errors import InvalidTableError, SessionError
from tgqa.network import ModelConfig, init_parameters
from tgqa.server import QaService, handle_request, serve
from tgqa.synthetic import medals_table
from tgqa.tables import AnswerSelection, selection_to_cells
from tgqa.text import build_vocab, corpus_tokens
from tgqa.training import Checkpoint

CFG = ModelConfig(num_layers=2, d_model=32, heads=4, dropout_p=0.0, indicator_dim=8)


@pytest.fixture
def service():
    table = medals_table()
    vocab = build_vocab(corpus_tokens(["which won gold medals"], [table]),
                        known_capacity=128, oov_bucket_count=32)
    checkpoint = Checkpoint(
        params=init_parameters(CFG, vocab, seed=0),
        model_config=CFG,
        vocab=vocab,
    )
    return QaService(checkpoint, {"medals": medals_table()})


class TestSessions:
    def test_create_and_distinct_ids(self, service):
        a = service.create_session(table_id="medals")
        b = service.create_session(table_id="medals")
        assert a != b

    def test_unknown_table(self, service):
        with pytest.raises(SessionError):
            service.create_session(table_id="nope")

    def test_inline_table_validated(self, service):
        with pytest.raises(InvalidTableError):
            service.create_session(inline_table={"columns": [], "rows": [["x"]]})

    def test_inline_table_usable(self, service):
        sid = service.create_session(inline_table={"columns": ["a"], "rows": [["1"], ["2"]]})
        payload = service.ask(sid, "what is a?")
        assert payload["turn"] == 1

    def test_must_give_exactly_one_source(self, service):
        with pytest.raises(InvalidTableError):
            service.create_session()
        with pytest.raises(InvalidTableError):
            service.create_session(table_id="medals", inline_table={"columns": ["a"], "rows": [["x"]]})


class TestAsk:
    def test_ask_is_deterministic(self, service):
        a = service.create_session(table_id="medals")
        b = service.create_session(table_id="medals")
        pa = service.ask(a, "which won gold medals?")
        pb = service.ask(b, "which won gold medals?")
        assert pa == pb

    def test_empty_question_rejected(self, service):
        sid = service.create_session(table_id="medals")
        with pytest.raises(SessionError):
            service.ask(sid, "   ")

    def test_unknown_session(self, service):
        with pytest.raises(SessionError):
            service.ask("missing", "q?")

    def test_cells_consistent_with_selection(self, service):
        sid = service.create_session(table_id="medals")
        payload = service.ask(sid, "which won gold medals?")
        sel = AnswerSelection(columns=tuple(payload["columns"]), rows=tuple(payload["rows"]))
        expected = selection_to_cells(sel, service.get_table("medals"))
        assert [(c["row"], c["col"]) for c in payload["cells"]] == [c.as_tuple() for c in expected]

    def test_first_ask_has_no_context_flags(self, service):
        sid = service.create_session(table_id="medals")
        service.ask(sid, "which won gold medals?")
        dump = service.debug_graph(sid)
        assert all("answer_flags" not in n for n in dump["nodes"])

    def test_second_ask_reflects_first_answer(self, service):
        sid = service.create_session(table_id="medals")
        first = service.ask(sid, "which won gold medals?")
        service.ask(sid, "which won more than one?")
        dump = service.debug_graph(sid)
        flagged_rows = [
            n["rows"][0] for n in dump["nodes"]
            if n["kind"] == "ROW" and "ANSWER_ROW" in n.get("answer_flags", [])
        ]
        assert sorted(flagged_rows) == sorted(set(first["rows"]))

    def test_session_isolation(self, service):
        a = service.create_session(table_id="medals")
        b = service.create_session(table_id="medals")
        serial = QaService(service.checkpoint, {"medals": medals_table()})
        sa = serial.create_session(table_id="medals")
        interleaved = [
            service.ask(a, "which won gold medals?"),
            service.ask(b, "what are all the nations?"),
            service.ask(a, "which won more than one?"),
        ]
        expected = [
            serial.ask(sa, "which won gold medals?"),
            serial.ask(sa, "which won more than one?"),
        ]
        assert interleaved[0]["cells"] == expected[0]["cells"]
        assert interleaved[2]["cells"] == expected[1]["cells"]

    def test_turn_counter(self, service):
        sid = service.create_session(table_id="medals")
        assert service.ask(sid, "a?")["turn"] == 1
        assert service.ask(sid, "b?")["turn"] == 2


class TestResetDelete:
    def test_reset_restores_turn_one(self, service):
        sid = service.create_session(table_id="medals")
        first = service.ask(sid, "which won gold medals?")
        service.ask(sid, "which won more than one?")
        service.reset_session(sid)
        again = service.ask(sid, "which won gold medals?")
        assert again == first

    def test_reset_idempotent(self, service):
        sid = service.create_session(table_id="medals")
        service.reset_session(sid)
        service.reset_session(sid)
        assert service.ask(sid, "a?")["turn"] == 1

    def test_delete_then_ask_fails(self, service):
        sid = service.create_session(table_id="medals")
        service.delete_session(sid)
        with pytest.raises(SessionError):
            service.ask(sid, "a?")

    def test_debug_before_ask_fails(self, service):
        sid = service.create_session(table_id="medals")
        with pytest.raises(SessionError):
            service.debug_graph(sid)


class TestHttpDispatch:
    def test_create_ask_reset_delete_flow(self, service):
        status, payload = handle_request(service, "POST", "/sessions", {"table_id": "medals"})
        assert status == 200
        sid = payload["session_id"]
        status, payload = handle_request(service, "POST", f"/sessions/{sid}/ask",
                                         {"question": "which won gold medals?"})
        assert status == 200 and payload["turn"] == 1
        status, _ = handle_request(service, "GET", f"/sessions/{sid}/debug/graph", None)
        assert status == 200
        status, _ = handle_request(service, "POST", f"/sessions/{sid}/reset", None)
        assert status == 200
        status, _ = handle_request(service, "DELETE", f"/sessions/{sid}", None)
        assert status == 200
        status, payload = handle_request(service, "POST", f"/sessions/{sid}/ask", {"question": "x"})
        assert status == 404 and payload["error"] == "session_error"

    def test_tables_listing_and_grid(self, service):
        status, payload = handle_request(service, "GET", "/tables", None)
        assert status == 200
        assert payload["tables"][0]["table_id"] == "medals"
        status, payload = handle_request(service, "GET", "/tables/medals", None)
        assert status == 200
        assert payload["columns"][1] == "Nation"
        assert len(payload["rows"]) == 8

    def test_invalid_inline_table_is_400(self, service):
        status, payload = handle_request(service, "POST", "/sessions",
                                         {"table": {"columns": [], "rows": [["x"]]}})
        assert status == 400 and payload["error"] == "invalid_request"

    def test_unknown_route_404(self, service):
        status, payload = handle_request(service, "GET", "/nope", None)
        assert status == 404

    def test_empty_question_400(self, service):
        _, created = handle_request(service, "POST", "/sessions", {"table_id": "medals"})
        status, payload = handle_request(
            service, "POST", f"/sessions/{created['session_id']}/ask", {"question": ""}
        )
        assert status == 400
        assert "detail" in payload


class TestLiveHttp:
    def test_round_trip_over_sockets(self, service, tmp_path):
        static = tmp_path / "static"
        static.mkdir()
        (static / "index.html").write_text("<html>ui</html>")
        httpd = serve(service, 0, static_dir=str(static))
        port = httpd.server_address[1]
        thread = threading.Thread(target=httpd.serve_forever, daemon=True)
        thread.start()
        try:
            def call(method, path, body=None):
                data = json.dumps(body).encode() if body is not None else None
                req = urllib.request.Request(
                    f"http://127.0.0.1:{port}{path}", data=data, method=method,
                    headers={"Content-Type": "application/json"},
                )
                with urllib.request.urlopen(req) as resp:
                    return resp.status, resp.read()

            status, body = call("POST", "/sessions", {"table_id": "medals"})
            assert status == 200
            sid = json.loads(body)["session_id"]
            status, body = call("POST", f"/sessions/{sid}/ask", {"question": "which won gold medals?"})
            assert status == 200
            payload = json.loads(body)
            assert {"turn", "columns", "rows", "cells"} <= set(payload)
            status, body = call("GET", "/")
            assert status == 200 and b"ui" in body
        finally:
            httpd.shutdown()
