import { TgqaClient } from "./api.js";
import { renderDebugGraph, renderGrid, renderTranscript, setPending } from "./render.js";
import { askFailed, askStarted, askSucceeded, initialState, parseCsvGrid, sessionReset, tableLoaded, } from "./state.js";
const client = new TgqaClient("");
let state = initialState();
let debugVisible = false;
function el(id) {
    const node = document.getElementById(id);
    if (!node) {
        throw new Error(`missing element #${id}`);
    }
    return node;
}
function redraw() {
    renderGrid(el("grid"), state);
    renderTranscript(el("transcript"), state);
    setPending(el("ask-form"), state.pending);
}
async function refreshDebug() {
    const panel = el("debug-panel");
    if (!debugVisible || !state.sessionId || state.transcript.length === 0) {
        renderDebugGraph(panel, null);
        return;
    }
    try {
        renderDebugGraph(panel, await client.debugGraph(state.sessionId));
    }
    catch (err) {
        panel.textContent = `debug graph unavailable: ${err.message}`;
    }
}
async function loadTable(tableId) {
    try {
        const [grid, session] = [await client.getTable(tableId), await client.createSession(tableId)];
        state = tableLoaded(state, tableId, grid.columns, grid.rows, session.session_id);
    }
    catch (err) {
        state = askFailed(state, err.message);
    }
    redraw();
    await refreshDebug();
}
async function populateTables() {
    const select = el("table-select");
    try {
        const { tables } = await client.listTables();
        select.innerHTML = "";
        for (const table of tables) {
            const option = document.createElement("option");
            option.value = table.table_id;
            option.textContent = `${table.table_id} (${table.n_rows}x${table.n_cols})`;
            select.appendChild(option);
        }
        if (tables.length > 0) {
            await loadTable(tables[0].table_id);
        }
    }
    catch (err) {
        el("transcript").textContent = `cannot list tables: ${err.message}`;
    }
}
async function submitQuestion(question) {
    const next = askStarted(state, question);
    if (!next) {
        return;
    }
    state = next;
    redraw();
    try {
        const response = await client.ask(state.sessionId, question);
        state = askSucceeded(state, question, response);
        el("question-input").value = "";
    }
    catch (err) {
        state = askFailed(state, err.message);
    }
    redraw();
    await refreshDebug();
}
function wire() {
    el("ask-form").addEventListener("submit", (event) => {
        event.preventDefault();
        void submitQuestion(el("question-input").value);
    });
    el("reset-button").addEventListener("click", () => {
        if (!state.sessionId) {
            return;
        }
        void client.reset(state.sessionId).then(() => {
            state = sessionReset(state);
            redraw();
            return refreshDebug();
        });
    });
    el("table-select").addEventListener("change", (event) => {
        void loadTable(event.target.value);
    });
    el("debug-toggle").addEventListener("click", () => {
        debugVisible = !debugVisible;
        void refreshDebug();
    });
    el("csv-load").addEventListener("click", () => {
        void loadPastedCsv(el("csv-input").value);
    });
    void populateTables();
}
async function loadPastedCsv(text) {
    const errorBox = el("csv-error");
    const parsed = parseCsvGrid(text);
    if ("error" in parsed) {
        errorBox.textContent = parsed.error;
        return;
    }
    try {
        const session = await client.createInlineSession(parsed.columns, parsed.rows);
        state = tableLoaded(state, "pasted table", parsed.columns, parsed.rows, session.session_id);
        errorBox.textContent = "";
    }
    catch (err) {
        errorBox.textContent = err.message;
    }
    redraw();
    await refreshDebug();
}
document.addEventListener("DOMContentLoaded", wire);
