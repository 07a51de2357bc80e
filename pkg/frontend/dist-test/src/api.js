// Thin typed client over the server's HTTP/JSON contract. The fetch
// implementation is injectable so tests can run without a network.
async function readError(res) {
    try {
        const body = await res.json();
        return body.detail ?? body.error ?? res.statusText;
    }
    catch {
        return res.statusText;
    }
}
export class TgqaClient {
    constructor(baseUrl = "", fetchFn = (input, init) => fetch(input, init)) {
        this.baseUrl = baseUrl;
        this.fetchFn = fetchFn;
    }
    async request(method, path, body) {
        const res = await this.fetchFn(`${this.baseUrl}${path}`, {
            method,
            headers: body === undefined ? undefined : { "Content-Type": "application/json" },
            body: body === undefined ? undefined : JSON.stringify(body),
        });
        if (!res.ok) {
            throw new Error(await readError(res));
        }
        return res.json();
    }
    listTables() {
        return this.request("GET", "/tables");
    }
    getTable(tableId) {
        return this.request("GET", `/tables/${tableId}`);
    }
    createSession(tableId) {
        return this.request("POST", "/sessions", { table_id: tableId });
    }
    createInlineSession(columns, rows) {
        return this.request("POST", "/sessions", { table: { columns, rows } });
    }
    ask(sessionId, question) {
        return this.request("POST", `/sessions/${sessionId}/ask`, { question });
    }
    reset(sessionId) {
        return this.request("POST", `/sessions/${sessionId}/reset`);
    }
    deleteSession(sessionId) {
        return this.request("DELETE", `/sessions/${sessionId}`);
    }
    debugGraph(sessionId) {
        return this.request("GET", `/sessions/${sessionId}/debug/graph`);
    }
}
