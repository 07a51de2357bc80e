// Thin typed client over the server's HTTP/JSON contract. The fetch
// implementation is injectable so tests can run without a network.

export interface TableSummary {
  table_id: string;
  n_rows: number;
  n_cols: number;
}

export interface TableGrid {
  table_id: string;
  columns: string[];
  rows: string[][];
}

export interface AnswerCell {
  row: number;
  col: number;
  text: string;
}

export interface AskResponse {
  turn: number;
  columns: number[];
  rows: number[];
  cells: AnswerCell[];
}

export interface GraphNode {
  kind: string;
  text?: string;
  rows?: number[];
  column?: number;
  answer_flags?: string[];
  [key: string]: unknown;
}

export interface GraphDump {
  nodes: GraphNode[];
  edges: [number, number, string][];
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function readError(res: Response): Promise<string> {
  try {
    const body = await res.json();
    return body.detail ?? body.error ?? res.statusText;
  } catch {
    return res.statusText;
  }
}

export class TgqaClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const res = await this.fetchFn(`${this.baseUrl}${path}`, {
      method,
      headers: body === undefined ? undefined : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!res.ok) {
      throw new Error(await readError(res));
    }
    return res.json() as Promise<T>;
  }

  listTables(): Promise<{ tables: TableSummary[] }> {
    return this.request("GET", "/tables");
  }

  getTable(tableId: string): Promise<TableGrid> {
    return this.request("GET", `/tables/${tableId}`);
  }

  createSession(tableId: string): Promise<{ session_id: string }> {
    return this.request("POST", "/sessions", { table_id: tableId });
  }

  createInlineSession(columns: string[], rows: string[][]): Promise<{ session_id: string }> {
    return this.request("POST", "/sessions", { table: { columns, rows } });
  }

  ask(sessionId: string, question: string): Promise<AskResponse> {
    return this.request("POST", `/sessions/${sessionId}/ask`, { question });
  }

  reset(sessionId: string): Promise<{ ok: boolean }> {
    return this.request("POST", `/sessions/${sessionId}/reset`);
  }

  deleteSession(sessionId: string): Promise<{ ok: boolean }> {
    return this.request("DELETE", `/sessions/${sessionId}`);
  }

  debugGraph(sessionId: string): Promise<GraphDump> {
    return this.request("GET", `/sessions/${sessionId}/debug/graph`);
  }
}
