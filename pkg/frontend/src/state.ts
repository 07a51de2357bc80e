// Session state as pure data plus transition functions. The UI renders from
// this alone, so replaying a transcript reproduces identical highlights and
// no answer can originate anywhere but a server response.

import type { AskResponse, AnswerCell } from "./api.js";

export interface TranscriptEntry {
  turn: number;
  question: string;
  cells: AnswerCell[];
  answerTexts: string[];
}

export interface UiSession {
  sessionId: string | null;
  tableId: string | null;
  columns: string[];
  grid: string[][];
  transcript: TranscriptEntry[];
  pending: boolean;
  error: string | null;
}

export function initialState(): UiSession {
  return {
    sessionId: null,
    tableId: null,
    columns: [],
    grid: [],
    transcript: [],
    pending: false,
    error: null,
  };
}

export function tableLoaded(
  state: UiSession,
  tableId: string,
  columns: string[],
  grid: string[][],
  sessionId: string,
): UiSession {
  // A new table replaces the grid and clears the conversation.
  return {
    ...initialState(),
    tableId,
    columns,
    grid,
    sessionId,
  };
}

export function askStarted(state: UiSession, question: string): UiSession | null {
  // Guard: one in-flight request per session, and no empty questions.
  if (state.pending || !state.sessionId || question.trim() === "") {
    return null;
  }
  return { ...state, pending: true, error: null };
}

export function askSucceeded(state: UiSession, question: string, response: AskResponse): UiSession {
  const entry: TranscriptEntry = {
    turn: response.turn,
    question,
    cells: response.cells,
    answerTexts: response.cells.map((c) => c.text),
  };
  return {
    ...state,
    pending: false,
    error: null,
    transcript: [...state.transcript, entry],
  };
}

export function askFailed(state: UiSession, message: string): UiSession {
  // The transcript is untouched so the user can retry the same question.
  return { ...state, pending: false, error: message };
}

export function sessionReset(state: UiSession): UiSession {
  return { ...state, transcript: [], pending: false, error: null };
}

function key(row: number, col: number): string {
  return `${row},${col}`;
}

export function answerHighlights(state: UiSession): Set<string> {
  const last = state.transcript[state.transcript.length - 1];
  if (!last) {
    return new Set();
  }
  return new Set(last.cells.map((c) => key(c.row, c.col)));
}

export function contextHighlights(state: UiSession): Set<string> {
  // The previous turn's answers: exactly the cells feeding the next turn's
  // context flags, shown dimmed so the mechanism is inspectable.
  const prev = state.transcript[state.transcript.length - 2];
  if (!prev) {
    return new Set();
  }
  const current = answerHighlights(state);
  return new Set(prev.cells.map((c) => key(c.row, c.col)).filter((k) => !current.has(k)));
}

export type CellStyle = "answer" | "context" | "plain";

export function cellStyle(state: UiSession, row: number, col: number): CellStyle {
  const k = key(row, col);
  if (answerHighlights(state).has(k)) {
    return "answer";
  }
  if (contextHighlights(state).has(k)) {
    return "context";
  }
  return "plain";
}

export function canSubmit(state: UiSession, question: string): boolean {
  return !state.pending && state.sessionId !== null && question.trim() !== "";
}

export interface ParsedGrid {
  columns: string[];
  rows: string[][];
}

export function parseCsvGrid(text: string): ParsedGrid | { error: string } {
  // Deliberately simple: comma-separated, no quoting. Enough for pasting
  // small tables; anything malformed is rejected server-side too.
  const lines = text
    .split(/\r?\n/)
    .map((line) => line.trim())
    .filter((line) => line !== "");
  if (lines.length < 2) {
    return { error: "need a header line and at least one data row" };
  }
  const split = (line: string) => line.split(",").map((cell) => cell.trim());
  const columns = split(lines[0]);
  if (columns.some((c) => c === "")) {
    return { error: "header has an empty column name" };
  }
  const rows = lines.slice(1).map(split);
  for (const [index, row] of rows.entries()) {
    if (row.length !== columns.length) {
      return {
        error: `row ${index + 1} has ${row.length} cells, expected ${columns.length}`,
      };
    }
  }
  return { columns, rows };
}
