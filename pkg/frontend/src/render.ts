// DOM rendering: everything is re-drawn from UiSession state.

import type { GraphDump } from "./api.js";
import { cellStyle, UiSession } from "./state.js";

export function renderGrid(container: HTMLElement, state: UiSession): void {
  container.innerHTML = "";
  if (state.grid.length === 0) {
    container.textContent = "No table loaded.";
    return;
  }
  const table = document.createElement("table");
  table.className = "qa-grid";
  const head = document.createElement("tr");
  for (const name of state.columns) {
    const th = document.createElement("th");
    th.textContent = name;
    head.appendChild(th);
  }
  table.appendChild(head);
  state.grid.forEach((row, r) => {
    const tr = document.createElement("tr");
    row.forEach((text, c) => {
      const td = document.createElement("td");
      td.textContent = text;
      td.dataset.row = String(r);
      td.dataset.col = String(c);
      const style = cellStyle(state, r, c);
      if (style !== "plain") {
        td.classList.add(style);
      }
      tr.appendChild(td);
    });
    table.appendChild(tr);
  });
  container.appendChild(table);
}

export function renderTranscript(container: HTMLElement, state: UiSession): void {
  container.innerHTML = "";
  for (const entry of state.transcript) {
    const item = document.createElement("li");
    const q = document.createElement("div");
    q.className = "question";
    q.textContent = `${entry.turn}. ${entry.question}`;
    const a = document.createElement("div");
    a.className = "answer-texts";
    a.textContent = entry.answerTexts.join(", ");
    item.appendChild(q);
    item.appendChild(a);
    container.appendChild(item);
  }
  if (state.error) {
    const err = document.createElement("li");
    err.className = "error";
    err.textContent = `request failed: ${state.error} (edit and resubmit to retry)`;
    container.appendChild(err);
  }
}

export function renderDebugGraph(container: HTMLElement, dump: GraphDump | null): void {
  container.innerHTML = "";
  if (!dump) {
    return;
  }
  const list = document.createElement("ul");
  list.className = "debug-nodes";
  dump.nodes.forEach((node, index) => {
    if (!node.answer_flags || node.answer_flags.length === 0) {
      return;
    }
    const item = document.createElement("li");
    const where =
      node.kind === "ROW" ? `row ${node.rows?.[0]}` :
      node.kind === "COLUMN" ? `column ${node.column}` :
      `"${node.text ?? ""}"`;
    item.textContent = `#${index} ${node.kind} ${where}: ${node.answer_flags.join(", ")}`;
    list.appendChild(item);
  });
  const header = document.createElement("div");
  header.textContent = `context-flagged nodes (${list.childElementCount})`;
  container.appendChild(header);
  container.appendChild(list);
}

export function setPending(form: HTMLFormElement, pending: boolean): void {
  const input = form.querySelector<HTMLInputElement>("input[name=question]");
  const button = form.querySelector<HTMLButtonElement>("button[type=submit]");
  if (input) {
    input.disabled = pending;
  }
  if (button) {
    button.disabled = pending;
  }
}
