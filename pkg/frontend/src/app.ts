/**
 * Browser bootstrap: wires the pure view model to the document.
 *
 * All document state flows through the reducer in state.ts; this file only
 * translates DOM events into client calls and state transitions, then
 * re-renders.
 */

import { HttpServiceClient } from "./api.js";
import { HIGHLIGHT_CLASS, onNodeClick } from "./dag.js";
import { render } from "./render.js";
import {
  ViewState,
  addBanner,
  applyEvent,
  checkStalled,
  highlightCell,
  initialState,
  loadNotebook,
  selectCell,
  setEditMode,
  setGraph,
  setStory,
  setTab,
  startRun,
  Tab,
} from "./state.js";

const client = new HttpServiceClient("");

let state: ViewState;

function update(next: ViewState): void {
  state = next;
  const root = document.getElementById("app");
  if (root) root.innerHTML = render(state);
}

function fail(error: unknown): void {
  update(addBanner(state, error instanceof Error ? error.message : String(error)));
}

async function refreshNotebook(): Promise<void> {
  update(loadNotebook(state, await client.getNotebook(state.sessionId)));
}

async function runQuery(text: string): Promise<void> {
  try {
    await client.startQuery(state.sessionId, text);
    update(startRun(state, Date.now()));
    await client.subscribeEvents(state.sessionId, (event) => {
      update(applyEvent(state, event, Date.now()));
    });
    await refreshNotebook();
  } catch (error) {
    fail(error);
  }
}

function navigationEffects() {
  return {
    scrollToCell(cellId: string): void {
      document
        .querySelector(`[data-cell-id="${cellId}"]`)
        ?.scrollIntoView({ behavior: "smooth", block: "center" });
    },
    highlightCell(cellId: string): void {
      update(highlightCell(state, cellId));
      document
        .querySelector(`[data-cell-id="${cellId}"]`)
        ?.classList.add(HIGHLIGHT_CLASS);
    },
  };
}

function onClick(event: MouseEvent): void {
  const target = event.target as HTMLElement;
  if (target.id === "stop") {
    client.stopQuery(state.sessionId).catch(fail);
  } else if (target.id === "generate-story") {
    client
      .generateStory(state.sessionId, "")
      .then((story) => update(setStory(state, story)))
      .catch(fail);
  } else if (target.id === "toggle-edit") {
    update(setEditMode(state, !state.editMode));
  } else if (target.classList.contains("tab")) {
    const tab = target.dataset["tab"] as Tab;
    update(setTab(state, tab));
    if (tab === "insights" && !state.graph) {
      client
        .getInsights(state.sessionId)
        .then(({ graph }) => update(setGraph(state, graph)))
        .catch(fail);
    }
  } else if (target.classList.contains("dag-node")) {
    const label = target.dataset["label"] ?? "";
    onNodeClick(client, state.sessionId, label, navigationEffects()).catch(fail);
  } else if (target.classList.contains("invoke")) {
    const cellId = target.dataset["cellId"] ?? null;
    update(selectCell(state, cellId));
    const text = window.prompt("What should the AI do?");
    if (text) void runQuery(text);
  } else if (target.closest(".cell")) {
    const cell = target.closest(".cell") as HTMLElement;
    update(selectCell(state, cell.dataset["cellId"] ?? null));
  }
}

async function boot(): Promise<void> {
  const { id } = await client.createSession();
  state = initialState(id);
  update(state);
  await refreshNotebook();
  document.addEventListener("click", onClick);
  window.setInterval(() => update(checkStalled(state, Date.now())), 1_000);
}

boot().catch((error) => {
  const root = document.getElementById("app");
  if (root) root.textContent = `failed to start: ${error}`;
});
