/**
 * View state and its reducer.
 *
 * The state is a pure function of server events plus local selections:
 * replaying a recorded event log always reproduces the same view. All
 * mutation happens through `applyEvent` and the small local setters below,
 * each returning a fresh state object.
 */

import {
  InsightGraphJson,
  NotebookJson,
  ServerEvent,
  StoryJson,
  TERMINAL_EVENTS,
} from "./types.js";

export type Tab = "settings" | "clarify" | "insights" | "story";

export interface CellView {
  id: string;
  kind: "code" | "markdown";
  source: string;
  provenance: "user" | "assistant";
  executing: boolean;
  status?: string;
}

export interface ViewState {
  sessionId: string;
  cells: CellView[];
  runState: "idle" | "running";
  activeTab: Tab;
  selectedCellId: string | null;
  highlightedCellId: string | null;
  /** Timestamp (ms) of the last event seen while running. */
  lastEventAt: number | null;
  stalled: boolean;
  banners: string[];
  story: StoryJson | null;
  storyDegraded: boolean;
  graph: InsightGraphJson | null;
  editMode: boolean;
}

/** Milliseconds without any event (heartbeats included) before warning. */
export const STALL_THRESHOLD_MS = 10_000;

export function initialState(sessionId: string): ViewState {
  return {
    sessionId,
    cells: [],
    runState: "idle",
    activeTab: "settings",
    selectedCellId: null,
    highlightedCellId: null,
    lastEventAt: null,
    stalled: false,
    banners: [],
    story: null,
    storyDegraded: false,
    graph: null,
    editMode: false,
  };
}

function joined(source: string | string[]): string {
  return Array.isArray(source) ? source.join("") : source;
}

export function loadNotebook(state: ViewState, notebook: NotebookJson): ViewState {
  const cells: CellView[] = notebook.cells.map((cell) => ({
    id: cell.id,
    kind: cell.cell_type,
    source: joined(cell.source),
    provenance:
      cell.metadata["capy_provenance"] === "assistant" ? "assistant" : "user",
    executing: false,
  }));
  return { ...state, cells };
}

export function applyEvent(
  state: ViewState,
  event: ServerEvent,
  now: number,
): ViewState {
  let next: ViewState = { ...state, lastEventAt: now, stalled: false };
  switch (event.kind) {
    case "cell_appended":
      next.cells = [
        ...next.cells,
        {
          id: event.cell_id ?? "",
          kind: event.cell_kind ?? "markdown",
          source: event.source ?? "",
          provenance: "assistant",
          executing: false,
        },
      ];
      break;
    case "execution_started":
      next.cells = next.cells.map((cell) =>
        cell.id === event.cell_id ? { ...cell, executing: true } : cell,
      );
      break;
    case "execution_finished":
      next.cells = next.cells.map((cell) =>
        cell.id === event.cell_id
          ? { ...cell, executing: false, status: event.status }
          : cell,
      );
      break;
    case "loop_failed":
      next.banners = [
        ...next.banners,
        `Run failed: ${event.reason ?? "unknown"}${event.error ? ` (${event.error})` : ""}`,
      ];
      break;
    case "heartbeat":
    case "repair_attempt":
    case "loop_done":
    case "loop_stopped":
      break;
    default:
      break;
  }
  next.runState = TERMINAL_EVENTS.includes(event.kind) ? "idle" : "running";
  return next;
}

export function startRun(state: ViewState, now: number): ViewState {
  return { ...state, runState: "running", lastEventAt: now, stalled: false };
}

/** Recompute the stalled flag; call on a timer while a run is active. */
export function checkStalled(state: ViewState, now: number): ViewState {
  const stalled =
    state.runState === "running" &&
    state.lastEventAt !== null &&
    now - state.lastEventAt > STALL_THRESHOLD_MS;
  return stalled === state.stalled ? state : { ...state, stalled };
}

export function setTab(state: ViewState, tab: Tab): ViewState {
  return { ...state, activeTab: tab };
}

export function selectCell(state: ViewState, cellId: string | null): ViewState {
  return { ...state, selectedCellId: cellId };
}

export function highlightCell(state: ViewState, cellId: string): ViewState {
  return { ...state, highlightedCellId: cellId };
}

export function setStory(state: ViewState, story: StoryJson): ViewState {
  return { ...state, story, storyDegraded: story.degraded === true };
}

export function setGraph(state: ViewState, graph: InsightGraphJson): ViewState {
  return { ...state, graph };
}

export function addBanner(state: ViewState, message: string): ViewState {
  return { ...state, banners: [...state.banners, message] };
}

export function dismissBanner(state: ViewState, index: number): ViewState {
  return { ...state, banners: state.banners.filter((_, i) => i !== index) };
}

export function setEditMode(state: ViewState, editMode: boolean): ViewState {
  return { ...state, editMode };
}
