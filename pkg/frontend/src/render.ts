/**
 * Deterministic HTML-string rendering of the view state.
 *
 * Rendering is a pure function so the replay test can snapshot the whole
 * view; the browser bootstrap injects the result into the document and
 * re-renders on every state change.
 */

import { layoutQuestion } from "./dag.js";
import { Tab, ViewState } from "./state.js";
import { segmentBlock } from "./story.js";
import { StoryJson } from "./types.js";

export const DIMENSION_COLORS: Record<string, string> = {
  semantic: "#0F6B6B",
  rhetorical: "#2B5FB0",
  pragmatic: "#C1683C",
};

const TABS: Tab[] = ["settings", "clarify", "insights", "story"];

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function renderCells(state: ViewState): string {
  const cells = state.cells.map((cell) => {
    const classes = ["cell", `cell-${cell.kind}`];
    // assistant cells render on a light peach background
    if (cell.provenance === "assistant") classes.push("cell-assistant");
    if (cell.id === state.selectedCellId) classes.push("cell-selected");
    if (cell.id === state.highlightedCellId) classes.push("cell-highlight");
    if (cell.executing) classes.push("cell-executing");
    const status = cell.status
      ? `<span class="cell-status">${escapeHtml(cell.status)}</span>`
      : "";
    return (
      `<div class="${classes.join(" ")}" data-cell-id="${escapeHtml(cell.id)}">` +
      `<pre>${escapeHtml(cell.source)}</pre>${status}` +
      `<button class="invoke" data-cell-id="${escapeHtml(cell.id)}">Ask AI</button>` +
      `</div>`
    );
  });
  return `<section id="notebook">${cells.join("")}</section>`;
}

function renderRunBar(state: ViewState): string {
  const indicator =
    state.runState === "running"
      ? `<span class="run-indicator running">running</span>`
      : `<span class="run-indicator idle">idle</span>`;
  // the stop control exists only while a run is active
  const stop =
    state.runState === "running" ? `<button id="stop">Stop</button>` : "";
  const stalled = state.stalled
    ? `<span class="stalled-warning">No progress updates; the run may be stalled.</span>`
    : "";
  return `<header id="run-bar">${indicator}${stop}${stalled}</header>`;
}

function renderBanners(state: ViewState): string {
  const items = state.banners.map(
    (message, index) =>
      `<div class="banner" data-banner-index="${index}">` +
      `${escapeHtml(message)}<button class="dismiss">x</button></div>`,
  );
  return `<div id="banners">${items.join("")}</div>`;
}

function renderTabs(state: ViewState): string {
  const buttons = TABS.map((tab) => {
    const active = tab === state.activeTab ? " active" : "";
    return `<button class="tab${active}" data-tab="${tab}">${tab}</button>`;
  });
  return `<nav id="tabs">${buttons.join("")}</nav>`;
}

function renderInsights(state: ViewState): string {
  if (!state.graph) {
    return `<p class="empty">No insight graph yet.</p>`;
  }
  const questions = state.graph.questions.map((question, qi) => {
    const positioned = layoutQuestion(question);
    const nodes = positioned.map(
      (node) =>
        `<button class="dag-node ${node.kind}" data-label="${escapeHtml(node.label)}"` +
        ` style="grid-column:${node.depth + 1};grid-row:${node.row + 1}">` +
        `${escapeHtml(node.label)}</button>`,
    );
    const edges = question.edges.map(
      (edge) =>
        `<li class="dag-edge">${escapeHtml(edge.from)} -[${escapeHtml(edge.operation)}]-&gt; ${escapeHtml(edge.to)}</li>`,
    );
    return (
      `<figure class="dag" data-question-index="${qi}">` +
      `<figcaption>${escapeHtml(question.question)}</figcaption>` +
      `<div class="dag-grid">${nodes.join("")}</div>` +
      `<ul class="dag-edges">${edges.join("")}</ul></figure>`
    );
  });
  return questions.join("");
}

export function renderStoryBlocks(story: StoryJson): string {
  const blocks = story.blocks.map((block) => {
    if (block.kind === "figure_ref") {
      return `<figure class="story-figure" data-block-id="${escapeHtml(block.id)}" data-cell-id="${escapeHtml(block.text)}"></figure>`;
    }
    const annotations = story.annotations.filter(
      (a) => a.block_id === block.id,
    );
    const segments = segmentBlock(block.text, annotations).map((segment) => {
      if (!segment.annotation) return escapeHtml(segment.text);
      const a = segment.annotation;
      return (
        `<mark class="dim-${a.dimension}" data-dimension="${a.dimension}"` +
        ` title="${escapeHtml(a.explanation)}">${escapeHtml(segment.text)}</mark>`
      );
    });
    const tag = block.kind === "heading" ? "h2" : "p";
    const cls = block.kind === "list" ? ` class="list"` : "";
    return `<${tag} data-block-id="${escapeHtml(block.id)}"${cls}>${segments.join("")}</${tag}>`;
  });
  return blocks.join("");
}

function renderStoryTab(state: ViewState): string {
  if (!state.story) {
    return (
      `<button id="generate-story">Generate story</button>` +
      `<p class="empty">No story yet.</p>`
    );
  }
  const badge = state.storyDegraded
    ? `<span class="degraded-badge">degraded</span>`
    : "";
  const editor = state.editMode
    ? `<div id="story-editor" class="side-by-side"></div>`
    : "";
  return (
    `${badge}<article id="story">${renderStoryBlocks(state.story)}</article>` +
    `<button id="submit-feedback">Submit All Feedback</button>` +
    `<button id="toggle-edit">Edit HTML</button>${editor}`
  );
}

function renderPanel(state: ViewState): string {
  let body: string;
  switch (state.activeTab) {
    case "settings":
      body = `<form id="settings-form"></form>`;
      break;
    case "clarify":
      body = state.selectedCellId
        ? `<div id="clarify-thread" data-cell-id="${escapeHtml(state.selectedCellId)}"></div>`
        : `<p class="empty">Select a cell to ask about it.</p>`;
      break;
    case "insights":
      body = renderInsights(state);
      break;
    case "story":
      body = renderStoryTab(state);
      break;
  }
  return `<aside id="panel">${renderTabs(state)}<div id="panel-body">${body}</div></aside>`;
}

export function render(state: ViewState): string {
  return (
    renderRunBar(state) +
    renderBanners(state) +
    `<main id="layout">${renderCells(state)}${renderPanel(state)}</main>`
  );
}
