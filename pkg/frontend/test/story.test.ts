/** Story tab: annotated spans, hover tooltips, selection anchors, feedback. */

import { describe, expect, it } from "vitest";

import { renderStoryBlocks } from "../src/render.js";
import { explanationAt, segmentBlock, selectionToAnchor } from "../src/story.js";
import { StoryJson } from "../src/types.js";
import { MockService } from "./mock.js";

const STORY: StoryJson = {
  blocks: [
    { id: "h", kind: "heading", text: "March sales" },
    { id: "p", kind: "paragraph", text: "Sales fell alarmingly in March." },
  ],
  annotations: [
    { block_id: "p", start: 11, end: 21, dimension: "rhetorical",
      explanation: "strong wording chosen to prompt action" },
  ],
};

describe("segmentBlock", () => {
  it("splits text at annotation boundaries", () => {
    const segments = segmentBlock(STORY.blocks[1].text, STORY.annotations);
    expect(segments.map((s) => s.text)).toEqual(
      ["Sales fell ", "alarmingly", " in March."]);
    expect(segments.map((s) => s.annotation !== null)).toEqual(
      [false, true, false]);
  });

  it("handles annotations touching both ends", () => {
    const segments = segmentBlock("abcd", [
      { block_id: "x", start: 0, end: 2, dimension: "semantic",
        explanation: "e1" },
      { block_id: "x", start: 2, end: 4, dimension: "pragmatic",
        explanation: "e2" },
    ]);
    expect(segments.map((s) => s.text)).toEqual(["ab", "cd"]);
  });
});

describe("hover tooltips", () => {
  it("returns the annotation explanation for an offset inside the span", () => {
    expect(explanationAt(STORY, "p", 15))
      .toBe("strong wording chosen to prompt action");
  });

  it("returns null outside any span", () => {
    expect(explanationAt(STORY, "p", 3)).toBeNull();
    expect(explanationAt(STORY, "h", 0)).toBeNull();
  });

  it("binds the explanation to the rendered mark's title attribute", () => {
    const html = renderStoryBlocks(STORY);
    expect(html).toContain(
      '<mark class="dim-rhetorical" data-dimension="rhetorical"' +
      ' title="strong wording chosen to prompt action">alarmingly</mark>');
  });
});

describe("selection anchors", () => {
  it("maps an in-range selection to the block-offset anchor", () => {
    expect(selectionToAnchor(STORY, "p", 11, 21))
      .toEqual({ block_id: "p", start: 11, end: 21 });
  });

  it("rejects empty, reversed, or out-of-range selections", () => {
    expect(selectionToAnchor(STORY, "p", 5, 5)).toBeNull();
    expect(selectionToAnchor(STORY, "p", 9, 2)).toBeNull();
    expect(selectionToAnchor(STORY, "p", 0, 999)).toBeNull();
    expect(selectionToAnchor(STORY, "ghost", 0, 1)).toBeNull();
  });
});

describe("feedback submission", () => {
  it("sends local feedback with the selection anchor", async () => {
    const service = new MockService();
    const anchor = selectionToAnchor(STORY, "p", 11, 21);
    expect(anchor).not.toBeNull();
    await service.sendFeedback("session-1", [
      { scope: "local", text: "tone this down", anchor: anchor! },
    ]);
    expect(service.callsTo("sendFeedback")).toEqual([
      ["session-1", [{ scope: "local", text: "tone this down",
                       anchor: { block_id: "p", start: 11, end: 21 } }]],
    ]);
  });
});
