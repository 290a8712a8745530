/**
 * Story-view helpers: splitting block text into annotated segments for
 * rendering, tooltip lookup for hovered spans, and mapping a browser text
 * selection to the block-offset anchor model used by local feedback.
 */

import { AnnotationJson, StoryJson } from "./types.js";

export interface Segment {
  text: string;
  annotation: AnnotationJson | null;
}

/** Split a block's text at annotation boundaries, in document order. */
export function segmentBlock(
  text: string,
  annotations: AnnotationJson[],
): Segment[] {
  const sorted = [...annotations].sort((a, b) => a.start - b.start);
  const segments: Segment[] = [];
  let cursor = 0;
  for (const annotation of sorted) {
    if (annotation.start > cursor) {
      segments.push({ text: text.slice(cursor, annotation.start), annotation: null });
    }
    segments.push({
      text: text.slice(annotation.start, annotation.end),
      annotation,
    });
    cursor = annotation.end;
  }
  if (cursor < text.length) {
    segments.push({ text: text.slice(cursor), annotation: null });
  }
  return segments;
}

/** The explanation to show for a hover at `offset` in a block, if any. */
export function explanationAt(
  story: StoryJson,
  blockId: string,
  offset: number,
): string | null {
  const hit = story.annotations.find(
    (a) => a.block_id === blockId && a.start <= offset && offset < a.end,
  );
  return hit ? hit.explanation : null;
}

/**
 * Map a selection inside a block to a feedback anchor. Returns null for
 * empty or out-of-range selections, which have no server-side meaning.
 */
export function selectionToAnchor(
  story: StoryJson,
  blockId: string,
  start: number,
  end: number,
): { block_id: string; start: number; end: number } | null {
  const block = story.blocks.find((b) => b.id === blockId);
  if (!block || block.kind === "figure_ref") return null;
  if (!(0 <= start && start < end && end <= block.text.length)) return null;
  return { block_id: blockId, start, end };
}
