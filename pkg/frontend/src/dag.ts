/**
 * Client-side DAG layout and interaction for the Insights tab.
 *
 * The graph is laid out from the structured JSON (not the diagram text) so
 * every node stays clickable; clicking a node asks the service to resolve it
 * to the most relevant notebook cell, then scrolls to and highlights it.
 */

import { QuestionGraphJson, ServiceClient } from "./types.js";

export interface PositionedNode {
  id: string;
  label: string;
  kind: "data_derived" | "external_knowledge";
  /** Longest-path depth from a root; doubles as the layout column. */
  depth: number;
  /** Row within the column. */
  row: number;
}

/** Assign each node its longest-path depth; row index within each depth. */
export function layoutQuestion(graph: QuestionGraphJson): PositionedNode[] {
  const depth = new Map<string, number>();
  for (const node of graph.nodes) depth.set(node.id, 0);
  // Edges always point forward in a DAG, so |V| passes converge.
  for (let pass = 0; pass < graph.nodes.length; pass++) {
    let changed = false;
    for (const edge of graph.edges) {
      const want = (depth.get(edge.from) ?? 0) + 1;
      if (want > (depth.get(edge.to) ?? 0)) {
        depth.set(edge.to, want);
        changed = true;
      }
    }
    if (!changed) break;
  }
  const rows = new Map<number, number>();
  return graph.nodes.map((node) => {
    const d = depth.get(node.id) ?? 0;
    const row = rows.get(d) ?? 0;
    rows.set(d, row + 1);
    return { id: node.id, label: node.label, kind: node.kind, depth: d, row };
  });
}

export interface NavigationEffects {
  scrollToCell(cellId: string): void;
  highlightCell(cellId: string): void;
}

export const HIGHLIGHT_CLASS = "cell-highlight";

/**
 * Handle a click on a DAG node: resolve the element label to a cell, then
 * scroll to and highlight it. Returns the resolved cell id.
 */
export async function onNodeClick(
  client: ServiceClient,
  sessionId: string,
  label: string,
  effects: NavigationEffects,
): Promise<string> {
  const { cell_id } = await client.resolveElement(sessionId, label);
  effects.scrollToCell(cell_id);
  effects.highlightCell(cell_id);
  return cell_id;
}
