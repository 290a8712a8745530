/**
 * Wire types mirroring the session-service JSON, plus the client interface
 * the view layer talks to. Tests substitute a mock implementation.
 */

export interface ModelRef {
  provider: string;
  model_name: string;
}

export interface SettingsJson {
  eda_mode: "single" | "multi";
  story_mode: "single" | "multi";
  model_by_role: Record<string, ModelRef>;
  max_rounds: number;
  max_cells: number;
  max_consecutive_error_repairs: number;
  context_budget: number;
  timeout_ms: number;
  max_annotations_per_block: number;
}

/** One event from the run stream (SSE payloads, already JSON-decoded). */
export interface ServerEvent {
  kind: string;
  seq: number;
  cell_id?: string;
  cell_kind?: "code" | "markdown";
  source?: string;
  status?: string;
  duration_ms?: number;
  reason?: string;
  error?: string;
  cells?: number;
  attempt?: number;
}

export const TERMINAL_EVENTS = ["loop_done", "loop_stopped", "loop_failed"];

export interface NotebookCellJson {
  id: string;
  cell_type: "code" | "markdown";
  source: string | string[];
  metadata: Record<string, unknown>;
  outputs?: OutputJson[];
}

export interface OutputJson {
  output_type: string;
  name?: string;
  text?: string | string[];
  data?: Record<string, string | string[]>;
  ename?: string;
  evalue?: string;
}

export interface NotebookJson {
  cells: NotebookCellJson[];
}

export interface InsightNodeJson {
  id: string;
  label: string;
  kind: "data_derived" | "external_knowledge";
}

export interface InsightEdgeJson {
  from: string;
  to: string;
  operation: string;
}

export interface QuestionGraphJson {
  question: string;
  nodes: InsightNodeJson[];
  edges: InsightEdgeJson[];
}

export interface InsightGraphJson {
  questions: QuestionGraphJson[];
}

export interface BlockJson {
  id: string;
  kind: "heading" | "paragraph" | "figure_ref" | "list";
  text: string;
}

export interface AnnotationJson {
  block_id: string;
  start: number;
  end: number;
  dimension: "semantic" | "rhetorical" | "pragmatic";
  explanation: string;
}

export interface StoryJson {
  blocks: BlockJson[];
  annotations: AnnotationJson[];
  degraded?: boolean;
  wave_count?: number;
}

export interface FeedbackItem {
  scope: "global" | "local";
  text: string;
  anchor?: { block_id: string; start: number; end: number };
}

/** Everything the UI needs from the backend; one method per route. */
export interface ServiceClient {
  createSession(notebook?: string): Promise<{ id: string }>;
  getNotebook(sessionId: string): Promise<NotebookJson>;
  getSettings(sessionId: string): Promise<SettingsJson>;
  putSettings(sessionId: string, settings: Partial<SettingsJson>): Promise<SettingsJson>;
  startQuery(sessionId: string, text: string): Promise<void>;
  stopQuery(sessionId: string): Promise<void>;
  subscribeEvents(sessionId: string, onEvent: (event: ServerEvent) => void): Promise<void>;
  clarify(sessionId: string, cellId: string, question: string): Promise<{ answer: string }>;
  getInsights(sessionId: string): Promise<{ graph: InsightGraphJson; mermaid: string }>;
  resolveElement(sessionId: string, element: string): Promise<{ cell_id: string }>;
  generateStory(sessionId: string, instructions: string): Promise<StoryJson>;
  sendFeedback(sessionId: string, items: FeedbackItem[]): Promise<StoryJson>;
  updateBlocks(sessionId: string, edits: Record<string, string>): Promise<StoryJson>;
  exportStoryHtml(sessionId: string): Promise<string>;
}
