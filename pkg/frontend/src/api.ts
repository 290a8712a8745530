/**
 * HTTP implementation of the service client. Every method maps onto one
 * session-service route; the SSE subscription parses the event stream until
 * the server closes it at the run's terminal event.
 */

import {
  FeedbackItem,
  InsightGraphJson,
  NotebookJson,
  ServerEvent,
  ServiceClient,
  SettingsJson,
  StoryJson,
} from "./types.js";

async function asJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let message = `HTTP ${response.status}`;
    try {
      const body = (await response.json()) as { message?: string };
      if (body.message) message = body.message;
    } catch {
      // keep the status-only message
    }
    throw new Error(message);
  }
  return (await response.json()) as T;
}

export class HttpServiceClient implements ServiceClient {
  constructor(private readonly baseUrl: string = "") {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async createSession(notebook?: string): Promise<{ id: string }> {
    return asJson(
      await fetch(this.url("/sessions"), { method: "POST", body: notebook }),
    );
  }

  async getNotebook(sessionId: string): Promise<NotebookJson> {
    return asJson(await fetch(this.url(`/sessions/${sessionId}/notebook`)));
  }

  async getSettings(sessionId: string): Promise<SettingsJson> {
    return asJson(await fetch(this.url(`/sessions/${sessionId}/settings`)));
  }

  async putSettings(
    sessionId: string,
    settings: Partial<SettingsJson>,
  ): Promise<SettingsJson> {
    return asJson(
      await fetch(this.url(`/sessions/${sessionId}/settings`), {
        method: "PUT",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(settings),
      }),
    );
  }

  async startQuery(sessionId: string, text: string): Promise<void> {
    await asJson(
      await fetch(this.url(`/sessions/${sessionId}/query`), {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ text }),
      }),
    );
  }

  async stopQuery(sessionId: string): Promise<void> {
    await asJson(
      await fetch(this.url(`/sessions/${sessionId}/query`), {
        method: "DELETE",
      }),
    );
  }

  async subscribeEvents(
    sessionId: string,
    onEvent: (event: ServerEvent) => void,
  ): Promise<void> {
    const response = await fetch(this.url(`/sessions/${sessionId}/events`));
    if (!response.ok || !response.body) {
      throw new Error(`event stream failed: HTTP ${response.status}`);
    }
    const reader = response.body.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    for (;;) {
      const { done, value } = await reader.read();
      if (done) break;
      buffer += decoder.decode(value, { stream: true });
      let newline;
      while ((newline = buffer.indexOf("\n")) >= 0) {
        const line = buffer.slice(0, newline).trim();
        buffer = buffer.slice(newline + 1);
        if (line.startsWith("data: ")) {
          onEvent(JSON.parse(line.slice("data: ".length)) as ServerEvent);
        }
      }
    }
  }

  async clarify(
    sessionId: string,
    cellId: string,
    question: string,
  ): Promise<{ answer: string }> {
    return asJson(
      await fetch(this.url(`/sessions/${sessionId}/clarify`), {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ cell_id: cellId, question }),
      }),
    );
  }

  async getInsights(
    sessionId: string,
  ): Promise<{ graph: InsightGraphJson; mermaid: string }> {
    return asJson(
      await fetch(this.url(`/sessions/${sessionId}/insights`), {
        method: "POST",
      }),
    );
  }

  async resolveElement(
    sessionId: string,
    element: string,
  ): Promise<{ cell_id: string }> {
    return asJson(
      await fetch(this.url(`/sessions/${sessionId}/insights/resolve`), {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ element }),
      }),
    );
  }

  async generateStory(
    sessionId: string,
    instructions: string,
  ): Promise<StoryJson> {
    return asJson(
      await fetch(this.url(`/sessions/${sessionId}/story`), {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ instructions }),
      }),
    );
  }

  async sendFeedback(
    sessionId: string,
    items: FeedbackItem[],
  ): Promise<StoryJson> {
    return asJson(
      await fetch(this.url(`/sessions/${sessionId}/story/feedback`), {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ items }),
      }),
    );
  }

  async updateBlocks(
    sessionId: string,
    edits: Record<string, string>,
  ): Promise<StoryJson> {
    return asJson(
      await fetch(this.url(`/sessions/${sessionId}/story/blocks`), {
        method: "PUT",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ edits }),
      }),
    );
  }

  async exportStoryHtml(sessionId: string): Promise<string> {
    const response = await fetch(
      this.url(`/sessions/${sessionId}/story/export.html`),
    );
    if (!response.ok) throw new Error(`HTTP ${response.status}`);
    return response.text();
  }
}
