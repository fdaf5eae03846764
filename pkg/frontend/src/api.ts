/** Thin client for the /v1 API plus an SSE reader with resume-on-reconnect. */

import type { ReasoningMode, SessionEvent, UploadResult } from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function expectOk(response: Response): Promise<Response> {
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = await response.json();
      detail = typeof body.detail === "string" ? body.detail : JSON.stringify(body.detail);
    } catch {
      // keep the status text
    }
    throw new ApiError(response.status, detail);
  }
  return response;
}

export class ApiClient {
  constructor(public baseUrl: string = "") {}

  async uploadTable(file: File): Promise<UploadResult> {
    const form = new FormData();
    form.append("file", file);
    const response = await expectOk(
      await fetch(`${this.baseUrl}/v1/tables`, { method: "POST", body: form }),
    );
    return response.json();
  }

  async createSession(
    tableIds: string[],
    question: string,
    mode: ReasoningMode,
  ): Promise<string> {
    const response = await expectOk(
      await fetch(`${this.baseUrl}/v1/sessions`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ table_ids: tableIds, question, mode }),
      }),
    );
    return (await response.json()).session_id;
  }

  async getSession(sessionId: string): Promise<unknown> {
    const response = await expectOk(
      await fetch(`${this.baseUrl}/v1/sessions/${sessionId}`),
    );
    return response.json();
  }

  assetUrl(path: string, sessionId: string): string {
    return `${this.baseUrl}/v1/assets/sessions/${sessionId}/assets/${path}`;
  }

  traceExportUrl(sessionId: string): string {
    return `${this.baseUrl}/v1/sessions/${sessionId}`;
  }

  /** Stream session events, reconnecting once per drop and resuming from the
   * last card already applied so no step arrives twice. */
  async streamEvents(
    sessionId: string,
    fromIndex: number,
    onEvent: (event: SessionEvent) => void,
    maxReconnects = 3,
  ): Promise<void> {
    let resume = fromIndex;
    let attempts = 0;
    for (;;) {
      try {
        const response = await expectOk(
          await fetch(
            `${this.baseUrl}/v1/sessions/${sessionId}/events?from_index=${resume}`,
          ),
        );
        const sawFinal = await this.readSse(response, (event) => {
          if (event.event === "step") resume += 1;
          onEvent(event);
        });
        if (sawFinal) return;
      } catch (error) {
        if (error instanceof ApiError) throw error;
      }
      attempts += 1;
      if (attempts > maxReconnects) {
        throw new ApiError(0, "event stream dropped and reconnects exhausted");
      }
    }
  }

  private async readSse(
    response: Response,
    onEvent: (event: SessionEvent) => void,
  ): Promise<boolean> {
    if (!response.body) throw new ApiError(0, "no response body");
    const reader = response.body.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    let sawFinal = false;
    for (;;) {
      const { value, done } = await reader.read();
      if (done) break;
      buffer += decoder.decode(value, { stream: true });
      const blocks = buffer.split("\n\n");
      buffer = blocks.pop() ?? "";
      for (const block of blocks) {
        const event = parseSseBlock(block);
        if (event) {
          if (event.event === "final") sawFinal = true;
          onEvent(event);
        }
      }
    }
    return sawFinal;
  }
}

export function parseSseBlock(block: string): SessionEvent | null {
  let id = 0;
  let eventName = "";
  let data = "";
  for (const line of block.split("\n")) {
    if (line.startsWith("id: ")) id = Number(line.slice(4));
    else if (line.startsWith("event: ")) eventName = line.slice(7).trim();
    else if (line.startsWith("data: ")) data = line.slice(6);
  }
  if (!eventName || !data) return null;
  try {
    return { id, event: eventName, data: JSON.parse(data) } as SessionEvent;
  } catch {
    return null;
  }
}
