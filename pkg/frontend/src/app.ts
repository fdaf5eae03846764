/** App shell: wires uploads, the question form, and the live step feed.
 *
 * All rendering goes through the pure renderers; this module only owns DOM
 * containers and the fetch/stream lifecycles.
 */

import { ApiClient, ApiError } from "./api.js";
import {
  applyEvent,
  initialSession,
  resumeIndex,
  type SessionViewState,
} from "./state.js";
import {
  h,
  mount,
  renderErrorBanner,
  renderSchemaPreview,
  renderSession,
} from "./render.js";
import type { ReasoningMode, UploadResult } from "./types.js";

interface AppElements {
  uploadInput: HTMLInputElement;
  uploadList: HTMLElement;
  question: HTMLTextAreaElement;
  mode: HTMLSelectElement;
  askButton: HTMLButtonElement;
  sessionRoot: HTMLElement;
  banner: HTMLElement;
}

export function initApp(root: Document, client = new ApiClient()): void {
  const els: AppElements = {
    uploadInput: root.querySelector("#table-upload")!,
    uploadList: root.querySelector("#uploaded-tables")!,
    question: root.querySelector("#question")!,
    mode: root.querySelector("#mode")!,
    askButton: root.querySelector("#ask")!,
    sessionRoot: root.querySelector("#session")!,
    banner: root.querySelector("#banner")!,
  };
  const uploads: UploadResult[] = [];

  const showError = (message: string, retry: () => void) => {
    mount(renderErrorBanner(message), els.banner);
    els.banner.querySelector("button.retry")?.addEventListener("click", () => {
      els.banner.replaceChildren();
      retry();
    });
  };

  const refreshUploads = () => {
    const items = uploads.map((upload) =>
      h(
        "li",
        { "data-table-id": upload.table_id },
        h("strong", {}, upload.metadata.name || upload.table_id),
        renderSchemaPreview(upload.metadata),
      ),
    );
    mount(h("ul", { class: "table-list" }, ...items), els.uploadList);
  };

  els.uploadInput.addEventListener("change", async () => {
    const file = els.uploadInput.files?.[0];
    if (!file) return;
    const attempt = async () => {
      try {
        const result = await client.uploadTable(file);
        if (!uploads.some((u) => u.table_id === result.table_id)) {
          uploads.push(result);
        }
        refreshUploads();
      } catch (error) {
        showError(describe(error), attempt);
      }
    };
    await attempt();
  });

  els.askButton.addEventListener("click", async () => {
    const question = els.question.value.trim();
    if (!question || uploads.length === 0) {
      showError("upload a table and type a question first", () => {});
      return;
    }
    const mode = els.mode.value as ReasoningMode;
    const tableIds = uploads.map((u) => u.table_id);
    const attempt = async () => {
      try {
        const sessionId = await client.createSession(tableIds, question, mode);
        await followSession(sessionId, question);
      } catch (error) {
        showError(describe(error), attempt);
      }
    };
    await attempt();
  });

  const followSession = async (sessionId: string, question: string) => {
    let state: SessionViewState = initialSession(sessionId, question);
    const redraw = () => {
      mount(
        renderSession(state, {
          assetUrl: (p) => client.assetUrl(p, sessionId),
          traceUrl: (id) => client.traceExportUrl(id),
        }),
        els.sessionRoot,
      );
    };
    redraw();
    // Follow-up questions reuse the already-selected tables: a new question
    // is simply a new session against the same table ids.
    await client.streamEvents(sessionId, resumeIndex(state), (event) => {
      state = applyEvent(state, event);
      redraw();
    });
  };
}

function describe(error: unknown): string {
  if (error instanceof ApiError) return `request failed (${error.status}): ${error.message}`;
  return String(error);
}
