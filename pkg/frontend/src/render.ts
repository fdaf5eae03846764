/** Pure rendering: state in, a serializable node tree out.
 *
 * The tree can be stringified for snapshot tests or mounted into the real
 * DOM by the app shell; rendering the same state twice yields identical
 * output.
 */

import type { SessionViewState } from "./state.js";
import type { StepPayload, TableMetadata } from "./types.js";

export interface VNode {
  tag: string;
  attrs: Record<string, string>;
  children: (VNode | string)[];
}

export function h(
  tag: string,
  attrs: Record<string, string> = {},
  ...children: (VNode | string | null | undefined)[]
): VNode {
  return {
    tag,
    attrs,
    children: children.filter((c): c is VNode | string => c !== null && c !== undefined),
  };
}

const VOID_TAGS = new Set(["img", "br", "hr", "input"]);

function escapeText(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

function escapeAttr(text: string): string {
  return escapeText(text).replace(/"/g, "&quot;");
}

export function renderToString(node: VNode | string): string {
  if (typeof node === "string") return escapeText(node);
  const attrs = Object.entries(node.attrs)
    .map(([key, value]) => ` ${key}="${escapeAttr(value)}"`)
    .join("");
  if (VOID_TAGS.has(node.tag)) return `<${node.tag}${attrs}>`;
  const inner = node.children.map(renderToString).join("");
  return `<${node.tag}${attrs}>${inner}</${node.tag}>`;
}

export function mount(node: VNode, container: HTMLElement): void {
  container.replaceChildren(toDom(node));
}

function toDom(node: VNode | string): Node {
  if (typeof node === "string") return document.createTextNode(node);
  const el = document.createElement(node.tag);
  for (const [key, value] of Object.entries(node.attrs)) {
    el.setAttribute(key, value);
  }
  for (const child of node.children) {
    el.appendChild(toDom(child));
  }
  return el;
}

// ---------------------------------------------------------------------------

export interface RenderOptions {
  assetUrl: (path: string) => string;
  traceUrl?: (sessionId: string) => string;
}

function stepCard(step: StepPayload, opts: RenderOptions): VNode {
  const kind = step.action.kind;
  const children: (VNode | string)[] = [
    h("div", { class: "card-head" }, h("span", { class: "step-no" }, `step ${step.index}`), h("span", { class: `kind kind-${kind}` }, kind)),
    h("p", { class: "thought" }, step.model_output),
  ];
  if (kind === "code" && step.action.code) {
    children.push(h("pre", { class: "code" }, h("code", {}, step.action.code)));
  }
  const result = step.tool_result;
  if (result) {
    if (result.stdout) {
      children.push(h("pre", { class: "tool-output" }, result.stdout));
    }
    if (result.stderr) {
      children.push(h("pre", { class: "tool-output tool-error" }, result.stderr));
    }
    // Only chart artifacts are addressable by bare name under the session
    // assets dir; sandbox-written files live in per-exec scratch dirs.
    const addressable = kind === "chart" ? result.artifacts : [];
    for (const artifact of addressable) {
      if (artifact.endsWith(".svg")) {
        const url = opts.assetUrl(artifact);
        children.push(
          h(
            "figure",
            { class: "chart-thumb" },
            h("img", { src: url, alt: artifact }),
            h("figcaption", {}, h("a", { href: url, download: artifact }, "download svg")),
          ),
        );
      }
    }
  }
  return h("article", { class: "step-card", "data-kind": kind, "data-index": String(step.index) }, ...children);
}

export function renderSession(state: SessionViewState, opts: RenderOptions): VNode {
  const cards = state.steps
    .filter((step) => step.action.kind !== "final")
    .map((step) => stepCard(step, opts));
  const children: (VNode | string)[] = [
    h(
      "header",
      { class: "session-head" },
      h("h2", {}, state.question),
      h("span", { class: `badge badge-${state.status}`, "data-status": state.status }, state.status),
    ),
    h("section", { class: "step-feed" }, ...cards),
  ];
  if (state.final) {
    children.push(
      h(
        "div",
        { class: "answer-banner", "data-kind": state.final.kind },
        h("strong", {}, "Final answer: "),
        state.final.text,
      ),
    );
  }
  if (state.status !== "running" && opts.traceUrl) {
    children.push(
      h(
        "p",
        { class: "trace-export" },
        h(
          "a",
          {
            href: opts.traceUrl(state.sessionId),
            download: `trace-${state.sessionId}.json`,
          },
          "export trace (JSON)",
        ),
      ),
    );
  }
  return h("section", { class: "session-view", "data-session": state.sessionId }, ...children);
}

export function renderSchemaPreview(meta: TableMetadata): VNode {
  const rows = meta.headers.map((header, j) => {
    const unit = meta.units[j] ? ` (${meta.units[j]})` : "";
    return h(
      "tr",
      {},
      h("td", { class: "col-name" }, header + unit),
      h("td", { class: "col-type" }, meta.types[j]),
      h("td", { class: "col-missing" }, `missing=${meta.missing[j]}`),
    );
  });
  return h(
    "div",
    { class: "schema-preview" },
    h("p", { class: "dims" }, `${meta.name}: ${meta.rows} rows × ${meta.cols} cols`),
    h(
      "table",
      {},
      h("thead", {}, h("tr", {}, h("th", {}, "column"), h("th", {}, "type"), h("th", {}, "missing"))),
      h("tbody", {}, ...rows),
    ),
  );
}

export function renderErrorBanner(message: string): VNode {
  return h(
    "div",
    { class: "error-banner", role: "alert" },
    message,
    h("button", { class: "retry", type: "button" }, "retry"),
  );
}
