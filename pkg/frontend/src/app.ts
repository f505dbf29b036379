import { ApiError, fetchHealth, searchExplain, sendChat } from "./api.js";
import { FUSION_LAMBDA, fusionHolds, similarityFromDistance } from "./fusion.js";
import { SearchHit, SourceRef } from "./types.js";

const SESSION_KEY = "campusqa.session";
const OFFLINE_NOTICE = "Could not reach the server. Check your connection and try again.";

export interface AppOptions {
  apiBase?: string;
  storage?: Storage;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

/**
 * Framework-free chat client over the JSON API: a conversation log with
 * per-answer source cards, plus a retrieval-explain inspector.
 *
 * Assistant bubbles only ever contain text taken from a server response
 * body; client-authored strings appear solely in the status banner.
 */
export class ChatApp {
  readonly root: HTMLElement;
  readonly log: HTMLElement;
  readonly form: HTMLFormElement;
  readonly input: HTMLInputElement;
  readonly sendButton: HTMLButtonElement;
  readonly newChatButton: HTMLButtonElement;
  readonly banner: HTMLElement;
  readonly explainForm: HTMLFormElement;
  readonly explainInput: HTMLInputElement;
  readonly kSelect: HTMLSelectElement;
  readonly explainTable: HTMLTableElement;
  readonly explainEmpty: HTMLElement;
  readonly healthNote: HTMLElement;

  sessionId: string | null;
  pending = false;
  inflight: Promise<void> | null = null;
  explainInflight: Promise<void> | null = null;

  private readonly apiBase: string;
  private readonly storage: Storage;

  constructor(root: HTMLElement, options: AppOptions = {}) {
    this.root = root;
    this.apiBase = options.apiBase ?? "";
    this.storage = options.storage ?? window.localStorage;
    this.sessionId = this.storage.getItem(SESSION_KEY);

    const header = el("header");
    header.append(el("h1", "", "campus assistant"));
    this.healthNote = el("span", "health-note", "");
    header.append(this.healthNote);

    this.log = el("div", "chat-log");
    this.log.setAttribute("role", "log");
    this.log.setAttribute("aria-live", "polite");

    this.banner = el("div", "banner");
    this.banner.hidden = true;

    this.form = el("form", "chat-form");
    this.input = el("input");
    this.input.type = "text";
    this.input.setAttribute("aria-label", "Your question");
    this.input.placeholder = "Ask about courses, schedules, services...";
    this.sendButton = el("button", "send", "Send");
    this.sendButton.type = "submit";
    this.newChatButton = el("button", "new-chat", "New chat");
    this.newChatButton.type = "button";
    this.form.append(this.input, this.sendButton, this.newChatButton);

    const chatPanel = el("section", "chat-panel");
    chatPanel.append(this.log, this.banner, this.form);

    this.explainForm = el("form", "explain-form");
    this.explainInput = el("input");
    this.explainInput.type = "search";
    this.explainInput.setAttribute("aria-label", "Explain retrieval for a query");
    this.explainInput.placeholder = "Inspect retrieval scores...";
    this.kSelect = el("select", "k-select");
    for (const k of [5, 10, 20]) {
      const option = el("option", "", String(k));
      option.value = String(k);
      this.kSelect.append(option);
    }
    this.kSelect.setAttribute("aria-label", "Result count");
    const explainButton = el("button", "", "Explain");
    explainButton.type = "submit";
    this.explainForm.append(this.explainInput, this.kSelect, explainButton);

    this.explainTable = el("table", "explain-table");
    this.explainTable.hidden = true;
    this.explainEmpty = el("div", "explain-empty", "no matches");
    this.explainEmpty.hidden = true;

    const explainPanel = el("section", "explain-panel");
    explainPanel.append(el("h2", "", "Retrieval inspector"), this.explainForm, this.explainTable, this.explainEmpty);

    this.root.append(header, chatPanel, explainPanel);

    this.form.addEventListener("submit", (ev) => {
      ev.preventDefault();
      const text = this.input.value.trim();
      if (!text || this.pending) {
        return;
      }
      this.inflight = this.send(text);
    });
    this.newChatButton.addEventListener("click", () => this.newChat());
    this.explainForm.addEventListener("submit", (ev) => {
      ev.preventDefault();
      const query = this.explainInput.value.trim();
      if (!query) {
        return;
      }
      this.explainInflight = this.runExplain(query, Number(this.kSelect.value));
    });

    void this.refreshHealth();
  }

  private async refreshHealth(): Promise<void> {
    try {
      const health = await fetchHealth(this.apiBase);
      this.healthNote.textContent = `${health.status} - ${health.counts["vectors"] ?? 0} indexed chunks`;
    } catch {
      this.healthNote.textContent = "";
    }
  }

  newChat(): void {
    this.storage.removeItem(SESSION_KEY);
    this.sessionId = null;
    this.log.replaceChildren();
    this.banner.hidden = true;
  }

  private appendBubble(role: "user" | "assistant", text: string, error = false): HTMLElement {
    const bubble = el("div", `msg ${role}${error ? " error" : ""}`);
    bubble.append(el("p", "msg-text", text));
    this.log.append(bubble);
    this.log.scrollTop = this.log.scrollHeight;
    return bubble;
  }

  async send(text: string): Promise<void> {
    this.pending = true;
    this.input.disabled = true;
    this.sendButton.disabled = true;
    this.banner.hidden = true;
    this.appendBubble("user", text);
    this.input.value = "";
    try {
      const resp = await sendChat(text, this.sessionId, this.apiBase);
      this.sessionId = resp.session_id;
      this.storage.setItem(SESSION_KEY, resp.session_id);
      const bubble = this.appendBubble("assistant", resp.reply);
      if (resp.sources.length) {
        bubble.append(this.renderSources(text, resp.sources));
      }
    } catch (err) {
      if (err instanceof ApiError) {
        // the server supplied user-facing text (e.g. the 503 retry notice)
        this.appendBubble("assistant", err.body.message, true);
      } else {
        this.banner.textContent = OFFLINE_NOTICE;
        this.banner.hidden = false;
      }
    } finally {
      this.pending = false;
      this.input.disabled = false;
      this.sendButton.disabled = false;
      this.input.focus();
    }
  }

  private renderSources(query: string, sources: SourceRef[]): HTMLElement {
    const wrap = el("div", "sources");
    let hitsPromise: Promise<SearchHit[]> | null = null;
    const lookup = () => {
      // document text comes from the explain payload for the same query
      hitsPromise ??= searchExplain(query, Math.max(sources.length, 5), this.apiBase);
      return hitsPromise;
    };
    for (const source of sources) {
      const card = el("details", "source-card");
      card.dataset.sourceId = source.id;
      const summary = el(
        "summary",
        "",
        `${source.table}/${source.source_id.slice(0, 8)} (score ${source.combined.toFixed(4)})`,
      );
      const body = el("div", "card-body", "loading...");
      card.append(summary, body);
      card.addEventListener("toggle", () => {
        if (!card.open || card.dataset.loaded) {
          return;
        }
        card.dataset.loaded = "pending";
        void lookup()
          .then((hits) => {
            const hit = hits.find((h) => h.id === source.id);
            body.replaceChildren();
            if (hit) {
              body.append(el("p", "card-text", hit.document));
              body.append(el("p", "card-score", `combined ${hit.combined.toFixed(4)}`));
            } else {
              body.textContent = "document not available";
            }
            card.dataset.loaded = "done";
          })
          .catch(() => {
            body.textContent = "could not load document";
            delete card.dataset.loaded;
          });
      });
      wrap.append(card);
    }
    return wrap;
  }

  async runExplain(query: string, k: number): Promise<void> {
    let hits: SearchHit[];
    try {
      hits = await searchExplain(query, k, this.apiBase);
    } catch {
      this.explainTable.hidden = true;
      this.explainEmpty.textContent = "search failed";
      this.explainEmpty.hidden = false;
      return;
    }
    if (!hits.length) {
      this.explainTable.hidden = true;
      this.explainEmpty.textContent = "no matches";
      this.explainEmpty.hidden = false;
      return;
    }
    this.explainEmpty.hidden = true;
    const ranked = [...hits].sort((a, b) => b.combined - a.combined || a.id.localeCompare(b.id));
    const head = el("thead");
    const headRow = el("tr");
    for (const label of ["id", "bm25_raw", "bm25_norm", "distance", "similarity", "combined", "check"]) {
      headRow.append(el("th", "", label));
    }
    head.append(headRow);
    const body = el("tbody");
    for (const hit of ranked) {
      const row = el("tr");
      const similarity = hit.similarity ?? similarityFromDistance(hit.distance);
      const ok = fusionHolds({ ...hit, similarity }, FUSION_LAMBDA);
      row.dataset.id = hit.id;
      row.dataset.combined = String(hit.combined);
      row.dataset.bm25Norm = String(hit.bm25_norm ?? 0);
      row.dataset.similarity = String(similarity);
      row.dataset.eqOk = ok ? "true" : "false";
      row.append(el("td", "cell-id", hit.id));
      row.append(el("td", "", (hit.bm25_raw ?? 0).toFixed(4)));
      row.append(el("td", "", (hit.bm25_norm ?? 0).toFixed(4)));
      row.append(el("td", "", hit.distance === null || hit.distance === undefined ? "absent" : hit.distance.toFixed(4)));
      row.append(el("td", "", similarity.toFixed(4)));
      row.append(el("td", "", hit.combined.toFixed(4)));
      row.append(el("td", "cell-check", ok ? "ok" : "MISMATCH"));
      body.append(row);
    }
    this.explainTable.replaceChildren(head, body);
    this.explainTable.hidden = false;
  }
}

export function createApp(root: HTMLElement, options: AppOptions = {}): ChatApp {
  return new ChatApp(root, options);
}
