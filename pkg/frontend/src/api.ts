import { ApiErrorBody, ChatResponse, HealthInfo, SearchHit } from "./types.js";

/** Thrown for non-2xx responses; carries the server's error body verbatim. */
export class ApiError extends Error {
  status: number;
  body: ApiErrorBody;

  constructor(status: number, body: ApiErrorBody) {
    super(body.message);
    this.status = status;
    this.body = body;
  }
}

async function parseError(resp: Response): Promise<ApiError> {
  let body: ApiErrorBody = { code: "error", message: `HTTP ${resp.status}` };
  try {
    const parsed = await resp.json();
    if (parsed && typeof parsed.message === "string") {
      body = parsed;
    }
  } catch {
    // non-JSON error body; keep the fallback
  }
  return new ApiError(resp.status, body);
}

export async function sendChat(
  message: string,
  sessionId: string | null,
  base = "",
): Promise<ChatResponse> {
  const resp = await fetch(`${base}/chat`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(sessionId ? { session_id: sessionId, message } : { message }),
  });
  if (!resp.ok) {
    throw await parseError(resp);
  }
  return resp.json();
}

export async function searchExplain(query: string, k: number, base = ""): Promise<SearchHit[]> {
  const params = new URLSearchParams({ q: query, k: String(k), explain: "true" });
  const resp = await fetch(`${base}/search?${params}`);
  if (!resp.ok) {
    throw await parseError(resp);
  }
  return resp.json();
}

export async function fetchHealth(base = ""): Promise<HealthInfo> {
  const resp = await fetch(`${base}/healthz`);
  if (!resp.ok) {
    throw await parseError(resp);
  }
  return resp.json();
}
