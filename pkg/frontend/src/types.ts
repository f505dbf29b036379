export interface SourceRef {
  id: string;
  table: string;
  source_id: string;
  combined: number;
}

export interface ChatResponse {
  session_id: string;
  reply: string;
  sources: SourceRef[];
}

export interface ApiErrorBody {
  code: string;
  message: string;
}

export interface SearchHit {
  id: string;
  document: string;
  combined: number;
  bm25_raw?: number;
  bm25_norm?: number;
  distance?: number | null;
  similarity?: number;
}

export interface HealthInfo {
  status: string;
  versions: Record<string, unknown>;
  counts: Record<string, number>;
}
