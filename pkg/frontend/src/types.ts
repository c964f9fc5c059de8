// API payload shapes (schema_version 1).

export type AttrValue = string | number;

export interface PendingEntry {
  node_id: string;
  received_at: number;
  attributes: [string, AttrValue][];
}

export interface NodeEntry {
  node_id: string;
  status: "authorized" | "unauthorized";
  admitted_at: number;
  history_len: number;
  last_score: number | null;
  last_decision: "normal" | "deviated" | null;
  theta_used: number | null;
}

export interface DeviationReport {
  node_id: string;
  score: number;
  theta_used: number;
  decision: "normal" | "deviated";
  history_len: number;
  scored_by: "neural" | "bootstrap";
}

export interface AuditRecord {
  seq: number;
  kind: "event" | "admin";
  at: number;
  payload: Record<string, unknown>;
  result: Record<string, unknown>;
}

export interface EventOutcome {
  node_id: string;
  path: string;
  audit_seq: number;
  deviation: DeviationReport | null;
}

export interface UsageBody {
  bytes_up: number;
  bytes_down: number;
  session_count: number;
}

export interface EventBody {
  attributes: [string, AttrValue][];
  services: Record<string, UsageBody>;
  failed_auth_count?: number;
  ap_id?: number;
}
