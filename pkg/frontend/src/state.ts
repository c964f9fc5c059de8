// Pure view-model derivation. Everything rendered comes from API payloads;
// the console never invents status on its own.

import type { AuditRecord, DeviationReport, NodeEntry, PendingEntry } from "./types.js";

export interface PendingRow {
  nodeId: string;
  shortId: string;
  receivedAt: number;
  label: string;
}

export interface NodeRow {
  nodeId: string;
  shortId: string;
  status: "authorized" | "unauthorized";
  historyLen: number;
  lastScore: number | null;
  lastDecision: string | null;
  thetaUsed: number | null;
  actions: ("revoke" | "recalibrate" | "readmit")[];
}

export interface ConsoleModel {
  theta: number;
  pending: PendingRow[];
  nodes: NodeRow[];
}

export function shortId(nodeId: string): string {
  return nodeId.slice(0, 10);
}

function pendingLabel(entry: PendingEntry): string {
  const byName = new Map(entry.attributes.map(([name, value]) => [name, String(value)]));
  return byName.get("hardware_address") ?? shortId(entry.node_id);
}

export function buildPendingRows(entries: PendingEntry[]): PendingRow[] {
  return [...entries]
    .sort((a, b) => a.received_at - b.received_at)
    .map((entry) => ({
      nodeId: entry.node_id,
      shortId: shortId(entry.node_id),
      receivedAt: entry.received_at,
      label: pendingLabel(entry),
    }));
}

export function buildNodeRows(entries: NodeEntry[]): NodeRow[] {
  const rows = entries.map((entry): NodeRow => {
    const actions: NodeRow["actions"] =
      entry.status === "authorized" ? ["revoke", "recalibrate"] : ["readmit"];
    return {
      nodeId: entry.node_id,
      shortId: shortId(entry.node_id),
      status: entry.status,
      historyLen: entry.history_len,
      lastScore: entry.last_score,
      lastDecision: entry.last_decision,
      thetaUsed: entry.theta_used,
      actions,
    };
  });
  // authorized first, then by id for a stable table
  return rows.sort((a, b) =>
    a.status === b.status ? a.nodeId.localeCompare(b.nodeId) : a.status === "authorized" ? -1 : 1,
  );
}

export function buildModel(
  theta: number,
  pending: PendingEntry[],
  nodes: NodeEntry[],
): ConsoleModel {
  return { theta, pending: buildPendingRows(pending), nodes: buildNodeRows(nodes) };
}

export function lastSeq(records: AuditRecord[]): number {
  return records.length ? records[records.length - 1].seq : 0;
}

export function mergeAudit(
  existing: AuditRecord[],
  incoming: AuditRecord[],
  cap = 200,
): AuditRecord[] {
  const seen = new Set(existing.map((r) => r.seq));
  const merged = existing.concat(incoming.filter((r) => !seen.has(r.seq)));
  merged.sort((a, b) => a.seq - b.seq);
  return merged.slice(-cap);
}

// Per-node deviation-score series harvested from polled event records, used
// for the score-vs-theta sparkline. Rebuilt from the feed, so a reload
// simply re-derives it.
export function scoreSeries(records: AuditRecord[], cap = 30): Map<string, number[]> {
  const series = new Map<string, number[]>();
  for (const record of records) {
    if (record.kind !== "event") continue;
    const deviation = (record.result as { deviation?: DeviationReport | null }).deviation;
    if (!deviation) continue;
    const existing = series.get(deviation.node_id) ?? [];
    existing.push(deviation.score);
    series.set(deviation.node_id, existing.slice(-cap));
  }
  return series;
}

export function describeAudit(record: AuditRecord): string {
  if (record.kind === "admin") {
    const payload = record.payload as { kind?: string; actor?: string; target?: string };
    const target = payload.target ? ` ${shortId(String(payload.target))}` : "";
    return `#${record.seq} admin ${payload.kind}${target} by ${payload.actor}`;
  }
  const result = record.result as { path?: string; deviation?: DeviationReport | null };
  const activity = record.payload as { activity?: { node_id?: string } };
  const node = activity.activity?.node_id ? shortId(String(activity.activity.node_id)) : "?";
  const score =
    result.deviation != null ? ` score=${result.deviation.score.toFixed(4)}` : "";
  return `#${record.seq} event ${node} -> ${result.path}${score}`;
}
