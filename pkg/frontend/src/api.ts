// Thin typed client for the admin API. Every mutation carries the acting
// admin identity; errors surface as ApiError with the server's error code.

import type {
  AuditRecord,
  EventBody,
  EventOutcome,
  NodeEntry,
  PendingEntry,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly errorCode: string,
    detail: string,
  ) {
    super(`${errorCode}: ${detail}`);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class AdminApi {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}/api/v1${path}`, {
      headers: { "content-type": "application/json" },
      ...init,
    });
    const body = await response.json();
    if (!response.ok) {
      throw new ApiError(
        response.status,
        String(body.error_code ?? "unknown"),
        String(body.detail ?? response.statusText),
      );
    }
    return body as T;
  }

  private post<T>(path: string, payload: unknown): Promise<T> {
    return this.request<T>(path, { method: "POST", body: JSON.stringify(payload) });
  }

  health(): Promise<{ status: string }> {
    return this.request("/health");
  }

  async theta(): Promise<number> {
    const body = await this.request<{ theta: number }>("/theta");
    return body.theta;
  }

  async setTheta(theta: number, actor: string): Promise<number> {
    const body = await this.request<{ theta: number }>("/theta", {
      method: "PUT",
      body: JSON.stringify({ theta, actor }),
    });
    return body.theta;
  }

  async pending(): Promise<PendingEntry[]> {
    const body = await this.request<{ pending: PendingEntry[] }>("/pending");
    return body.pending;
  }

  approve(nodeId: string, actor: string): Promise<unknown> {
    return this.post(`/pending/${nodeId}/approve`, { actor });
  }

  deny(nodeId: string, actor: string): Promise<unknown> {
    return this.post(`/pending/${nodeId}/deny`, { actor });
  }

  async nodes(): Promise<NodeEntry[]> {
    const body = await this.request<{ nodes: NodeEntry[] }>("/nodes");
    return body.nodes;
  }

  revoke(nodeId: string, actor: string): Promise<unknown> {
    return this.post(`/nodes/${nodeId}/revoke`, { actor });
  }

  readmit(nodeId: string, actor: string): Promise<unknown> {
    return this.post(`/nodes/${nodeId}/readmit`, { actor });
  }

  recalibrate(nodeId: string, actor: string): Promise<unknown> {
    return this.post(`/nodes/${nodeId}/recalibrate`, { actor });
  }

  async audit(sinceSeq: number): Promise<AuditRecord[]> {
    const body = await this.request<{ records: AuditRecord[] }>(
      `/audit?since_seq=${sinceSeq}`,
    );
    return body.records;
  }

  submitEvent(event: EventBody): Promise<EventOutcome> {
    return this.post("/events", event);
  }
}
