// DOM rendering and the polling loop. State always reflects the last server
// responses; mutations trigger an immediate re-poll instead of optimistic
// updates.

import { AdminApi, ApiError } from "./api.js";
import {
  buildModel,
  describeAudit,
  lastSeq,
  mergeAudit,
  scoreSeries,
  shortId,
} from "./state.js";
import type { AuditRecord, EventBody } from "./types.js";

const POLL_INTERVAL_MS = 1000;
const ACTOR_KEY = "cogwlan-admin-name";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function sparkline(scores: number[], theta: number): string {
  if (!scores.length) return "";
  const w = 120;
  const h = 28;
  const max = Math.max(theta * 1.6, ...scores, 1e-6);
  const step = scores.length > 1 ? w / (scores.length - 1) : 0;
  const points = scores
    .map((s, i) => `${(i * step).toFixed(1)},${(h - (s / max) * h).toFixed(1)}`)
    .join(" ");
  const thetaY = (h - (theta / max) * h).toFixed(1);
  return (
    `<svg class="spark" viewBox="0 0 ${w} ${h}" width="${w}" height="${h}">` +
    `<line x1="0" y1="${thetaY}" x2="${w}" y2="${thetaY}" class="spark-theta"/>` +
    `<polyline points="${points}" class="spark-line"/></svg>`
  );
}

export class Console {
  private audit: AuditRecord[] = [];
  private timer: number | undefined;

  constructor(private readonly api: AdminApi) {}

  actor(): string {
    return (el<HTMLInputElement>("admin-name").value || "admin").trim();
  }

  async refresh(): Promise<void> {
    try {
      const [theta, pending, nodes, fresh] = await Promise.all([
        this.api.theta(),
        this.api.pending(),
        this.api.nodes(),
        this.api.audit(lastSeq(this.audit)),
      ]);
      this.audit = mergeAudit(this.audit, fresh);
      this.render(theta, buildModel(theta, pending, nodes));
      this.notice("");
    } catch (err) {
      this.notice(`refresh failed: ${err instanceof Error ? err.message : err} (retrying)`);
    }
  }

  private render(theta: number, model: ReturnType<typeof buildModel>): void {
    const slider = el<HTMLInputElement>("theta-slider");
    if (document.activeElement !== slider) slider.value = String(theta);
    el("theta-value").textContent = theta.toFixed(3);

    const pendingList = el("pending-list");
    pendingList.innerHTML = "";
    if (!model.pending.length) {
      pendingList.innerHTML = '<li class="empty">no nodes awaiting discretion</li>';
    }
    for (const row of model.pending) {
      const item = document.createElement("li");
      item.innerHTML = `<code>${row.label}</code> <span class="dim">${row.shortId}</span>`;
      for (const [label, handler] of [
        ["approve", () => this.api.approve(row.nodeId, this.actor())],
        ["deny", () => this.api.deny(row.nodeId, this.actor())],
      ] as const) {
        const button = document.createElement("button");
        button.textContent = label;
        button.className = label;
        button.onclick = () => this.mutate(handler);
        item.appendChild(button);
      }
      pendingList.appendChild(item);
    }

    const series = scoreSeries(this.audit);
    const body = el("node-rows");
    body.innerHTML = "";
    for (const row of model.nodes) {
      const tr = document.createElement("tr");
      const score =
        row.lastScore != null
          ? `${row.lastScore.toFixed(4)} / θ=${row.thetaUsed?.toFixed(3)}`
          : "—";
      tr.innerHTML =
        `<td><code>${row.shortId}</code></td>` +
        `<td><span class="status ${row.status}">${row.status}</span></td>` +
        `<td>${row.historyLen}</td>` +
        `<td>${score} ${row.lastDecision === "deviated" ? "⚠" : ""}</td>` +
        `<td>${sparkline(series.get(row.nodeId) ?? [], theta)}</td>`;
      const actions = document.createElement("td");
      for (const action of row.actions) {
        const button = document.createElement("button");
        button.textContent = action;
        button.onclick = () =>
          this.mutate(() => {
            if (action === "revoke") return this.api.revoke(row.nodeId, this.actor());
            if (action === "readmit") return this.api.readmit(row.nodeId, this.actor());
            return this.api.recalibrate(row.nodeId, this.actor());
          });
        actions.appendChild(button);
      }
      tr.appendChild(actions);
      body.appendChild(tr);
    }

    const feed = el("audit-feed");
    feed.innerHTML = "";
    for (const record of this.audit.slice(-40).reverse()) {
      const line = document.createElement("li");
      line.textContent = describeAudit(record);
      feed.appendChild(line);
    }
  }

  private async mutate(run: () => Promise<unknown>): Promise<void> {
    try {
      await run();
    } catch (err) {
      if (err instanceof ApiError) this.notice(`action rejected: ${err.message}`);
      else this.notice(`action failed: ${err instanceof Error ? err.message : err}`);
    }
    await this.refresh();
  }

  private notice(text: string): void {
    el("notice").textContent = text;
  }

  bind(): void {
    const actorBox = el<HTMLInputElement>("admin-name");
    actorBox.value = localStorage.getItem(ACTOR_KEY) ?? "admin";
    actorBox.onchange = () => localStorage.setItem(ACTOR_KEY, this.actor());

    const slider = el<HTMLInputElement>("theta-slider");
    slider.onchange = () =>
      this.mutate(() => this.api.setTheta(Number(slider.value), this.actor()));

    el<HTMLFormElement>("injector").onsubmit = (event) => {
      event.preventDefault();
      const mac = el<HTMLInputElement>("inject-mac").value.trim() || "02:00:00:00:00:01";
      const up = Number(el<HTMLInputElement>("inject-up").value) || 0;
      const down = Number(el<HTMLInputElement>("inject-down").value) || 0;
      const sessions = Number(el<HTMLInputElement>("inject-sessions").value) || 0;
      const body: EventBody = {
        attributes: [
          ["hardware_address", mac],
          ["chipset", "console-injected"],
          ["radio_bands", "b|g|n"],
        ],
        services: {
          data_server: { bytes_up: up, bytes_down: down, session_count: sessions },
          internet: { bytes_up: Math.round(up / 2), bytes_down: Math.round(down / 2), session_count: sessions },
        },
      };
      void this.mutate(async () => {
        const outcome = await this.api.submitEvent(body);
        this.notice(`event for ${shortId(outcome.node_id)} -> ${outcome.path}`);
      });
    };
  }

  start(): void {
    this.bind();
    void this.refresh();
    this.timer = window.setInterval(() => void this.refresh(), POLL_INTERVAL_MS);
  }

  stop(): void {
    if (this.timer !== undefined) window.clearInterval(this.timer);
  }
}
