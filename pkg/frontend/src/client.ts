/**
 * Service client and the debounced rig sender.
 *
 * The sender guarantees: control changes are coalesced over a debounce
 * window, at most one PUT is in flight, the latest intent is queued while
 * one is pending, and the final state is always sent. The acknowledged rig
 * never desyncs: it is exactly the last rig the service confirmed.
 */

import { LightRig, cloneRig, rigsEqual } from "./rig.js";

export interface RigDiagnostics {
  generation: number;
  clamped_pixels: number;
  render_seconds: number;
  preview_scale: number;
}

export interface SessionInfo {
  id: string;
  width: number;
  height: number;
  preview_scale: number;
  rig: LightRig;
}

export interface RelightService {
  openBundle(bundle: string): Promise<SessionInfo>;
  putRig(sessionId: string, rig: LightRig): Promise<RigDiagnostics>;
  previewUrl(sessionId: string): string;
  fetchPreview(sessionId: string): Promise<Blob>;
  exportFull(sessionId: string): Promise<Blob>;
  close(sessionId: string): Promise<void>;
}

export class HttpRelightService implements RelightService {
  constructor(private readonly base: string = "") {}

  private async check(resp: Response): Promise<Response> {
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const body = await resp.json();
        detail = typeof body.detail === "string" ? body.detail : JSON.stringify(body.detail);
      } catch {
        /* not JSON */
      }
      throw new Error(`${resp.status}: ${detail}`);
    }
    return resp;
  }

  async openBundle(bundle: string): Promise<SessionInfo> {
    const form = new FormData();
    form.set("bundle", bundle);
    const resp = await this.check(await fetch(`${this.base}/sessions`, { method: "POST", body: form }));
    return (await resp.json()) as SessionInfo;
  }

  async putRig(sessionId: string, rig: LightRig): Promise<RigDiagnostics> {
    const resp = await this.check(
      await fetch(`${this.base}/sessions/${sessionId}/rig`, {
        method: "PUT",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(rig),
      }),
    );
    return (await resp.json()) as RigDiagnostics;
  }

  previewUrl(sessionId: string): string {
    return `${this.base}/sessions/${sessionId}/preview`;
  }

  async fetchPreview(sessionId: string): Promise<Blob> {
    const resp = await this.check(await fetch(this.previewUrl(sessionId)));
    return resp.blob();
  }

  async exportFull(sessionId: string): Promise<Blob> {
    const resp = await this.check(
      await fetch(`${this.base}/sessions/${sessionId}/export?full=1`),
    );
    return resp.blob();
  }

  async close(sessionId: string): Promise<void> {
    await this.check(await fetch(`${this.base}/sessions/${sessionId}`, { method: "DELETE" }));
  }
}

export interface SenderEvents {
  onAcknowledged?: (rig: LightRig, diag: RigDiagnostics) => void;
  onError?: (message: string) => void;
}

export class DebouncedRigSender {
  private timer: ReturnType<typeof setTimeout> | null = null;
  private pendingRig: LightRig | null = null;
  private inFlight = false;
  private queued: LightRig | null = null;
  private acknowledgedRig: LightRig | null = null;
  /** Resolvers waiting for the sender to go idle. */
  private idleWaiters: (() => void)[] = [];

  constructor(
    private readonly service: RelightService,
    private readonly sessionId: string,
    private readonly events: SenderEvents = {},
    private readonly debounceMs: number = 80,
  ) {}

  /** Latest rig the service has confirmed rendering. */
  get acknowledged(): LightRig | null {
    return this.acknowledgedRig ? cloneRig(this.acknowledgedRig) : null;
  }

  get busy(): boolean {
    return this.inFlight || this.timer !== null || this.queued !== null;
  }

  /** Called on every control change; coalesces into one PUT per window. */
  update(rig: LightRig): void {
    this.pendingRig = cloneRig(rig);
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = setTimeout(() => {
      this.timer = null;
      this.flush();
    }, this.debounceMs);
  }

  /** Send immediately (reset button), still respecting the single-flight rule. */
  updateNow(rig: LightRig): void {
    this.pendingRig = cloneRig(rig);
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
    this.flush();
  }

  private flush(): void {
    if (this.pendingRig === null) return;
    const rig = this.pendingRig;
    this.pendingRig = null;
    if (this.inFlight) {
      this.queued = rig; // latest intent wins; intermediate states may be skipped
      return;
    }
    void this.send(rig);
  }

  private async send(rig: LightRig): Promise<void> {
    this.inFlight = true;
    try {
      const diag = await this.service.putRig(this.sessionId, rig);
      this.acknowledgedRig = cloneRig(rig);
      this.events.onAcknowledged?.(cloneRig(rig), diag);
    } catch (err) {
      this.events.onError?.(err instanceof Error ? err.message : String(err));
    } finally {
      this.inFlight = false;
      const next = this.queued;
      this.queued = null;
      if (next !== null && (this.acknowledgedRig === null || !rigsEqual(next, this.acknowledgedRig))) {
        void this.send(next);
      } else if (!this.busy) {
        this.idleWaiters.splice(0).forEach((resolve) => resolve());
      }
    }
  }

  /** Resolves once nothing is pending, queued, or in flight. */
  settled(): Promise<void> {
    if (!this.busy) return Promise.resolve();
    return new Promise((resolve) => this.idleWaiters.push(resolve));
  }
}
