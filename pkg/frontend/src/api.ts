/** Typed client for the pipeline service HTTP API. */

import type { RenderQuery } from "./state.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export interface ServiceErrorBody {
  code: string;
  message: string;
  detail?: unknown;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly body: ServiceErrorBody,
  ) {
    super(`${body.code}: ${body.message}`);
  }
}

async function raise(response: Response): Promise<never> {
  let body: ServiceErrorBody;
  try {
    body = (await response.json()) as ServiceErrorBody;
  } catch {
    body = { code: "http_error", message: response.statusText };
  }
  throw new ApiError(response.status, body);
}

export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  async healthz(): Promise<boolean> {
    const r = await this.fetchImpl(`${this.baseUrl}/healthz`);
    return r.ok;
  }

  async createSession(files: Record<string, Blob>): Promise<string> {
    const form = new FormData();
    for (const [name, blob] of Object.entries(files)) {
      form.append(name, blob, `${name}.bin`);
    }
    const r = await this.fetchImpl(`${this.baseUrl}/sessions`, {
      method: "POST",
      body: form,
    });
    if (!r.ok) await raise(r);
    const body = (await r.json()) as { id: string };
    return body.id;
  }

  async runStage(sessionId: string, stage: "integrate" | "mesh"): Promise<void> {
    const r = await this.fetchImpl(
      `${this.baseUrl}/sessions/${sessionId}/stages/${stage}`,
      { method: "POST" },
    );
    if (!r.ok) await raise(r);
  }

  renderUrl(sessionId: string, q: RenderQuery): string {
    const params = new URLSearchParams({
      yaw: String(q.yaw),
      pitch: String(q.pitch),
      output: q.output,
      light: q.light,
      kd: String(q.kd),
      ks: q.ks,
    });
    return `${this.baseUrl}/sessions/${sessionId}/render?${params}`;
  }

  async render(sessionId: string, q: RenderQuery): Promise<ArrayBuffer> {
    const r = await this.fetchImpl(this.renderUrl(sessionId, q));
    if (!r.ok) await raise(r);
    return r.arrayBuffer();
  }

  async uploadLight(sessionId: string, pfm: Blob): Promise<string> {
    const form = new FormData();
    form.append("env", pfm, "env.pfm");
    const r = await this.fetchImpl(`${this.baseUrl}/sessions/${sessionId}/lights`, {
      method: "POST",
      body: form,
    });
    if (!r.ok) await raise(r);
    const body = (await r.json()) as { light_id: string };
    return body.light_id;
  }

  meshUrl(sessionId: string): string {
    return `${this.baseUrl}/sessions/${sessionId}/mesh`;
  }
}
