// thin client for the supervision service; every number shown in the UI
// comes from these responses, no solver logic lives in the browser

import type { PatchDraft } from "./patches.js";

export interface SessionInfo {
  session_id: string;
  width: number;
  height: number;
}

export interface RunForm {
  model: "full" | "pc";
  k: number;
  lambda: number;
  alpha: number;
  epsilon: number;
  seed: number;
  max_outer: number;
}

export interface TraceRow {
  iter: number;
  data: number;
  sobolev: number;
  mm: number;
  total: number;
  max_dp: number;
}

export interface Terminator {
  status: "done" | "failed";
  error?: string;
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function errorOf(r: Response): Promise<ApiError> {
  let message = r.statusText;
  try {
    const doc = await r.json();
    if (doc && typeof doc.error === "string") message = doc.error;
  } catch {
    // non-JSON error body, keep the status text
  }
  return new ApiError(r.status, message);
}

/** Incremental NDJSON splitter: feed() arbitrary chunks, get complete
 * documents; a trailing partial line is buffered until the next chunk. */
export class NdjsonBuffer {
  private pending = "";

  feed(chunk: string): unknown[] {
    this.pending += chunk;
    const lines = this.pending.split("\n");
    this.pending = lines.pop() ?? "";
    return lines.filter((l) => l.trim() !== "").map((l) => JSON.parse(l));
  }

  flush(): unknown[] {
    const rest = this.pending.trim();
    this.pending = "";
    return rest === "" ? [] : [JSON.parse(rest)];
  }
}

export function eventsUrl(base: string, sid: string, rid: string, from: number): string {
  return `${base}/api/v1/sessions/${sid}/runs/${rid}/events?from=${from}`;
}

export class ApiClient {
  constructor(private base: string = "") {}

  async createSession(image: Blob): Promise<SessionInfo> {
    const r = await fetch(`${this.base}/api/v1/sessions`, {
      method: "POST",
      body: image,
    });
    if (!r.ok) throw await errorOf(r);
    return r.json();
  }

  async putSupervision(
    sid: string, payload: { patches: PatchDraft[] },
  ): Promise<{ stored: boolean; areas: Record<string, number> }> {
    const r = await fetch(`${this.base}/api/v1/sessions/${sid}/supervision`, {
      method: "PUT",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
    if (!r.ok) throw await errorOf(r);
    return r.json();
  }

  async startRun(sid: string, form: RunForm): Promise<string> {
    const r = await fetch(`${this.base}/api/v1/sessions/${sid}/runs`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(form),
    });
    if (!r.ok) throw await errorOf(r);
    return (await r.json()).run_id;
  }

  /** Consume the event stream, reconnecting with ?from= after drops;
   * resolves with the terminator once the run finishes either way. */
  async watchRun(
    sid: string, rid: string, onRow: (row: TraceRow) => void,
  ): Promise<Terminator> {
    let next = 1;
    for (;;) {
      let r: Response;
      try {
        r = await fetch(eventsUrl(this.base, sid, rid, next));
      } catch {
        await new Promise((f) => setTimeout(f, 1000));
        continue;
      }
      if (!r.ok) throw await errorOf(r);
      const reader = r.body!.getReader();
      const decoder = new TextDecoder();
      const buf = new NdjsonBuffer();
      let dropped = false;
      for (;;) {
        let res: ReadableStreamReadResult<Uint8Array>;
        try {
          res = await reader.read();
        } catch {
          dropped = true;
          break;
        }
        const docs = res.done
          ? buf.flush()
          : buf.feed(decoder.decode(res.value, { stream: true }));
        for (const doc of docs) {
          const d = doc as Record<string, unknown>;
          if ("status" in d) return d as unknown as Terminator;
          onRow(d as unknown as TraceRow);
          next += 1;
        }
        if (res.done) break;
      }
      if (!dropped) {
        // stream ended without a terminator; resume from where we stopped
      }
      await new Promise((f) => setTimeout(f, 500));
    }
  }

  async summary(sid: string, rid: string): Promise<Record<string, unknown>> {
    const r = await fetch(`${this.base}/api/v1/sessions/${sid}/runs/${rid}/summary`);
    if (!r.ok) throw await errorOf(r);
    return r.json();
  }

  async palette(
    sid: string, rid: string,
  ): Promise<{ palette: { label: number; rgb: number[] }[] }> {
    const r = await fetch(`${this.base}/api/v1/sessions/${sid}/runs/${rid}/labels/palette`);
    if (!r.ok) throw await errorOf(r);
    return r.json();
  }

  labelsUrl(sid: string, rid: string): string {
    return `${this.base}/api/v1/sessions/${sid}/runs/${rid}/labels`;
  }

  ownershipUrl(sid: string, rid: string, channel: number): string {
    return `${this.base}/api/v1/sessions/${sid}/runs/${rid}/ownership/${channel}`;
  }
}
