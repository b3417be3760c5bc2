// patch-rectangle geometry and local validation, mirroring the server's
// checks so bad patch sets are caught before submission

export interface PatchDraft {
  channel: number;
  x: number;
  y: number;
  w: number;
  h: number;
}

// label colors, identical to the palette the service reports for labels.png
export const PALETTE: ReadonlyArray<readonly [number, number, number]> = [
  [230, 25, 75], [60, 180, 75], [255, 225, 25], [0, 130, 200],
  [245, 130, 48], [145, 30, 180], [70, 240, 240], [240, 50, 230],
  [210, 245, 60], [250, 190, 212], [0, 128, 128], [154, 99, 36],
];

export function channelColor(channel: number): readonly [number, number, number] {
  return PALETTE[(channel - 1) % PALETTE.length];
}

/** Snap a drag gesture (any corner order, fractional canvas coords) to an
 * integer pixel rectangle of at least 1x1. */
export function rectFromDrag(
  x0: number, y0: number, x1: number, y1: number, channel: number,
): PatchDraft {
  const left = Math.floor(Math.min(x0, x1));
  const top = Math.floor(Math.min(y0, y1));
  const right = Math.ceil(Math.max(x0, x1));
  const bottom = Math.ceil(Math.max(y0, y1));
  return {
    channel,
    x: left,
    y: top,
    w: Math.max(1, right - left),
    h: Math.max(1, bottom - top),
  };
}

export function inBounds(p: PatchDraft, width: number, height: number): boolean {
  return p.x >= 0 && p.y >= 0 && p.w >= 1 && p.h >= 1
    && p.x + p.w <= width && p.y + p.h <= height;
}

export function overlaps(a: PatchDraft, b: PatchDraft): boolean {
  return a.x < b.x + b.w && b.x < a.x + a.w
    && a.y < b.y + b.h && b.y < a.y + a.h;
}

export interface DraftProblem {
  index: number;
  message: string;
}

/** Validate a draft set against the image bounds and the run's K; returns
 * one problem per offending rectangle (empty list = submittable). */
export function validateDrafts(
  drafts: PatchDraft[], k: number, width: number, height: number,
): DraftProblem[] {
  const problems: DraftProblem[] = [];
  drafts.forEach((p, i) => {
    if (!Number.isInteger(p.channel) || p.channel < 1 || p.channel > k) {
      problems.push({ index: i, message: `channel ${p.channel} outside 1..${k}` });
    } else if (!inBounds(p, width, height)) {
      problems.push({ index: i, message: "patch out of bounds" });
    }
  });
  for (let i = 0; i < drafts.length; i++) {
    for (let j = i + 1; j < drafts.length; j++) {
      if (overlaps(drafts[i], drafts[j])) {
        problems.push({ index: j, message: `patches ${i + 1} and ${j + 1} are not disjoint` });
      }
    }
  }
  return problems;
}

/** Supervision request body; field set matches the shared JSON schema. */
export function toPayload(drafts: PatchDraft[]): { patches: PatchDraft[] } {
  return {
    patches: drafts.map((p) => ({
      channel: p.channel, x: p.x, y: p.y, w: p.w, h: p.h,
    })),
  };
}
