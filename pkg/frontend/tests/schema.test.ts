// supervision payloads produced by the drawing workflow must validate
// against the same schema file the server and CLI use

import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import { dirname, join } from "node:path";

import Ajv from "ajv";
import { describe, expect, it } from "vitest";

import { rectFromDrag, toPayload } from "../src/patches";

const here = dirname(fileURLToPath(import.meta.url));
const schemaPath = join(
  here, "..", "..", "src", "softms", "schemas", "supervision.schema.json",
);
const schema = JSON.parse(readFileSync(schemaPath, "utf-8"));
const ajv = new Ajv();
const validate = ajv.compile(schema);

describe("shared supervision schema", () => {
  it("accepts a drawn two-patch payload", () => {
    const drafts = [
      rectFromDrag(4.2, 4.7, 12.1, 12.9, 1),
      rectFromDrag(40.0, 40.0, 48.0, 48.0, 2),
    ];
    expect(validate(toPayload(drafts))).toBe(true);
  });

  it("accepts 3-patch and 4-patch workflows", () => {
    for (const n of [3, 4]) {
      const drafts = Array.from({ length: n }, (_, i) =>
        rectFromDrag(i * 20, 0, i * 20 + 8, 8, i + 1));
      expect(validate(toPayload(drafts))).toBe(true);
    }
  });

  it("accepts an empty patch list", () => {
    expect(validate(toPayload([]))).toBe(true);
  });

  it("rejects non-integer and degenerate rectangles", () => {
    expect(validate({ patches: [{ channel: 1, x: 0.5, y: 0, w: 4, h: 4 }] }))
      .toBe(false);
    expect(validate({ patches: [{ channel: 1, x: 0, y: 0, w: 0, h: 4 }] }))
      .toBe(false);
    expect(validate({ patches: [{ channel: 0, x: 0, y: 0, w: 4, h: 4 }] }))
      .toBe(false);
  });

  it("rejects unknown fields", () => {
    expect(validate({ patches: [], note: "hi" })).toBe(false);
    expect(validate({ patches: [{ channel: 1, x: 0, y: 0, w: 1, h: 1, z: 2 }] }))
      .toBe(false);
  });

  it("drag gestures can never produce schema-invalid rectangles", () => {
    for (let trial = 0; trial < 200; trial++) {
      const x0 = Math.random() * 64;
      const y0 = Math.random() * 64;
      const x1 = Math.random() * 64;
      const y1 = Math.random() * 64;
      const channel = 1 + Math.floor(Math.random() * 5);
      const body = toPayload([rectFromDrag(x0, y0, x1, y1, channel)]);
      expect(validate(body)).toBe(true);
    }
  });
});
