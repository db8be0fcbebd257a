import { describe, expect, it } from "vitest";
import { parseMesh, ServiceClient } from "../src/protocol.js";

function wireBuffer(
  positions: number[],
  indices: number[],
  labels: number[],
): ArrayBuffer {
  const nv = positions.length / 3;
  const nf = indices.length / 3;
  const buf = new ArrayBuffer(8 + nv * 12 + nf * 12 + nv * 2);
  const view = new DataView(buf);
  view.setUint32(0, nv, true);
  view.setUint32(4, nf, true);
  new Float32Array(buf, 8, nv * 3).set(positions);
  new Uint32Array(buf, 8 + nv * 12, nf * 3).set(indices);
  new Uint16Array(buf, 8 + nv * 12 + nf * 12, nv).set(labels);
  return buf;
}

describe("parseMesh", () => {
  it("decodes vertices, faces and labels", () => {
    const buf = wireBuffer([0, 0, 0, 1, 0, 0, 0, 1, 0], [0, 1, 2], [3, 1, 4]);
    const m = parseMesh(buf);
    expect(m.nVertices).toBe(3);
    expect(m.nFaces).toBe(1);
    expect([...m.positions.slice(3, 6)]).toEqual([1, 0, 0]);
    expect([...m.indices]).toEqual([0, 1, 2]);
    expect([...m.labels]).toEqual([3, 1, 4]);
  });

  it("rejects truncated payloads", () => {
    const buf = wireBuffer([0, 0, 0], [], [0]);
    expect(() => parseMesh(buf.slice(0, buf.byteLength - 1))).toThrow(/size/);
  });

  it("rejects tiny payloads", () => {
    expect(() => parseMesh(new ArrayBuffer(4))).toThrow(/short/);
  });
});

describe("ServiceClient", () => {
  it("raises on HTTP errors", async () => {
    const client = new ServiceClient("", async () =>
      new Response("nope", { status: 404 }),
    );
    await expect(client.scenes()).rejects.toThrow(/404/);
  });

  it("parses listings", async () => {
    const client = new ServiceClient("", async (url) => {
      if (url.endsWith("/api/scenes")) {
        return Response.json({ scenes: [{ id: "room", classes: ["floor"], n_vertices: 8, has_sdf: true }] });
      }
      throw new Error("unexpected " + url);
    });
    const scenes = await client.scenes();
    expect(scenes[0].id).toBe("room");
    expect(scenes[0].classes).toEqual(["floor"]);
  });
});
