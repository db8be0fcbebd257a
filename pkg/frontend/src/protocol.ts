/**
 * Service wire protocol: binary mesh parsing and the HTTP/WS API client.
 *
 * The client is injectable with fetch/WebSocket factories so tests can run
 * it against a mock service. The viewer performs no placement math: every
 * energy, transform and distance it shows originates from these responses.
 */

export interface WireMesh {
  positions: Float32Array; // 3 * nVertices
  indices: Uint32Array; // 3 * nFaces
  labels: Uint16Array; // nVertices
  nVertices: number;
  nFaces: number;
}

export function parseMesh(buf: ArrayBuffer): WireMesh {
  const view = new DataView(buf);
  if (buf.byteLength < 8) throw new Error("mesh payload too short");
  const nVertices = view.getUint32(0, true);
  const nFaces = view.getUint32(4, true);
  let off = 8;
  const need = 8 + nVertices * 12 + nFaces * 12 + nVertices * 2;
  if (buf.byteLength !== need) {
    throw new Error(`mesh payload size ${buf.byteLength}, expected ${need}`);
  }
  const positions = new Float32Array(buf, off, nVertices * 3);
  off += nVertices * 12;
  const indices = new Uint32Array(buf, off, nFaces * 3);
  off += nFaces * 12;
  const labels = new Uint16Array(buf, off, nVertices);
  return { positions, indices, labels, nVertices, nFaces };
}

export interface Transform {
  translation: [number, number, number];
  yaw: number;
  pose_delta?: number[];
}

export interface Energies {
  afford_contact: number;
  afford_semantic: number;
  pen: number;
  reg: number;
  total: number;
}

export interface PlacementResultDoc {
  transform: Transform;
  energies: Energies;
  converged: boolean;
  trace: [number, number][];
}

export interface SceneInfo {
  id: string;
  classes: string[];
  n_vertices: number;
  has_sdf: boolean;
}

export interface BodyInfo {
  id: string;
  n_vertices: number;
  topology: string;
}

export interface SampleResponse {
  fmap_ids: string[];
  summaries: { contact: number[]; semantic_class: number[] }[];
  class_names: string[];
}

export interface ProgressEvent {
  type: "progress" | "done" | "failed" | "cancelled";
  job: number;
  step?: number;
  total_energy?: number;
  result?: PlacementResultDoc & { body_file?: string };
  error?: string;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export interface SocketLike {
  onmessage: ((ev: { data: string }) => void) | null;
  onclose: (() => void) | null;
  close(): void;
}

export type SocketFactory = (url: string) => SocketLike;

export class ServiceClient {
  constructor(
    private base: string = "",
    private fetcher: FetchLike = (u, i) => fetch(u, i),
    private socketFactory: SocketFactory = (u) => new WebSocket(u) as unknown as SocketLike,
  ) {}

  private async json<T>(url: string, init?: RequestInit): Promise<T> {
    const r = await this.fetcher(this.base + url, init);
    if (!r.ok) throw new Error(`${url}: HTTP ${r.status} ${await r.text()}`);
    return (await r.json()) as T;
  }

  async scenes(): Promise<SceneInfo[]> {
    return (await this.json<{ scenes: SceneInfo[] }>("/api/scenes")).scenes;
  }

  async bodies(): Promise<BodyInfo[]> {
    return (await this.json<{ bodies: BodyInfo[] }>("/api/bodies")).bodies;
  }

  async sceneMesh(id: string): Promise<WireMesh> {
    const r = await this.fetcher(`${this.base}/api/scene/${id}/mesh`);
    if (!r.ok) throw new Error(`scene mesh: HTTP ${r.status}`);
    return parseMesh(await r.arrayBuffer());
  }

  async bodyMesh(id: string): Promise<WireMesh> {
    const r = await this.fetcher(`${this.base}/api/body/${id}/mesh`);
    if (!r.ok) throw new Error(`body mesh: HTTP ${r.status}`);
    return parseMesh(await r.arrayBuffer());
  }

  async sample(bodyId: string, n: number, seed: number): Promise<SampleResponse> {
    return this.json("/api/sample", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ body_id: bodyId, n, seed }),
    });
  }

  async place(req: {
    body_id: string;
    scene_id: string;
    fmap_id: string;
    init?: Transform;
    mode?: string;
    seed?: number;
    iters?: number;
  }): Promise<number> {
    const doc = await this.json<{ job_id: number }>("/api/place", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(req),
    });
    return doc.job_id;
  }

  async jobState(id: number): Promise<{
    state: string;
    result: (PlacementResultDoc & { body_file?: string }) | null;
    error: string | null;
  }> {
    return this.json(`/api/job/${id}`);
  }

  async cancel(id: number): Promise<{ state: string }> {
    return this.json(`/api/job/${id}/cancel`, { method: "POST" });
  }

  async minSdf(sceneId: string, bodyId: string, transform: Transform): Promise<number> {
    const doc = await this.json<{ min_sdf: number }>("/api/min_sdf", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ scene_id: sceneId, body_id: bodyId, transform }),
    });
    return doc.min_sdf;
  }

  /** Subscribe to job progress events; returns an unsubscribe function. */
  subscribe(onEvent: (ev: ProgressEvent) => void): () => void {
    const base = this.base.replace(/^http/, "ws");
    const sock = this.socketFactory(`${base}/api/ws`);
    sock.onmessage = (ev) => {
      try {
        onEvent(JSON.parse(ev.data) as ProgressEvent);
      } catch {
        // non-JSON frames are ignored
      }
    };
    return () => sock.close();
  }
}
