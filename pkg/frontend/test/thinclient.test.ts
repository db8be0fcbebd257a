/**
 * Thin-client harness: a scripted mock service records every request and
 * emits sentinel-valued results. Sentinels are arbitrary constants the
 * client cannot derive, so any number the viewer state ends up holding
 * that matches them must have come from the service verbatim.
 */

import { describe, expect, it } from "vitest";
import { ServiceClient, type SocketLike } from "../src/protocol.js";
import { ViewerController } from "../src/controller.js";
import { ViewerState } from "../src/state.js";

const SENTINEL = {
  energies: {
    afford_contact: 0.1234567891,
    afford_semantic: 9.8765432109,
    pen: 0.0001112223,
    reg: 0.0,
    total: 10.0001112223,
  },
  transform: { translation: [1.7320508, -2.2360679, 0.4142135] as [number, number, number], yaw: 0.5773502 },
  minSdf: -0.0424242,
  progress: [99.5, 42.25, 10.0001112223],
};

class MockService {
  requests: { url: string; body?: unknown }[] = [];
  socket: MockSocket | null = null;
  jobState = "queued";
  cancelResult: unknown = null;

  fetcher = async (url: string, init?: RequestInit): Promise<Response> => {
    const body = init?.body ? JSON.parse(init.body as string) : undefined;
    this.requests.push({ url, body });
    if (url.endsWith("/api/place")) {
      return Response.json({ job_id: 1, state: "queued" });
    }
    if (url.endsWith("/api/min_sdf")) {
      return Response.json({ min_sdf: SENTINEL.minSdf });
    }
    if (url.endsWith("/api/job/1/cancel")) {
      this.jobState = "cancelled";
      return Response.json({ id: 1, state: "cancelled" });
    }
    if (url.endsWith("/api/job/1")) {
      return Response.json({ state: this.jobState, result: this.cancelResult, error: null });
    }
    if (url.endsWith("/api/sample")) {
      return Response.json({
        fmap_ids: ["fmap1"],
        summaries: [{ contact: [1, 0], semantic_class: [1, 0] }],
        class_names: ["floor", "wall"],
      });
    }
    throw new Error(`unmocked url ${url}`);
  };

  socketFactory = (_url: string): SocketLike => {
    this.socket = new MockSocket();
    return this.socket;
  };

  emit(event: unknown): void {
    this.socket?.onmessage?.({ data: JSON.stringify(event) });
  }
}

class MockSocket implements SocketLike {
  onmessage: ((ev: { data: string }) => void) | null = null;
  onclose: (() => void) | null = null;
  closed = false;
  close(): void {
    this.closed = true;
  }
}

function makeViewer() {
  const mock = new MockService();
  const client = new ServiceClient("", mock.fetcher, mock.socketFactory);
  const state = new ViewerState();
  state.sceneId = "room";
  state.bodyId = "stand";
  state.fmapIds = ["fmap1"];
  const ctrl = new ViewerController(client, state);
  return { mock, state, ctrl };
}

describe("drag-to-init then refine", () => {
  it("sends the dragged transform as init and displays the exact result", async () => {
    const { mock, state, ctrl } = makeViewer();
    state.drag(0.75, -0.5);
    state.rotate(0.25);
    state.nudgeVertical(0.3);
    const sent = JSON.parse(JSON.stringify(state.transform));

    await ctrl.refine(50);
    const placeReq = mock.requests.find((r) => r.url.endsWith("/api/place"))!;
    expect((placeReq.body as any).init.translation).toEqual(sent.translation);
    expect((placeReq.body as any).init.yaw).toBeCloseTo(sent.yaw, 12);
    expect((placeReq.body as any).iters).toBe(50);

    for (const [i, e] of SENTINEL.progress.entries()) {
      mock.emit({ type: "progress", job: 1, step: i * 10, total_energy: e });
    }
    mock.emit({
      type: "done",
      job: 1,
      result: { transform: SENTINEL.transform, energies: SENTINEL.energies,
                converged: true, trace: [[0, 99.5]] },
    });

    // exact service numbers, nothing recomputed client-side
    expect(state.job!.state).toBe("done");
    expect(state.job!.energies).toEqual(SENTINEL.progress);
    expect(state.job!.result!.energies).toEqual(SENTINEL.energies);
    expect(state.transform.translation).toEqual(SENTINEL.transform.translation);
    expect(state.transform.yaw).toBe(SENTINEL.transform.yaw);
  });

  it("zero locally computed placement values: state holds only service numbers", async () => {
    const { mock, state, ctrl } = makeViewer();
    await ctrl.refine();
    mock.emit({
      type: "done",
      job: 1,
      result: { transform: SENTINEL.transform, energies: SENTINEL.energies,
                converged: true, trace: [] },
    });
    const sdf = await ctrl.refreshMinSdf();
    expect(sdf).toBe(SENTINEL.minSdf);
    expect(state.minSdf).toBe(SENTINEL.minSdf);
    // every numeric field in the job view appears verbatim in the script
    const scripted = new Set<number>([
      ...Object.values(SENTINEL.energies),
      ...SENTINEL.transform.translation,
      SENTINEL.transform.yaw,
      SENTINEL.minSdf,
    ]);
    for (const v of Object.values(state.job!.result!.energies)) {
      expect(scripted.has(v)).toBe(true);
    }
    for (const v of state.transform.translation) expect(scripted.has(v)).toBe(true);
    expect(scripted.has(state.transform.yaw)).toBe(true);
    expect(scripted.has(state.minSdf!)).toBe(true);
  });
});

describe("cancellation", () => {
  it("keeps the best-so-far transform from the cancel response", async () => {
    const { mock, state, ctrl } = makeViewer();
    await ctrl.refine();
    mock.emit({ type: "progress", job: 1, step: 0, total_energy: 55.5 });
    const before = JSON.parse(JSON.stringify(state.transform));
    mock.cancelResult = {
      transform: SENTINEL.transform,
      energies: SENTINEL.energies,
      converged: false,
      trace: [[0, 55.5]],
    };
    await ctrl.cancel();
    expect(state.job!.state).toBe("cancelled");
    expect(state.transform.translation).toEqual(SENTINEL.transform.translation);
    expect(state.transform.translation).not.toEqual(before.translation);
  });
});

describe("sampling", () => {
  it("adopts the service class list", async () => {
    const { mock, state, ctrl } = makeViewer();
    await ctrl.sampleMaps(1, 7);
    expect(state.classNames).toEqual(["floor", "wall"]);
    expect(state.fmapIds).toEqual(["fmap1"]);
  });
});
