/**
 * UI-independent orchestration of the rough-place-then-refine loop.
 *
 * Owns the wiring between the service client and the viewer state; the DOM
 * layer only forwards input events and repaints from state. Everything
 * numeric flows service -> state, never the other way.
 */

import type { ProgressEvent, ServiceClient, Transform } from "./protocol.js";
import { ViewerState } from "./state.js";

export class ViewerController {
  private unsubscribe: (() => void) | null = null;

  constructor(
    readonly client: ServiceClient,
    readonly state: ViewerState,
    private onUpdate: (kind: string) => void = () => {},
  ) {}

  async sampleMaps(n: number, seed: number) {
    if (!this.state.bodyId) throw new Error("no body loaded");
    const resp = await this.client.sample(this.state.bodyId, n, seed);
    this.state.classNames = resp.class_names;
    this.state.fmapIds = resp.fmap_ids;
    this.state.selectedFmap = 0;
    this.onUpdate("maps");
    return resp;
  }

  /** POST the current (dragged) transform as the refinement init. */
  async refine(iters = 150): Promise<number> {
    if (!this.state.sceneId || !this.state.bodyId) throw new Error("scene/body missing");
    if (this.state.fmapIds.length === 0) throw new Error("sample feature maps first");
    const init: Transform = {
      translation: [...this.state.transform.translation],
      yaw: this.state.transform.yaw,
    };
    const jobId = await this.client.place({
      body_id: this.state.bodyId,
      scene_id: this.state.sceneId,
      fmap_id: this.state.fmapIds[this.state.selectedFmap],
      init,
      mode: "fixed_pose",
      iters,
    });
    this.state.startJob(jobId);
    this.unsubscribe?.();
    this.unsubscribe = this.client.subscribe((ev: ProgressEvent) => {
      this.state.onEvent(ev);
      this.onUpdate(ev.type);
    });
    return jobId;
  }

  /** Cancel the running job; state keeps the best-so-far result transform. */
  async cancel(): Promise<void> {
    if (!this.state.job) return;
    await this.client.cancel(this.state.job.id);
    const doc = await this.client.jobState(this.state.job.id);
    this.state.onJobState(doc.state, doc.result, doc.error);
    this.onUpdate("cancel");
  }

  async refreshMinSdf(): Promise<number | null> {
    if (!this.state.sceneId || !this.state.bodyId) return null;
    const v = await this.client.minSdf(this.state.sceneId, this.state.bodyId,
                                       this.state.transform);
    this.state.setMinSdf(v);
    this.onUpdate("sdf");
    return v;
  }

  dispose(): void {
    this.unsubscribe?.();
    this.unsubscribe = null;
  }
}
