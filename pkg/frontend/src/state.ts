/**
 * Viewer state: the current rough placement the user is editing, the active
 * job subscription, and the energy trace being streamed.
 *
 * All placement numbers held here are copied verbatim from service
 * responses; the only local arithmetic is composing the user's drag deltas
 * into a transform (and wrapping yaw), which is input, not placement math.
 */

import type { PlacementResultDoc, ProgressEvent, Transform } from "./protocol.js";

export type OverlayMode = "contact" | "semantics" | "none";

export function wrapYaw(a: number): number {
  if (a > -Math.PI && a <= Math.PI) return a; // exact passthrough when in range
  let w = Math.atan2(Math.sin(a), Math.cos(a));
  if (w === -Math.PI) w = Math.PI;
  return w;
}

export interface JobView {
  id: number;
  state: "queued" | "running" | "done" | "failed" | "cancelled";
  energies: number[]; // streamed best-so-far totals, in arrival order
  steps: number[];
  result: PlacementResultDoc | null;
  error?: string;
}

export class ViewerState {
  sceneId: string | null = null;
  bodyId: string | null = null;
  classNames: string[] = [];
  fmapIds: string[] = [];
  selectedFmap = 0;
  overlay: OverlayMode = "contact";
  transform: Transform = { translation: [0, 0, 0], yaw: 0 };
  job: JobView | null = null;
  minSdf: number | null = null; // latest service readout, never computed here

  setTransform(t: Transform): void {
    if (!t.translation.every(Number.isFinite) || !Number.isFinite(t.yaw)) {
      throw new Error("transform must be finite");
    }
    this.transform = { ...t, yaw: wrapYaw(t.yaw), translation: [...t.translation] };
  }

  /** Ground-plane drag: move along x/y, keep height. */
  drag(dx: number, dy: number): void {
    const [x, y, z] = this.transform.translation;
    this.setTransform({ ...this.transform, translation: [x + dx, y + dy, z] });
  }

  /** Separate vertical nudge; refinement owns fine vertical placement. */
  nudgeVertical(dz: number): void {
    const [x, y, z] = this.transform.translation;
    this.setTransform({ ...this.transform, translation: [x, y, z + dz] });
  }

  rotate(dyaw: number): void {
    this.setTransform({ ...this.transform, yaw: this.transform.yaw + dyaw });
  }

  setMinSdf(value: number): void {
    this.minSdf = value;
  }

  startJob(id: number): void {
    this.job = { id, state: "queued", energies: [], steps: [], result: null };
  }

  /** Apply a streamed event; idempotent for repeated terminal events. */
  onEvent(ev: ProgressEvent): void {
    if (!this.job || ev.job !== this.job.id) return;
    if (ev.type === "progress") {
      if (this.job.state === "queued") this.job.state = "running";
      this.job.steps.push(ev.step ?? 0);
      this.job.energies.push(ev.total_energy ?? NaN);
    } else if (ev.type === "done" || ev.type === "cancelled") {
      this.job.state = ev.type;
      if (ev.result) {
        this.job.result = ev.result;
        // the viewer transform becomes exactly the service result
        this.setTransform(ev.result.transform);
      }
    } else if (ev.type === "failed") {
      this.job.state = "failed";
      this.job.error = ev.error;
    }
  }

  /** Terminal job state fetched by polling (same contract as onEvent). */
  onJobState(state: string, result: PlacementResultDoc | null, error?: string | null): void {
    if (!this.job) return;
    if (state === "done" || state === "cancelled") {
      this.job.state = state;
      if (result) {
        this.job.result = result;
        this.setTransform(result.transform);
      }
    } else if (state === "failed") {
      this.job.state = "failed";
      this.job.error = error ?? "job failed";
    }
  }
}
