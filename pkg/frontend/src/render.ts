/**
 * Three.js presentation layer: scene/body meshes, vertex-color overlays,
 * a minimal orbit camera, and ground-plane picking for dragging. Display
 * only; the body transform shown here is whatever state.ts holds.
 */

import * as THREE from "three";
import type { WireMesh } from "./protocol.js";

export class Renderer3D {
  readonly renderer: THREE.WebGLRenderer;
  readonly scene = new THREE.Scene();
  readonly camera: THREE.PerspectiveCamera;
  private sceneMesh: THREE.Mesh | null = null;
  private bodyMesh: THREE.Mesh | null = null;
  private target = new THREE.Vector3(0, 0, 0.8);
  private sph = new THREE.Spherical(8.0, 1.1, 0.7);
  private plane = new THREE.Plane(new THREE.Vector3(0, 0, 1), 0);

  constructor(private canvas: HTMLCanvasElement) {
    this.renderer = new THREE.WebGLRenderer({ canvas, antialias: true });
    this.camera = new THREE.PerspectiveCamera(50, 1, 0.05, 100);
    this.scene.background = new THREE.Color(0x181a20);
    this.scene.add(new THREE.AmbientLight(0xffffff, 0.55));
    const sun = new THREE.DirectionalLight(0xffffff, 1.4);
    sun.position.set(4, 3, 8);
    this.scene.add(sun);
    this.scene.up.set(0, 0, 1);
    this.camera.up.set(0, 0, 1);
    this.resize();
  }

  resize(): void {
    const w = this.canvas.clientWidth || 800;
    const h = this.canvas.clientHeight || 600;
    this.renderer.setSize(w, h, false);
    this.camera.aspect = w / h;
    this.camera.updateProjectionMatrix();
  }

  orbit(dTheta: number, dPhi: number): void {
    this.sph.theta -= dTheta;
    this.sph.phi = Math.min(Math.max(this.sph.phi - dPhi, 0.05), Math.PI / 2 - 0.02);
  }

  zoom(factor: number): void {
    this.sph.radius = Math.min(Math.max(this.sph.radius * factor, 1.0), 40);
  }

  pan(dx: number, dy: number): void {
    const dir = new THREE.Vector3().setFromSpherical(this.sph);
    const right = new THREE.Vector3().crossVectors(dir, new THREE.Vector3(0, 0, 1)).normalize();
    const fwd = new THREE.Vector3().crossVectors(new THREE.Vector3(0, 0, 1), right).normalize();
    this.target.addScaledVector(right, dx).addScaledVector(fwd, dy);
  }

  private buildGeometry(mesh: WireMesh, colors: Float32Array): THREE.BufferGeometry {
    const g = new THREE.BufferGeometry();
    g.setAttribute("position", new THREE.BufferAttribute(mesh.positions.slice(), 3));
    g.setIndex(new THREE.BufferAttribute(mesh.indices.slice(), 1));
    g.setAttribute("color", new THREE.BufferAttribute(colors, 3));
    g.computeVertexNormals();
    return g;
  }

  setSceneMesh(mesh: WireMesh, colors: Float32Array): void {
    if (this.sceneMesh) this.scene.remove(this.sceneMesh);
    const mat = new THREE.MeshLambertMaterial({ vertexColors: true, side: THREE.DoubleSide });
    this.sceneMesh = new THREE.Mesh(this.buildGeometry(mesh, colors), mat);
    this.scene.add(this.sceneMesh);
  }

  setSceneColors(colors: Float32Array): void {
    this.sceneMesh?.geometry.setAttribute("color", new THREE.BufferAttribute(colors, 3));
  }

  setBodyMesh(mesh: WireMesh, colors: Float32Array): void {
    if (this.bodyMesh) this.scene.remove(this.bodyMesh);
    const mat = new THREE.MeshLambertMaterial({ vertexColors: true });
    this.bodyMesh = new THREE.Mesh(this.buildGeometry(mesh, colors), mat);
    this.scene.add(this.bodyMesh);
  }

  setBodyColors(colors: Float32Array): void {
    this.bodyMesh?.geometry.setAttribute("color", new THREE.BufferAttribute(colors, 3));
  }

  /** Pose the displayed body at a translation + yaw about +Z. */
  setBodyTransform(translation: [number, number, number], yaw: number): void {
    if (!this.bodyMesh) return;
    this.bodyMesh.position.set(...translation);
    this.bodyMesh.rotation.set(0, 0, yaw);
  }

  /** Intersection of a screen-space pointer ray with the ground plane. */
  pickGround(ndcX: number, ndcY: number): [number, number] | null {
    const ray = new THREE.Raycaster();
    ray.setFromCamera(new THREE.Vector2(ndcX, ndcY), this.camera);
    const hit = new THREE.Vector3();
    if (ray.ray.intersectPlane(this.plane, hit)) return [hit.x, hit.y];
    return null;
  }

  render(): void {
    const dir = new THREE.Vector3().setFromSpherical(this.sph);
    this.camera.position.copy(this.target).add(dir);
    this.camera.lookAt(this.target);
    this.renderer.render(this.scene, this.camera);
  }
}
