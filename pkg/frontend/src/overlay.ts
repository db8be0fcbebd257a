/**
 * Vertex color overlays. Contact follows the blue = contact / pink = free
 * convention; semantic colors are generated from the service's class list
 * (never hard-coded per class name).
 */

export type RGB = [number, number, number];

export const CONTACT_COLOR: RGB = [0.15, 0.35, 0.95];
export const NO_CONTACT_COLOR: RGB = [0.95, 0.6, 0.75];

function hslToRgb(h: number, s: number, l: number): RGB {
  const c = (1 - Math.abs(2 * l - 1)) * s;
  const hp = (h % 360) / 60;
  const x = c * (1 - Math.abs((hp % 2) - 1));
  let rgb: RGB = [0, 0, 0];
  if (hp < 1) rgb = [c, x, 0];
  else if (hp < 2) rgb = [x, c, 0];
  else if (hp < 3) rgb = [0, c, x];
  else if (hp < 4) rgb = [0, x, c];
  else if (hp < 5) rgb = [x, 0, c];
  else rgb = [c, 0, x];
  const m = l - c / 2;
  return [rgb[0] + m, rgb[1] + m, rgb[2] + m];
}

/** Deterministic palette over void + the service's scene classes. */
export function semanticPalette(classNames: string[]): RGB[] {
  const colors: RGB[] = [[0.75, 0.75, 0.75]]; // class 0: void / unlabeled
  for (let i = 0; i < classNames.length; i++) {
    colors.push(hslToRgb((i * 360) / classNames.length, 0.65, 0.55));
  }
  return colors;
}

export function contactColors(contact: number[]): Float32Array {
  const out = new Float32Array(contact.length * 3);
  for (let i = 0; i < contact.length; i++) {
    const src = contact[i] > 0.5 ? CONTACT_COLOR : NO_CONTACT_COLOR;
    out.set(src, i * 3);
  }
  return out;
}

export function semanticColors(classIds: number[], palette: RGB[]): Float32Array {
  const out = new Float32Array(classIds.length * 3);
  for (let i = 0; i < classIds.length; i++) {
    out.set(palette[classIds[i] % palette.length], i * 3);
  }
  return out;
}

/** Per-vertex scene colors from labels (label i -> palette entry i + 1). */
export function sceneColors(labels: Uint16Array, palette: RGB[]): Float32Array {
  const out = new Float32Array(labels.length * 3);
  for (let i = 0; i < labels.length; i++) {
    out.set(palette[(labels[i] + 1) % palette.length], i * 3);
  }
  return out;
}

export function uniformColors(n: number, color: RGB): Float32Array {
  const out = new Float32Array(n * 3);
  for (let i = 0; i < n; i++) out.set(color, i * 3);
  return out;
}
