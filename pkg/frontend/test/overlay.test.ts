import { describe, expect, it } from "vitest";

function expectColor(actual: ArrayLike<number>, expected: number[]): void {
  expect(actual.length).toBe(expected.length);
  for (let i = 0; i < expected.length; i++) {
    expect(actual[i]).toBeCloseTo(expected[i], 5); // float32 storage
  }
}
import {
  CONTACT_COLOR,
  NO_CONTACT_COLOR,
  contactColors,
  semanticColors,
  semanticPalette,
  sceneColors,
  uniformColors,
} from "../src/overlay.js";

describe("semanticPalette", () => {
  it("derives one color per class plus void, from the class list alone", () => {
    const pal = semanticPalette(["floor", "wall", "chair"]);
    expect(pal.length).toBe(4);
    const keys = pal.map((c) => c.join(","));
    expect(new Set(keys).size).toBe(4); // all distinct
  });

  it("is deterministic", () => {
    const a = semanticPalette(["a", "b"]);
    const b = semanticPalette(["a", "b"]);
    expect(a).toEqual(b);
  });
});

describe("contact overlay", () => {
  it("colors by the sampled feature map exactly", () => {
    const colors = contactColors([0.9, 0.1, 0.51]);
    expectColor(colors.slice(0, 3), CONTACT_COLOR);
    expectColor(colors.slice(3, 6), NO_CONTACT_COLOR);
    expectColor(colors.slice(6, 9), CONTACT_COLOR);
  });
});

describe("semantic overlay", () => {
  it("maps class ids through the palette", () => {
    const pal = semanticPalette(["floor", "wall"]);
    const colors = semanticColors([0, 2, 1], pal);
    expectColor(colors.slice(0, 3), pal[0]);
    expectColor(colors.slice(3, 6), pal[2]);
    expectColor(colors.slice(6, 9), pal[1]);
  });

  it("scene labels offset by one past void", () => {
    const pal = semanticPalette(["floor", "wall"]);
    const colors = sceneColors(new Uint16Array([0, 1]), pal);
    expectColor(colors.slice(0, 3), pal[1]);
    expectColor(colors.slice(3, 6), pal[2]);
  });
});

describe("uniform colors", () => {
  it("fills every vertex", () => {
    const colors = uniformColors(3, [0.5, 0.5, 0.5]);
    expect(colors.length).toBe(9);
    expect(colors[8]).toBeCloseTo(0.5, 6);
  });
});
