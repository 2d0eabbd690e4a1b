import { describe, expect, it } from "vitest";

import {
  LightRig,
  RigEditorState,
  anglesToDirection,
  cloneRig,
  rigsEqual,
  validateRig,
} from "../src/rig.js";

const RECOVERED: LightRig = {
  sh: [1.4, 0.1, -0.1, 0.3],
  directionals: [],
  spots: [],
};

/** Deterministic PRNG so the scripted sequences are reproducible. */
function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

describe("validateRig", () => {
  it("accepts the recovered rig", () => {
    expect(validateRig(RECOVERED)).toEqual([]);
  });

  it("rejects malformed rigs", () => {
    expect(validateRig({ sh: [1, 2, 3], directionals: [], spots: [] }).length).toBe(1);
    expect(
      validateRig({
        sh: [1, 0, 0, 0],
        directionals: [{ direction: [0, 0, 2], intensity: [1, 1, 1] }],
        spots: [],
      }).length,
    ).toBe(1);
    expect(
      validateRig({
        sh: [1, 0, 0, 0],
        directionals: [],
        spots: [
          {
            position: [0, 0, 100],
            direction: [0, 0, -1],
            cone_angle: 4.0,
            intensity: [1, 1, 1],
            casts_shadow: true,
          },
        ],
      }).length,
    ).toBe(1);
    expect(
      validateRig({
        sh: [1, 0, 0, 0],
        directionals: [{ direction: [0, 0, 1], intensity: [-1, 0, 0] }],
        spots: [],
      }).length,
    ).toBe(1);
  });

  it("accepts nine-coefficient and per-channel lighting", () => {
    expect(validateRig({ sh: Array(9).fill(0.1), directionals: [], spots: [] })).toEqual([]);
    expect(
      validateRig({ sh: [Array(4).fill(0.2), Array(4).fill(0.2), Array(4).fill(0.2)], directionals: [], spots: [] }),
    ).toEqual([]);
  });
});

describe("anglesToDirection", () => {
  it("produces unit vectors for any angles", () => {
    const rand = mulberry32(1);
    for (let i = 0; i < 100; i++) {
      const d = anglesToDirection((rand() - 0.5) * 10, (rand() - 0.5) * 10);
      expect(Math.abs(Math.hypot(...d) - 1)).toBeLessThan(1e-9);
    }
  });
});

describe("RigEditorState", () => {
  it("reset restores the recovered rig exactly", () => {
    const state = new RigEditorState(RECOVERED);
    state.setShCoefficient(0, 3.0);
    state.addDirectional();
    state.addSpot([10, -20, 300]);
    expect(rigsEqual(state.serialize(), RECOVERED)).toBe(false);
    state.reset();
    expect(state.serialize()).toEqual(RECOVERED);
  });

  it("parses color-picker values into nonnegative intensities", () => {
    const state = new RigEditorState(RECOVERED);
    const index = state.addSpot([0, 0, 100]);
    state.setSpotColor(index, "#ff8000", 2.0);
    const spot = state.serialize().spots[index]!;
    expect(spot.intensity[0]).toBeCloseTo(2.0, 6);
    expect(spot.intensity[1]).toBeCloseTo(1.00392, 4);
    expect(spot.intensity[2]).toBeCloseTo(0.0, 6);
  });

  it("ignores updates that would corrupt the rig", () => {
    const state = new RigEditorState(RECOVERED);
    state.setShCoefficient(0, Number.NaN);
    state.setShCoefficient(99, 1.0);
    state.setSpotPosition(0, [0, 0, 0]); // no spot selected yet
    expect(validateRig(state.serialize())).toEqual([]);
  });

  it("every rig emitted across 200 scripted interaction sequences validates unchanged", () => {
    const rand = mulberry32(1234);
    for (let sequence = 0; sequence < 200; sequence++) {
      const state = new RigEditorState(RECOVERED);
      const steps = 5 + Math.floor(rand() * 25);
      for (let s = 0; s < steps; s++) {
        const action = Math.floor(rand() * 10);
        switch (action) {
          case 0:
            state.setShCoefficient(Math.floor(rand() * 4), rand() * 6 - 2);
            break;
          case 1:
            state.addDirectional();
            break;
          case 2:
            state.setDirectionalAngles(
              Math.floor(rand() * (state.rig.directionals.length + 1)),
              rand() * 20 - 10,
              rand() * 20 - 10,
            );
            break;
          case 3:
            state.setDirectionalIntensity(Math.floor(rand() * 2), [rand() * 2, rand() * 2, rand() * 2]);
            break;
          case 4:
            state.addSpot([rand() * 500, -rand() * 500, rand() * 600]);
            break;
          case 5:
            state.setSpotAngles(Math.floor(rand() * 3), rand() * 8 - 4, rand() * 8 - 4);
            break;
          case 6:
            state.setSpotCone(Math.floor(rand() * 3), rand() * 5 - 1);
            break;
          case 7: {
            const hex = `#${Math.floor(rand() * 0xffffff).toString(16).padStart(6, "0")}`;
            state.setSpotColor(Math.floor(rand() * 3), hex, rand() * 3);
            break;
          }
          case 8:
            if (rand() < 0.5) state.removeSpot(Math.floor(rand() * 3));
            else state.removeDirectional(Math.floor(rand() * 3));
            break;
          default:
            state.reset();
        }
        const rig = state.serialize();
        // the wire document validates with no problems...
        expect(validateRig(rig)).toEqual([]);
        // ...and round-trips through JSON (the transport) unmodified
        const wire = JSON.parse(JSON.stringify(rig)) as LightRig;
        expect(wire).toEqual(rig);
        expect(validateRig(wire)).toEqual([]);
        // serialization is a snapshot: mutating it later never aliases state
        const snapshot = cloneRig(rig);
        state.setShCoefficient(0, 9.9);
        expect(rig).toEqual(snapshot);
        state.setShCoefficient(0, snapshot.sh[0] as number);
      }
    }
  });
});
