/**
 * Light rig model and editor state.
 *
 * The serialized document is the service's wire format; validation mirrors
 * the server rules exactly (unit directions within 1e-6, cone angle in
 * (0, pi), nonnegative intensities, 4 or 9 SH coefficients per channel), so
 * every rig the editor emits is accepted unchanged by the service.
 */

export interface DirectionalLight {
  direction: [number, number, number];
  intensity: [number, number, number];
}

export interface SpotLight {
  position: [number, number, number];
  direction: [number, number, number];
  cone_angle: number;
  intensity: [number, number, number];
  casts_shadow: boolean;
}

export interface LightRig {
  sh: number[] | number[][];
  directionals: DirectionalLight[];
  spots: SpotLight[];
}

export function normalize(v: [number, number, number]): [number, number, number] {
  const n = Math.hypot(v[0], v[1], v[2]);
  if (n < 1e-12) return [0, 0, 1];
  return [v[0] / n, v[1] / n, v[2] / n];
}

/** Spherical angles (azimuth/elevation, radians) to a unit direction. */
export function anglesToDirection(azimuth: number, elevation: number): [number, number, number] {
  const ce = Math.cos(elevation);
  return normalize([ce * Math.sin(azimuth), Math.sin(elevation), ce * Math.cos(azimuth)]);
}

export function validateRig(rig: LightRig): string[] {
  const problems: string[] = [];
  const shapeOk = (coeffs: number[]) =>
    (coeffs.length === 4 || coeffs.length === 9) && coeffs.every((c) => Number.isFinite(c));
  if (Array.isArray(rig.sh[0])) {
    const rows = rig.sh as number[][];
    if (rows.length !== 3 || !rows.every(shapeOk)) {
      problems.push("per-channel sh must be 3 rows of 4 or 9 finite coefficients");
    }
  } else if (!shapeOk(rig.sh as number[])) {
    problems.push("sh must hold 4 or 9 finite coefficients");
  }
  const unit = (d: [number, number, number]) => Math.abs(Math.hypot(d[0], d[1], d[2]) - 1.0) <= 1e-6;
  const nonneg = (k: [number, number, number]) => k.every((x) => x >= 0);
  rig.directionals.forEach((d, i) => {
    if (!unit(d.direction)) problems.push(`directional ${i}: direction not unit length`);
    if (!nonneg(d.intensity)) problems.push(`directional ${i}: negative intensity`);
  });
  rig.spots.forEach((s, i) => {
    if (!unit(s.direction)) problems.push(`spot ${i}: direction not unit length`);
    if (!(s.cone_angle > 0 && s.cone_angle < Math.PI)) problems.push(`spot ${i}: cone angle out of range`);
    if (!nonneg(s.intensity)) problems.push(`spot ${i}: negative intensity`);
    if (!s.position.every((x) => Number.isFinite(x))) problems.push(`spot ${i}: non-finite position`);
  });
  return problems;
}

export function cloneRig(rig: LightRig): LightRig {
  return JSON.parse(JSON.stringify(rig)) as LightRig;
}

export function rigsEqual(a: LightRig, b: LightRig): boolean {
  return JSON.stringify(a) === JSON.stringify(b);
}

export type Selection =
  | { kind: "sh" }
  | { kind: "directional"; index: number }
  | { kind: "spot"; index: number };

/**
 * Editor state: the recovered rig (reset target), the working rig, and UI
 * selection. Every mutation keeps the working rig valid; serialize() is the
 * document sent to the service.
 */
export class RigEditorState {
  readonly recovered: LightRig;
  rig: LightRig;
  selection: Selection = { kind: "sh" };

  constructor(recovered: LightRig) {
    const problems = validateRig(recovered);
    if (problems.length) throw new Error(`recovered rig invalid: ${problems.join("; ")}`);
    this.recovered = cloneRig(recovered);
    this.rig = cloneRig(recovered);
  }

  private shRow(channel: number | null): number[] {
    if (Array.isArray(this.rig.sh[0])) {
      const rows = this.rig.sh as number[][];
      return rows[channel ?? 0] as number[];
    }
    return this.rig.sh as number[];
  }

  shCoefficient(index: number, channel: number | null = null): number {
    return this.shRow(channel)[index] ?? 0;
  }

  setShCoefficient(index: number, value: number, channel: number | null = null): void {
    if (!Number.isFinite(value)) return;
    const row = this.shRow(channel);
    if (index < 0 || index >= row.length) return;
    row[index] = value;
  }

  addDirectional(): number {
    this.rig.directionals.push({ direction: [0, 0, 1], intensity: [0.3, 0.3, 0.3] });
    this.selection = { kind: "directional", index: this.rig.directionals.length - 1 };
    return this.rig.directionals.length - 1;
  }

  /** Direction-ball drag: spherical angles in radians. */
  setDirectionalAngles(index: number, azimuth: number, elevation: number): void {
    const light = this.rig.directionals[index];
    if (!light) return;
    light.direction = anglesToDirection(azimuth, elevation);
  }

  setDirectionalIntensity(index: number, rgb: [number, number, number]): void {
    const light = this.rig.directionals[index];
    if (!light) return;
    light.intensity = [Math.max(0, rgb[0]), Math.max(0, rgb[1]), Math.max(0, rgb[2])];
  }

  removeDirectional(index: number): void {
    this.rig.directionals.splice(index, 1);
    this.selection = { kind: "sh" };
  }

  addSpot(position: [number, number, number]): number {
    this.rig.spots.push({
      position,
      direction: [0, 0, -1],
      cone_angle: 0.5,
      intensity: [0.5, 0.5, 0.5],
      casts_shadow: true,
    });
    this.selection = { kind: "spot", index: this.rig.spots.length - 1 };
    return this.rig.spots.length - 1;
  }

  setSpotPosition(index: number, position: [number, number, number]): void {
    const spot = this.rig.spots[index];
    if (!spot || !position.every(Number.isFinite)) return;
    spot.position = position;
  }

  setSpotAngles(index: number, azimuth: number, elevation: number): void {
    const spot = this.rig.spots[index];
    if (!spot) return;
    spot.direction = anglesToDirection(azimuth, elevation);
  }

  setSpotCone(index: number, radians: number): void {
    const spot = this.rig.spots[index];
    if (!spot) return;
    spot.cone_angle = Math.min(Math.max(radians, 1e-3), Math.PI - 1e-3);
  }

  /** Color picker value like "#ffcc88" scaled by a strength factor. */
  setSpotColor(index: number, hex: string, strength: number): void {
    const spot = this.rig.spots[index];
    if (!spot) return;
    const m = /^#?([0-9a-f]{6})$/i.exec(hex);
    if (!m || !(strength >= 0)) return;
    const raw = m[1] as string;
    spot.intensity = [0, 2, 4].map(
      (o) => (parseInt(raw.slice(o, o + 2), 16) / 255) * strength,
    ) as [number, number, number];
  }

  setSpotShadow(index: number, casts: boolean): void {
    const spot = this.rig.spots[index];
    if (!spot) return;
    spot.casts_shadow = casts;
  }

  removeSpot(index: number): void {
    this.rig.spots.splice(index, 1);
    this.selection = { kind: "sh" };
  }

  /** Restore the recovered illumination (the identity rig). */
  reset(): void {
    this.rig = cloneRig(this.recovered);
    this.selection = { kind: "sh" };
  }

  serialize(): LightRig {
    return cloneRig(this.rig);
  }
}
