/** Studio state: pose, light, gains, output layer, and request tokens. */

export const YAW_LIMIT_DEG = 90;
export const PITCH_LIMIT_DEG = 45;

export type OutputKind =
  | "fused"
  | "relit"
  | "hatch"
  | "normal"
  | "mesh-only"
  | "neural-only";

export type Vec3 = readonly [number, number, number];

export type LightMode =
  | { kind: "preset"; name: string }
  | { kind: "directional"; dir: Vec3 }
  | { kind: "env"; id: string };

export interface StudioState {
  sessionId: string | null;
  yawDeg: number;
  pitchDeg: number;
  light: LightMode;
  kd: number;
  ks: readonly number[];
  output: OutputKind;
}

export const initialState = (): StudioState => ({
  sessionId: null,
  yawDeg: 0,
  pitchDeg: 0,
  light: { kind: "preset", name: "loop" },
  kd: 1.0,
  ks: [0.25, 0.25, 0.25, 0.25],
  output: "fused",
});

export const clamp = (v: number, lo: number, hi: number): number =>
  Math.min(hi, Math.max(lo, v));

/** Apply a pose drag expressed as viewport-size fractions. A full-width
 * drag sweeps 180 degrees of yaw before clamping to the service limits. */
export function dragPose(state: StudioState, dxFrac: number, dyFrac: number): StudioState {
  return {
    ...state,
    yawDeg: clamp(state.yawDeg + dxFrac * 180, -YAW_LIMIT_DEG, YAW_LIMIT_DEG),
    pitchDeg: clamp(state.pitchDeg + dyFrac * 90, -PITCH_LIMIT_DEG, PITCH_LIMIT_DEG),
  };
}

export function setLight(state: StudioState, light: LightMode): StudioState {
  return { ...state, light };
}

export function setGains(state: StudioState, kd: number, ks: readonly number[]): StudioState {
  return { ...state, kd: Math.max(0, kd), ks: ks.map((k) => Math.max(0, k)) };
}

/** Switching the output layer must preserve pose and light. */
export function setOutput(state: StudioState, output: OutputKind): StudioState {
  return { ...state, output };
}

/** Encode the light mode as the service's `light` query parameter. */
export function lightParam(light: LightMode): string {
  switch (light.kind) {
    case "preset":
      return light.name;
    case "env":
      return light.id;
    case "directional": {
      const [x, y, z] = light.dir;
      return `dir:${x.toFixed(6)},${y.toFixed(6)},${z.toFixed(6)},1,1,1`;
    }
  }
}

export interface RenderQuery {
  yaw: number;
  pitch: number;
  output: OutputKind;
  light: string;
  kd: number;
  ks: string;
}

export function renderQuery(state: StudioState): RenderQuery {
  return {
    yaw: state.yawDeg,
    pitch: state.pitchDeg,
    output: state.output,
    light: lightParam(state.light),
    kd: state.kd,
    ks: state.ks.join(","),
  };
}
