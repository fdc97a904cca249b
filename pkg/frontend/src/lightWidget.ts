/** Maps clicks on the light-sphere widget to unit light directions.
 *
 * The widget draws a camera-facing unit hemisphere: x right, y up,
 * z toward the viewer, matching the relighting camera frame. Points
 * outside the disk clamp to the rim.
 */

import type { Vec3 } from "./state.js";

/** u, v in [-1, 1] with v already flipped to point up. */
export function directionFromWidget(u: number, v: number): Vec3 {
  const r2 = u * u + v * v;
  if (r2 <= 1e-12) return [0, 0, 1];
  if (r2 >= 1) {
    const r = Math.sqrt(r2);
    // rim direction, nudged toward the camera so the light stays frontal
    const z = 0.05;
    const s = Math.sqrt(1 - z * z) / r;
    return [u * s, v * s, z];
  }
  return [u, v, Math.sqrt(1 - r2)];
}

/** Inverse used to draw the marker: project a direction onto the widget. */
export function widgetFromDirection(dir: Vec3): { u: number; v: number } {
  return { u: dir[0], v: dir[1] };
}
