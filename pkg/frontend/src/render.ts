/** SVG pitch rendering of a multi-agent trajectory scene.
 *
 * Trajectories are drawn as static paths whose opacity fades toward the
 * past, so the time direction is visible without animation; the most recent
 * position carries a full-opacity marker. Roles are color-coded: the team
 * in possession blue, the defending team green, the ball orange.
 */

import type { ScenePayload } from "./types.js";

export const ROLE_COLORS: Record<string, string> = {
  "possession-team": "#1f77b4",
  "defending-team": "#2ca02c",
  ball: "#ff7f0e",
};

const PITCH_LENGTH = 105; // meters, origin at center
const PITCH_WIDTH = 68;
const SCALE = 4; // px per meter
const MARGIN = 10; // px
const TAIL_MIN_OPACITY = 0.15;

export class RenderError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "RenderError";
  }
}

function checkPayload(scene: ScenePayload): void {
  if (!scene || !Array.isArray(scene.agents) || !Array.isArray(scene.roles)) {
    throw new RenderError("scene payload missing agents or roles");
  }
  if (scene.agents.length === 0) {
    throw new RenderError(`scene ${scene.id}: no agents`);
  }
  if (scene.roles.length !== scene.agents.length) {
    throw new RenderError(
      `scene ${scene.id}: ${scene.roles.length} roles for ${scene.agents.length} agents`,
    );
  }
  const steps = scene.agents[0]?.length ?? 0;
  for (const [i, track] of scene.agents.entries()) {
    if (!Array.isArray(track) || track.length !== steps || steps < 1) {
      throw new RenderError(`scene ${scene.id}: agent ${i} has a ragged trajectory`);
    }
    for (const p of track) {
      if (!Array.isArray(p) || p.length !== 2 || !p.every(Number.isFinite)) {
        throw new RenderError(`scene ${scene.id}: agent ${i} has a malformed position`);
      }
    }
  }
  for (const role of scene.roles) {
    if (!(role in ROLE_COLORS)) {
      throw new RenderError(`scene ${scene.id}: unknown role ${JSON.stringify(role)}`);
    }
  }
}

const fmt = (v: number): string => v.toFixed(2);

/** Pitch meters -> SVG pixels (y flipped so up on the pitch is up on screen). */
function toPx(x: number, y: number): [number, number] {
  return [
    MARGIN + (x + PITCH_LENGTH / 2) * SCALE,
    MARGIN + (PITCH_WIDTH / 2 - y) * SCALE,
  ];
}

function pitchMarkings(): string {
  const [x0, y0] = toPx(-PITCH_LENGTH / 2, PITCH_WIDTH / 2);
  const w = PITCH_LENGTH * SCALE;
  const h = PITCH_WIDTH * SCALE;
  const [cx, cy] = toPx(0, 0);
  const line = `M ${fmt(cx)} ${fmt(y0)} L ${fmt(cx)} ${fmt(y0 + h)}`;
  return (
    `<rect class="pitch" x="${fmt(x0)}" y="${fmt(y0)}" width="${fmt(w)}" height="${fmt(h)}" ` +
    `fill="#f6fbf4" stroke="#9ab89a" stroke-width="1"/>` +
    `<path d="${line}" stroke="#9ab89a" stroke-width="1" fill="none"/>` +
    `<circle cx="${fmt(cx)}" cy="${fmt(cy)}" r="${fmt(9.15 * SCALE)}" ` +
    `stroke="#9ab89a" stroke-width="1" fill="none"/>`
  );
}

function trajectory(track: number[][], color: string, isBall: boolean): string {
  const parts: string[] = [];
  const steps = track.length;
  // Per-segment opacity ramps from the tail minimum to 1.0 at the newest
  // segment; a single-point track is just its marker.
  for (let t = 0; t + 1 < steps; t++) {
    const [x1, y1] = toPx(track[t][0], track[t][1]);
    const [x2, y2] = toPx(track[t + 1][0], track[t + 1][1]);
    const frac = steps > 2 ? t / (steps - 2) : 1;
    const opacity = TAIL_MIN_OPACITY + (1 - TAIL_MIN_OPACITY) * frac;
    parts.push(
      `<line x1="${fmt(x1)}" y1="${fmt(y1)}" x2="${fmt(x2)}" y2="${fmt(y2)}" ` +
        `stroke="${color}" stroke-width="${isBall ? 1.5 : 2}" ` +
        `stroke-opacity="${fmt(opacity)}" stroke-linecap="round"/>`,
    );
  }
  const [mx, my] = toPx(track[steps - 1][0], track[steps - 1][1]);
  parts.push(
    `<circle class="marker" cx="${fmt(mx)}" cy="${fmt(my)}" ` +
      `r="${isBall ? 3 : 4}" fill="${color}"/>`,
  );
  return parts.join("");
}

/** Deterministic SVG drawing for a scene payload. Throws RenderError on a
 * malformed payload; callers show an inline error panel instead. */
export function renderScene(scene: ScenePayload): string {
  checkPayload(scene);
  const width = PITCH_LENGTH * SCALE + 2 * MARGIN;
  const height = PITCH_WIDTH * SCALE + 2 * MARGIN;
  const groups: string[] = [pitchMarkings()];
  // Draw the ball last so it stays on top of player paths.
  const order = scene.roles
    .map((role, i) => ({ role, i }))
    .sort((a, b) => Number(a.role === "ball") - Number(b.role === "ball"));
  for (const { role, i } of order) {
    groups.push(
      `<g class="agent" data-role="${role}">` +
        trajectory(scene.agents[i], ROLE_COLORS[role], role === "ball") +
        `</g>`,
    );
  }
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${width} ${height}" ` +
    `role="img" aria-label="scene ${scene.id}" data-scene-id="${scene.id}">` +
    groups.join("") +
    `</svg>`
  );
}
