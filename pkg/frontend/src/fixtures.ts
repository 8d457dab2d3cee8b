/** Deterministic demo scenes: used by the golden rendering test and handy
 * for previewing the panel drawing without a server. Coordinates are exact
 * rationals so the rendered SVG is byte-identical everywhere. */

import type { ScenePayload } from "./types.js";

/** 2v2 plus ball, 10 steps, gentle quadratic runs. */
export function demoScene(): ScenePayload {
  const steps = 10;
  const path = (
    x0: number,
    y0: number,
    vx: number,
    vy: number,
    bend: number,
  ): number[][] =>
    Array.from({ length: steps }, (_, t) => [
      x0 + vx * t + bend * t * t * 0.05,
      y0 + vy * t - bend * t * t * 0.03,
    ]);
  return {
    id: "demo-0001",
    agents: [
      path(-30, 10, 2.0, -0.5, 1),
      path(-25, -12, 1.5, 1.0, -1),
      path(5, 8, -1.0, -1.2, 2),
      path(10, -5, -1.5, 0.8, 0),
      path(-20, 0, 2.5, 0.2, 3),
    ],
    roles: [
      "possession-team",
      "possession-team",
      "defending-team",
      "defending-team",
      "ball",
    ],
    hz: 5,
    meta: { source: "demo" },
  };
}

/** Full 11v11 plus ball with straight runs; exercises the payload contract
 * at match scale. */
export function fullSquadScene(): ScenePayload {
  const steps = 8;
  const line = (x0: number, y0: number, vx: number, vy: number): number[][] =>
    Array.from({ length: steps }, (_, t) => [x0 + vx * t, y0 + vy * t]);
  const agents: number[][][] = [];
  const roles: string[] = [];
  for (let i = 0; i < 11; i++) {
    agents.push(line(-40 + 7 * i, 20 - 3 * i, 1, 0.5));
    roles.push("possession-team");
  }
  for (let i = 0; i < 11; i++) {
    agents.push(line(-35 + 7 * i, -20 + 3 * i, -1, -0.5));
    roles.push("defending-team");
  }
  agents.push(line(0, 0, 1.5, 1));
  roles.push("ball");
  return { id: "demo-squad", agents, roles, hz: 5, meta: {} };
}
