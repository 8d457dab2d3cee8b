/** JSON shapes exchanged with the annotation service. */

export interface ScenePayload {
  id: string;
  /** (agents, timesteps, 2) positions in meters, origin at pitch center. */
  agents: number[][][];
  roles: string[];
  hz: number;
  meta: Record<string, unknown>;
}

export interface SessionInfo {
  session_id: string;
  annotator_id: string;
  phases: string[];
  tuple_size: number;
  survey_questions: string[];
}

export interface QueryPayload {
  status: "query";
  phase: string;
  query_id: string;
  head: string;
  body: string[];
  /** Screen slot i shows body[display_order[i]]. */
  display_order: number[];
  strategy: string;
}

export interface StatusPayload {
  status: string;
}

export type NextQuery = QueryPayload | StatusPayload;

export function isQuery(next: NextQuery): next is QueryPayload {
  return next.status === "query";
}

export interface ResponseAck {
  accepted: boolean;
  retrained?: boolean;
  model_version?: number;
}

export interface MetricsPayload {
  phase: string | null;
  complete: boolean;
  non_skip_counts: Record<string, number>;
  consistency: number | null;
}
