/** Wire types for the trainer's three endpoints. */

export type CellKind = "wall" | "free" | "start" | "goal" | "agent" | "candidate";

export interface Cell {
  kind: CellKind;
  value: number | null;
}

/** height x width matrix of cells, exactly as the trainer renders it. */
export type GridRender = Cell[][];

export interface CandidateTile {
  index: number;
  grid_render: GridRender;
}

export interface QueryPayload {
  query_id: number;
  candidates: CandidateTile[];
  previous_goal: { grid_render: GridRender } | null;
}

export interface StatusPayload {
  env_steps: number;
  episode: number;
  current_goal: number | null;
  queries_used: number;
  curve: number[];
}

export type RespondOutcome = "accepted" | "stale" | "rejected";

export class ApiFormatError extends Error {}
