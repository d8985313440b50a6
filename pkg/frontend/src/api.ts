import {
  ApiFormatError,
  QueryPayload,
  RespondOutcome,
  StatusPayload,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

const CELL_KINDS = new Set(["wall", "free", "start", "goal", "agent", "candidate"]);

function checkGrid(grid: unknown): void {
  if (!Array.isArray(grid) || grid.length === 0) {
    throw new ApiFormatError("grid_render must be a non-empty matrix");
  }
  const width = (grid[0] as unknown[]).length;
  for (const row of grid) {
    if (!Array.isArray(row) || row.length !== width) {
      throw new ApiFormatError("grid_render rows must be equally sized");
    }
    for (const cell of row) {
      const c = cell as { kind?: unknown };
      if (typeof c !== "object" || c === null || !CELL_KINDS.has(c.kind as string)) {
        throw new ApiFormatError(`bad cell in grid_render: ${JSON.stringify(cell)}`);
      }
    }
  }
}

export function parseQueryPayload(raw: unknown): QueryPayload {
  const q = raw as Partial<QueryPayload>;
  if (typeof q?.query_id !== "number" || !Array.isArray(q.candidates)) {
    throw new ApiFormatError("query payload missing query_id or candidates");
  }
  for (const cand of q.candidates) {
    if (typeof cand?.index !== "number") {
      throw new ApiFormatError("candidate missing index");
    }
    checkGrid(cand.grid_render);
  }
  if (q.previous_goal != null) {
    checkGrid(q.previous_goal.grid_render);
  }
  return q as QueryPayload;
}

/** Thin client over the trainer endpoints; one in-flight request per call. */
export class ApiClient {
  constructor(
    private readonly base: string,
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  async getStatus(): Promise<StatusPayload> {
    const res = await this.fetchFn(`${this.base}/status`);
    if (!res.ok) {
      throw new Error(`status endpoint returned ${res.status}`);
    }
    return (await res.json()) as StatusPayload;
  }

  /** null when no query is pending (204). */
  async getQuery(): Promise<QueryPayload | null> {
    const res = await this.fetchFn(`${this.base}/query`);
    if (res.status === 204) {
      return null;
    }
    if (!res.ok) {
      throw new Error(`query endpoint returned ${res.status}`);
    }
    return parseQueryPayload(await res.json());
  }

  /**
   * Submit one choice. Network failures retry once before surfacing the
   * error; HTTP 409 means the query went stale, 400 a rejected index.
   */
  async respond(queryId: number, choiceIndex: number): Promise<RespondOutcome> {
    const post = () =>
      this.fetchFn(`${this.base}/respond`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ query_id: queryId, choice_index: choiceIndex }),
      });
    let res: Response;
    try {
      res = await post();
    } catch {
      res = await post(); // retry once, then let the failure surface
    }
    if (res.status === 200) {
      return "accepted";
    }
    if (res.status === 409) {
      return "stale";
    }
    return "rejected";
  }
}
