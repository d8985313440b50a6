import { ApiClient } from "./api.js";
import { SlateModel, slateModel } from "./render.js";
import { ApiFormatError, StatusPayload } from "./types.js";

export type Screen =
  | { kind: "idle"; status: StatusPayload | null }
  | { kind: "slate"; slate: SlateModel; selected: number | null };

export interface AppState {
  screen: Screen;
  banner: string | null; // reconnect / error banner text
}

/**
 * Polling state machine. One in-flight request per endpoint, exactly one
 * submission per query id (double clicks are dropped client-side; the
 * server's 409 backstops anything that slips through).
 */
export class App {
  state: AppState = { screen: { kind: "idle", status: null }, banner: null };
  private submitted = new Set<number>();
  private inFlight = false;
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private readonly api: ApiClient,
    private readonly onChange: (state: AppState) => void = () => {},
  ) {}

  start(intervalMs = 1000): void {
    this.stop();
    this.timer = setInterval(() => void this.poll(), intervalMs);
    void this.poll();
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  private emit(): void {
    this.onChange(this.state);
  }

  async poll(): Promise<void> {
    if (this.inFlight) {
      return;
    }
    this.inFlight = true;
    try {
      const query = await this.api.getQuery();
      if (query !== null && !this.submitted.has(query.query_id)) {
        if (
          this.state.screen.kind !== "slate" ||
          this.state.screen.slate.queryId !== query.query_id
        ) {
          this.state = {
            screen: { kind: "slate", slate: slateModel(query), selected: null },
            banner: null,
          };
          this.emit();
        }
        return;
      }
      const status = await this.api.getStatus();
      this.state = { screen: { kind: "idle", status }, banner: null };
      this.emit();
    } catch (err) {
      this.state = {
        ...this.state,
        banner:
          err instanceof ApiFormatError
            ? `malformed server payload: ${err.message}`
            : "trainer endpoint unreachable, retrying",
      };
      this.emit();
    } finally {
      this.inFlight = false;
    }
  }

  /** Click handler for a slate tile. Returns what happened, for tests. */
  async choose(choiceIndex: number): Promise<"submitted" | "duplicate" | "no-slate"> {
    if (this.state.screen.kind !== "slate") {
      return "no-slate";
    }
    const queryId = this.state.screen.slate.queryId;
    if (this.submitted.has(queryId)) {
      return "duplicate"; // exactly-once guard
    }
    this.submitted.add(queryId);
    this.state = {
      screen: { ...this.state.screen, selected: choiceIndex },
      banner: null,
    };
    this.emit();
    try {
      const outcome = await this.api.respond(queryId, choiceIndex);
      if (outcome === "rejected") {
        this.state = { ...this.state, banner: "server rejected the choice" };
      }
      // accepted: highlight briefly, then fall back to idle on next poll;
      // stale: the slate is obsolete either way
      this.state = { screen: { kind: "idle", status: null }, banner: this.state.banner };
      this.emit();
    } catch {
      this.state = { ...this.state, banner: "failed to submit choice" };
      this.emit();
    }
    return "submitted";
  }
}
