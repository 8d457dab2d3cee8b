/** Client-side study flow: intro surveys, query loop, closing surveys.
 *
 * The controller owns shuffle correction and response timing. Panels are
 * presented in the query's display order; a choice arrives as a screen
 * position and is mapped back to the true body index before submission.
 * response_ms runs from render-complete to submission on a monotonic clock.
 */

import { ApiClient, ApiError } from "./api.js";
import { screenToBody } from "./shuffle.js";
import { isQuery, type QueryPayload, type SessionInfo } from "./types.js";

export const INTRO_QUESTIONS = ["expertise", "understanding"] as const;
export const CLOSING_QUESTIONS = ["difficulty", "strategy_feedback"] as const;

export type View =
  | { kind: "intro"; questions: readonly string[] }
  | {
      kind: "query";
      phase: string;
      queryId: string;
      head: string;
      /** Scene ids in on-screen order: panels[i] = body[displayOrder[i]]. */
      panels: string[];
      displayOrder: number[];
      phaseIndex: number;
      phaseCount: number;
    }
  | { kind: "closing"; questions: readonly string[] }
  | { kind: "done" };

export class SessionController {
  private info: SessionInfo | null = null;
  private query: QueryPayload | null = null;
  private renderedAt: number | null = null;
  private view_: View = { kind: "intro", questions: INTRO_QUESTIONS };

  constructor(
    private readonly api: ApiClient,
    private readonly now: () => number = () => performance.now(),
  ) {}

  get view(): View {
    return this.view_;
  }

  get session(): SessionInfo {
    if (!this.info) throw new Error("session not started");
    return this.info;
  }

  async begin(annotatorId?: string): Promise<View> {
    this.info = await this.api.createSession(annotatorId);
    this.view_ = { kind: "intro", questions: INTRO_QUESTIONS };
    return this.view_;
  }

  async submitIntroSurvey(answers: Record<string, string>): Promise<View> {
    for (const q of INTRO_QUESTIONS) {
      await this.api.submitSurvey(this.session.session_id, q, answers[q] ?? "");
    }
    return this.loadQuery();
  }

  /** Fetch the current query (idempotent server-side) or advance to the
   * closing survey once the study is complete. */
  async loadQuery(): Promise<View> {
    const next = await this.api.nextQuery(this.session.session_id);
    if (!isQuery(next)) {
      this.query = null;
      this.view_ = { kind: "closing", questions: CLOSING_QUESTIONS };
      return this.view_;
    }
    this.query = next;
    this.renderedAt = null;
    const phases = this.session.phases;
    this.view_ = {
      kind: "query",
      phase: next.phase,
      queryId: next.query_id,
      head: next.head,
      panels: next.display_order.map((b) => next.body[b]),
      displayOrder: next.display_order,
      phaseIndex: Math.max(0, phases.indexOf(next.phase)),
      phaseCount: phases.length,
    };
    return this.view_;
  }

  /** Call once the panels are painted; starts the response timer. */
  markRendered(): void {
    this.renderedAt = this.now();
  }

  /** Submit the panel at a screen position (shuffle-corrected). */
  choose(screenIndex: number): Promise<View> {
    if (!this.query) throw new Error("no pending query");
    return this.submit(screenToBody(this.query.display_order, screenIndex));
  }

  skip(): Promise<View> {
    if (!this.query) throw new Error("no pending query");
    return this.submit(null);
  }

  private async submit(outcome: number | null): Promise<View> {
    const query = this.query!;
    const elapsed = this.renderedAt === null ? 0 : this.now() - this.renderedAt;
    try {
      await this.api.submitResponse(
        this.session.session_id,
        query.query_id,
        outcome,
        elapsed,
      );
    } catch (e) {
      // A conflict means the server no longer considers this query pending
      // (duplicate submit or restored session); re-sync instead of failing.
      if (e instanceof ApiError && e.isConflict) {
        return this.loadQuery();
      }
      throw e;
    }
    return this.loadQuery();
  }

  async submitClosingSurvey(answers: Record<string, string>): Promise<View> {
    for (const q of CLOSING_QUESTIONS) {
      await this.api.submitSurvey(this.session.session_id, q, answers[q] ?? "");
    }
    this.view_ = { kind: "done" };
    return this.view_;
  }
}
