import { describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import { SessionController } from "../src/session.js";
import type { NextQuery, QueryPayload } from "../src/types.js";

interface Submitted {
  queryId: string;
  outcome: number | null;
  responseMs: number;
}

/** In-memory stand-in for the service, structural-typed as ApiClient. */
function fakeApi(queries: NextQuery[]) {
  let cursor = 0;
  const submitted: Submitted[] = [];
  const surveys: [string, string][] = [];
  let conflictsLeft = 0;
  const api = {
    async createSession() {
      return {
        session_id: "s1",
        annotator_id: "a1",
        phases: ["warmup", "repeat1", "repeat2"],
        tuple_size: 4,
        survey_questions: ["expertise", "understanding", "difficulty", "strategy_feedback"],
      };
    },
    async nextQuery() {
      return queries[Math.min(cursor, queries.length - 1)];
    },
    async submitResponse(_s: string, queryId: string, outcome: number | null, responseMs: number) {
      if (conflictsLeft > 0) {
        conflictsLeft--;
        throw new ApiError(409, "ConflictError", "already answered");
      }
      submitted.push({ queryId, outcome, responseMs });
      cursor++;
      return { accepted: true };
    },
    async submitSurvey(_s: string, question: string, answer: string) {
      surveys.push([question, answer]);
      return { accepted: true };
    },
  } as unknown as ApiClient;
  return {
    api,
    submitted,
    surveys,
    forceConflicts(n: number) {
      conflictsLeft = n;
    },
  };
}

function query(id: string, body: string[], order: number[]): QueryPayload {
  return {
    status: "query",
    phase: "warmup",
    query_id: id,
    head: "h",
    body,
    display_order: order,
    strategy: "random",
  };
}

describe("SessionController", () => {
  it("walks intro -> queries -> closing -> done and shuffle-corrects choices", async () => {
    const fake = fakeApi([
      query("q1", ["a", "b", "c"], [2, 0, 1]),
      query("q2", ["d", "e", "f"], [1, 2, 0]),
      { status: "study-complete" },
    ]);
    const ctl = new SessionController(fake.api, () => 100);
    expect((await ctl.begin()).kind).toBe("intro");
    let view = await ctl.submitIntroSurvey({ expertise: "3", understanding: "4" });
    expect(view).toMatchObject({ kind: "query", queryId: "q1", panels: ["c", "a", "b"] });

    ctl.markRendered();
    view = await ctl.choose(0); // screen slot 0 shows body index 2
    expect(fake.submitted[0]).toMatchObject({ queryId: "q1", outcome: 2 });
    expect(view).toMatchObject({ kind: "query", queryId: "q2" });

    ctl.markRendered();
    view = await ctl.skip();
    expect(fake.submitted[1]).toMatchObject({ queryId: "q2", outcome: null });
    expect(view.kind).toBe("closing");

    view = await ctl.submitClosingSurvey({ difficulty: "2", strategy_feedback: "ok" });
    expect(view.kind).toBe("done");
    expect(fake.surveys.map(([q]) => q)).toEqual([
      "expertise",
      "understanding",
      "difficulty",
      "strategy_feedback",
    ]);
  });

  it("measures response time from render-complete on the injected clock", async () => {
    let t = 1000;
    const fake = fakeApi([
      query("q1", ["a", "b"], [0, 1]),
      { status: "study-complete" },
    ]);
    const ctl = new SessionController(fake.api, () => t);
    await ctl.begin();
    await ctl.submitIntroSurvey({});
    ctl.markRendered();
    t = 1850;
    await ctl.choose(1);
    expect(fake.submitted[0].responseMs).toBe(850);
  });

  it("reloads the pending query on a submission conflict", async () => {
    const fake = fakeApi([
      query("q1", ["a", "b"], [1, 0]),
      { status: "study-complete" },
    ]);
    const ctl = new SessionController(fake.api, () => 0);
    await ctl.begin();
    await ctl.submitIntroSurvey({});
    fake.forceConflicts(1);
    const view = await ctl.choose(0);
    // The conflict consumed nothing; the same query is presented again.
    expect(view).toMatchObject({ kind: "query", queryId: "q1" });
    expect(fake.submitted).toHaveLength(0);
    await ctl.choose(0);
    expect(fake.submitted).toMatchObject([{ queryId: "q1", outcome: 1 }]);
  });
});
