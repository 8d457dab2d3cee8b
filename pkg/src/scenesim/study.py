"""End-to-end simulated studies and log-based metric aggregation.

The report builder consumes only stored session logs, never live objects,
so re-running it over saved logs reproduces a report bit-for-bit.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from .acquisition import TupleQuery, TupleResponse, decompose_response
from .embed import EmbeddingModel, SceneDataset, TripletSet
from .errors import InvalidInputError, ScenesimError
from .metrics import (
    SKIP,
    MetricsReport,
    cluster_annotators,
    consistency,
    effectiveness,
    reliability,
)
from .oracles import LatentSpace, OracleProfile, respond
from .session import SURVEY_QUESTIONS, SessionLog, StudyConfig, StudySession, shared_query_plan

logger = logging.getLogger(__name__)

_MAX_STEPS = 20_000  # hard stop against a stalled session loop


def _scan_log(log: SessionLog) -> dict:
    queries: dict[str, dict] = {}
    responses: dict[str, dict] = {}
    curves: dict[str, list[tuple[int, float]]] = {}
    compute_ms: dict[str, list[float]] = {}
    non_skips: dict[str, int] = {}
    for e in log.events:
        t = e["type"]
        if t == "query_issued":
            queries[e["query_id"]] = e
        elif t == "response_recorded":
            responses[e["query_id"]] = e
        elif t == "accuracy_eval":
            curves.setdefault(e["strategy"], []).append((e["step"], e["accuracy"]))
        elif t == "retrain":
            compute_ms.setdefault(e["strategy"], []).append(e["compute_ms"])
        elif t == "phase_completed":
            non_skips[e["phase"]] = e["non_skips"]
    return {
        "annotator_id": log.annotator_id,
        "queries": queries,
        "responses": responses,
        "curves": curves,
        "compute_ms": compute_ms,
        "non_skips": non_skips,
    }


def _label(resp: dict) -> str:
    return SKIP if resp["chosen_id"] is None else resp["chosen_id"]


def _consistency_pairs(scan: dict) -> list[tuple[str, str]]:
    pairs = []
    for qid, q in scan["queries"].items():
        orig = q.get("replay_of")
        if orig is None:
            continue
        r1, r2 = scan["responses"].get(orig), scan["responses"].get(qid)
        if r1 is not None and r2 is not None:
            pairs.append((_label(r1), _label(r2)))
    return pairs


def _shared_outcomes(scan: dict) -> dict[str, str]:
    out = {}
    for qid, q in scan["queries"].items():
        slot = q.get("shared_slot")
        if slot is None or not slot.startswith("repeat1-"):
            continue
        r = scan["responses"].get(qid)
        if r is not None:
            out[slot] = _label(r)
    return out


def _strategy_stats(scan: dict) -> tuple[dict, dict, dict]:
    """Per query-strategy: skip rate, mean response seconds, skip count."""
    totals: dict[str, int] = {}
    skips: dict[str, int] = {}
    times: dict[str, list[float]] = {}
    for qid, r in scan["responses"].items():
        strategy = scan["queries"][qid]["strategy"]
        totals[strategy] = totals.get(strategy, 0) + 1
        if r["chosen_id"] is None:
            skips[strategy] = skips.get(strategy, 0) + 1
        times.setdefault(strategy, []).append(r["response_ms"] / 1000.0)
    rates = {s: skips.get(s, 0) / totals[s] for s in totals}
    mean_rt = {s: float(np.mean(v)) for s, v in times.items()}
    return rates, mean_rt, skips


def report_from_logs(logs: list[SessionLog], cluster_cut: float = 0.37) -> MetricsReport:
    if not logs:
        raise InvalidInputError("no session logs to aggregate")
    scans = [_scan_log(log) for log in logs]
    labels = [s["annotator_id"] for s in scans]

    consistencies = {}
    for s in scans:
        pairs = _consistency_pairs(s)
        if pairs:
            consistencies[s["annotator_id"]] = consistency(pairs)

    shared = [_shared_outcomes(s) for s in scans]
    n = len(scans)
    R = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            if shared[i] and shared[j]:
                R[i, j] = R[j, i] = reliability(shared[i], shared[j])

    final_acc: dict[str, dict[str, float]] = {}
    curves: dict[str, dict[str, list[tuple[int, float]]]] = {}
    eff: dict[str, dict[str, tuple[float, float, float]]] = {}
    skip_rates: dict[str, dict[str, float]] = {}
    counts: dict[str, dict[str, int]] = {}
    for s in scans:
        a = s["annotator_id"]
        curves[a] = {k: sorted(v) for k, v in s["curves"].items()}
        final_acc[a] = {k: v[-1][1] for k, v in curves[a].items()}
        rates, mean_rt, skips = _strategy_stats(s)
        skip_rates[a] = rates
        counts[a] = dict(s["non_skips"])
        eff[a] = {}
        for strat, acc in final_acc[a].items():
            rt = mean_rt.get(strat)
            if rt is None or rt <= 0:
                continue
            ct_list = s["compute_ms"].get(strat, [])
            ct = float(np.mean(ct_list)) / 1000.0 if ct_list else 0.0
            eff[a][strat] = effectiveness(acc, rt, ct, skips.get(strat, 0))

    if n > 1 and all(shared):
        _, flat, dendro = cluster_annotators(R, threshold=cluster_cut, labels=labels)
        flat = [int(c) for c in flat]
    else:
        flat, dendro = [1] * n, {}

    report = MetricsReport(
        consistencies=consistencies,
        reliability_labels=labels,
        reliability_matrix=R,
        final_accuracy=final_acc,
        accuracy_curves=curves,
        effectiveness=eff,
        skip_rates=skip_rates,
        non_skip_counts=counts,
        dendrogram=dendro,
        flat_clusters=flat,
    )
    report.validate()
    return report


def heldout_pairs_from_log(log: SessionLog) -> list[tuple[TupleQuery, TupleResponse]]:
    """The answered held-out test tuples of a stored session, rebuilt as
    (query, response) pairs suitable for triplet-accuracy scoring."""
    scan = _scan_log(log)
    pairs = []
    for qid, q in sorted(scan["queries"].items(), key=lambda kv: kv[1]["seq"]):
        if q.get("split") != "test":
            continue
        r = scan["responses"].get(qid)
        if r is None or r["chosen_id"] is None:
            continue
        query = TupleQuery(head=q["head"], body=tuple(q["body"]), strategy=q["strategy"])
        resp = TupleResponse(
            query_id=query.query_id, outcome=r["outcome"], response_ms=r["response_ms"]
        )
        pairs.append((query, resp))
    return pairs


def repeat1_triplets(log: SessionLog) -> TripletSet:
    """Training triplets from a stored session's first repeat phase."""
    scan = _scan_log(log)
    triplets: tuple = ()
    for qid, q in sorted(scan["queries"].items(), key=lambda kv: kv[1]["seq"]):
        if q["phase"] != "repeat1":
            continue
        r = scan["responses"].get(qid)
        if r is None or r["chosen_id"] is None:
            continue
        query = TupleQuery(
            head=q["head"], body=tuple(q["body"]), strategy=q["strategy"]
        )
        resp = TupleResponse(
            query_id=query.query_id, outcome=r["outcome"], response_ms=r["response_ms"]
        )
        triplets += decompose_response(query, resp).triplets
    return TripletSet(triplets)


def combine_warmstart(member_logs: list[SessionLog]) -> TripletSet:
    """Union of cluster members' repeat1 triplets; conflicting replies are
    all retained."""
    if not member_logs:
        raise InvalidInputError("cluster must have at least one member")
    merged: tuple = ()
    for log in member_logs:
        merged += repeat1_triplets(log).triplets
    return TripletSet(merged)


def run_session(
    session: StudySession,
    profile: OracleProfile,
    space: LatentSpace,
    rng: np.random.Generator,
) -> SessionLog:
    """Drive one session to completion with a simulated annotator."""
    for question in SURVEY_QUESTIONS[:2]:
        session.record_survey(question, f"simulated:{profile.annotator_id}")
    for step in range(_MAX_STEPS):
        nq = session.next_query()
        if nq["status"] == "study-complete":
            break
        try:
            session.record_response(respond(profile, space, nq["query"], rng))
        except ScenesimError as err:
            raise type(err)(
                f"[oracle={profile.annotator_id} phase={nq['phase']} step={step}] {err}"
            ) from err
    else:
        raise RuntimeError(f"session for {profile.annotator_id} did not terminate")
    for question in SURVEY_QUESTIONS[2:]:
        session.record_survey(question, f"simulated:{profile.annotator_id}")
    return session.log


def run_simulated_study(
    dataset: SceneDataset,
    base_model: EmbeddingModel,
    cohort: list[OracleProfile],
    cfg: StudyConfig,
    seed: int = 0,
    space: LatentSpace | None = None,
    out_dir: str | Path | None = None,
    warmstart_logs: dict[str, list[SessionLog]] | None = None,
) -> tuple[list[SessionLog], MetricsReport]:
    """Full protocol for every cohort member, then an aggregated report.

    warmstart_logs optionally maps annotator_id -> other sessions whose
    repeat1 replies seed that member's fine-tuning set.
    """
    if not cohort:
        raise InvalidInputError("cohort is empty")
    space = space or LatentSpace(dataset)
    plan = shared_query_plan(dataset, cfg)
    logs = []
    for i, profile in enumerate(cohort):
        session = StudySession(
            dataset,
            base_model,
            cfg,
            annotator_id=profile.annotator_id,
            session_seed=seed * 1000 + i,
            shared_plan=plan,
        )
        if warmstart_logs and profile.annotator_id in warmstart_logs:
            session.extra_warm_triplets = combine_warmstart(
                warmstart_logs[profile.annotator_id]
            )
        rng = np.random.default_rng(np.random.SeedSequence([seed, i, 13]))
        logs.append(run_session(session, profile, space, rng))
        logger.info("session %s complete (%d events)", profile.annotator_id, len(logs[-1].events))
    report = report_from_logs(logs)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for log in logs:
            log.save(out / f"session-{log.annotator_id}.jsonl")
        (out / "report.json").write_text(report.to_json())
        (out / "report.csv").write_text(report.to_csv())
    return logs, report
