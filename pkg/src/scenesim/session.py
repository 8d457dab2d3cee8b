"""Event-sourced annotation session driving the multi-phase study protocol.

Phase order: warmup, repeat1, three fixed-strategy query phases, two
active-learning phases (acquisition size one, synchronous retraining), and
a final repeat phase replaying every repeat1 query in shuffled on-screen
order. Every query, response, retrain, accuracy evaluation, and survey
answer is appended to a JSON-lines log; all metrics are computed from logs
alone, so replaying a stored log reproduces them exactly.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .acquisition import (
    AcquisitionConfig,
    TupleQuery,
    TupleResponse,
    active_nn_select,
    compose_mixed,
    compose_nn,
    compose_random,
    decompose_response,
    infotuple_select,
)
from .embed import (
    EmbeddingModel,
    OptConfig,
    SceneDataset,
    TripletSet,
    embed_all,
    finetune,
)
from .errors import ConflictError, InvalidInputError, OutOfOrderError
from .metrics import triplet_accuracy
from .ordinal import TsteConfig, fit_posterior, posterior_from_embedding

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

PHASES = (
    "warmup",
    "repeat1",
    "rq2_rnd",
    "rq2_mixed",
    "rq2_nn",
    "rq3_active_nn",
    "rq3_infotuple",
    "repeat2",
)
RQ2_STRATEGY = {"rq2_rnd": "random", "rq2_mixed": "random_nn", "rq2_nn": "nn"}
RQ3_STRATEGY = {"rq3_active_nn": "active_nn", "rq3_infotuple": "infotuple"}

SURVEY_QUESTIONS = (
    "expertise",  # asked at the tutorial
    "understanding",  # asked at the tutorial
    "difficulty",  # asked after all queries
    "strategy_feedback",  # asked after all queries
)


@dataclass(frozen=True)
class StudyConfig:
    tuple_size: int = 9
    warmup_quota: int = 5
    repeat_quota: int = 20
    train_quota: int = 20  # per query-strategy phase
    test_quota: int = 10
    seed: int = 0
    phases: tuple[str, ...] = PHASES
    opt: OptConfig = field(default_factory=OptConfig)
    tste: TsteConfig = field(default_factory=TsteConfig)
    acq: AcquisitionConfig = field(default_factory=AcquisitionConfig)
    min_posterior_triplets: int = 8  # below this, fall back to embedding distances

    def __post_init__(self):
        for q in (self.warmup_quota, self.repeat_quota, self.train_quota, self.test_quota):
            if q < 1:
                raise InvalidInputError("all quotas must be >= 1")
        unknown = set(self.phases) - set(PHASES)
        if unknown:
            raise InvalidInputError(f"unknown phases {sorted(unknown)}")
        order = [PHASES.index(p) for p in self.phases]
        if order != sorted(order):
            raise InvalidInputError("phases must follow protocol order")
        if "repeat2" in self.phases and "repeat1" not in self.phases:
            raise InvalidInputError("repeat2 requires repeat1")


class SessionLog:
    """Append-only event record of one annotator's session."""

    def __init__(self, annotator_id: str, events: list[dict] | None = None):
        self.annotator_id = annotator_id
        self.events: list[dict] = list(events or [])

    def append(self, type_: str, **payload) -> dict:
        event = {"schema": SCHEMA_VERSION, "seq": len(self.events), "type": type_}
        event.update(payload)
        self.events.append(event)
        return event

    def save(self, path: str | Path) -> None:
        with open(path, "w") as f:
            for e in self.events:
                f.write(json.dumps(e, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "SessionLog":
        events = []
        with open(path) as f:
            for line in f:
                line = line.strip()
                if line:
                    events.append(json.loads(line))
        annotator_id = ""
        for e in events:
            if e["type"] == "session_created":
                annotator_id = e["annotator_id"]
                break
        return cls(annotator_id, events)


def shared_query_plan(dataset: SceneDataset, cfg: StudyConfig) -> dict[str, list[TupleQuery]]:
    """Warmup and repeat1 base queries, identical for every annotator:
    composed from the study seed alone."""
    plan = {}
    rng = np.random.default_rng(cfg.seed)
    plan["warmup"] = [
        compose_random(dataset, k=cfg.tuple_size, rng=rng) for _ in range(cfg.warmup_quota)
    ]
    plan["repeat1"] = [
        compose_random(dataset, k=cfg.tuple_size, rng=rng) for _ in range(cfg.repeat_quota)
    ]
    return plan


def _query_payload(q: TupleQuery) -> dict:
    return {
        "query_id": q.query_id,
        "head": q.head,
        "body": list(q.body),
        "strategy": q.strategy,
        "model_version": q.model_version,
    }


class StudySession:
    """State machine for one annotator. next_query / record_response are the
    only mutating entry points; every transition is logged before it is
    acknowledged."""

    def __init__(
        self,
        dataset: SceneDataset,
        base_model: EmbeddingModel,
        cfg: StudyConfig,
        annotator_id: str,
        session_seed: int = 0,
        shared_plan: dict[str, list[TupleQuery]] | None = None,
    ):
        self.dataset = dataset
        self.base_model = base_model
        self.cfg = cfg
        self.annotator_id = annotator_id
        self.rng = np.random.default_rng(
            np.random.SeedSequence([cfg.seed, session_seed, 7])
        )
        self.shared_plan = shared_plan or shared_query_plan(dataset, cfg)
        self.log = SessionLog(annotator_id)
        self.log.append(
            "session_created",
            annotator_id=annotator_id,
            seed=cfg.seed,
            session_seed=session_seed,
            tuple_size=cfg.tuple_size,
            phases=list(cfg.phases),
            created_at=time.time(),
        )

        self._phase_i = -1
        self._pending: TupleQuery | None = None
        self._pending_meta: dict = {}
        self._answered: set[str] = set()
        self._queries: dict[str, TupleQuery] = {}
        self._non_skip: dict[str, int] = {}
        self._phase_state: dict = {}

        self.repeat1_records: list[tuple[TupleQuery, TupleResponse]] = []
        self.warm_triplets = TripletSet(())
        self.extra_warm_triplets = TripletSet(())  # cluster-combined warm start
        self.model_ws: EmbeddingModel | None = None
        self.test_pairs: list[tuple[TupleQuery, TupleResponse]] = []
        self._enter_next_phase()

    # -- public API --------------------------------------------------------

    @property
    def phase(self) -> str | None:
        if 0 <= self._phase_i < len(self.cfg.phases):
            return self.cfg.phases[self._phase_i]
        return None

    @property
    def complete(self) -> bool:
        return self._phase_i >= len(self.cfg.phases)

    def next_query(self) -> dict:
        """Current query (idempotent until answered) or completion marker."""
        if self.complete:
            return {"status": "study-complete"}
        if self._pending is None:
            self._issue_query()
        if self.complete:
            return {"status": "study-complete"}
        return {
            "status": "query",
            "phase": self.phase,
            "query": self._pending,
            "display_order": self._pending_meta["display_order"],
        }

    def record_response(self, response: TupleResponse) -> dict:
        if response.query_id in self._answered:
            raise ConflictError(f"query {response.query_id} already answered")
        if self._pending is None or response.query_id != self._pending.query_id:
            raise OutOfOrderError(
                f"response targets {response.query_id}, pending is "
                f"{self._pending.query_id if self._pending else 'nothing'}"
            )
        query, meta = self._pending, self._pending_meta
        response.check_against(query)
        phase = self.phase
        self.log.append(
            "response_recorded",
            phase=phase,
            query_id=query.query_id,
            outcome=response.outcome,
            chosen_id=None if response.is_skip else query.body[response.outcome],
            response_ms=response.response_ms,
            annotator_id=response.annotator_id,
            split=meta.get("split", "train"),
        )
        self._answered.add(query.query_id)
        self._pending = None
        if not response.is_skip:
            self._non_skip[phase] = self._non_skip.get(phase, 0) + 1
        info = self._on_response(phase, query, response, meta)
        if self._phase_done(phase):
            self._finish_phase(phase)
            self._enter_next_phase()
        return info or {}

    def record_survey(self, question: str, answer: str) -> None:
        if question not in SURVEY_QUESTIONS:
            raise InvalidInputError(f"unknown survey question {question!r}")
        self.log.append("survey_answer", question=question, answer=answer)

    # -- phase machinery ---------------------------------------------------

    def _enter_next_phase(self) -> None:
        self._phase_i += 1
        if self.complete:
            self.log.append("study_completed", at=time.time())
            return
        phase = self.phase
        self.log.append("phase_started", phase=phase)
        self._phase_state = {}
        if phase in ("warmup", "repeat1"):
            self._phase_state["plan"] = list(self.shared_plan[phase])
            self._phase_state["base_slots"] = len(self._phase_state["plan"])
        elif phase in RQ2_STRATEGY or phase in RQ3_STRATEGY:
            if self.model_ws is None:
                self._train_warm_start()
            if phase in RQ3_STRATEGY:
                self._phase_state["model"] = self.model_ws.clone()
                self._phase_state["triplets"] = self.warm_triplets + self.extra_warm_triplets
                self._phase_state["posterior"] = self._fit_arm_posterior(
                    self._phase_state["model"], self._phase_state["triplets"]
                )
                self._phase_state["step"] = 0
                # Round-robin heads from a per-session random offset so
                # short runs still cover different dataset regions.
                self._phase_state["cursor0"] = int(self.rng.integers(len(self.dataset)))
            else:
                self._phase_state["train_pairs"] = []
                self._phase_state["test_pairs"] = []
        elif phase == "repeat2":
            self._phase_state["plan"] = [q for q, _ in self.repeat1_records]
            self._phase_state["replay_of"] = [
                q.query_id for q, _ in self.repeat1_records
            ]
            self._phase_state["cursor"] = 0

    def _issue_query(self) -> None:
        phase = self.phase
        cfg = self.cfg
        meta = {}
        if phase in ("warmup", "repeat1"):
            plan = self._phase_state["plan"]
            issued = self._phase_state.get("issued", 0)
            if issued < len(plan):
                query = plan[issued]
                if issued < self._phase_state["base_slots"]:
                    meta["shared_slot"] = f"{phase}-{issued}"
            else:
                # Skips grow the phase beyond the shared base list.
                query = compose_random(self.dataset, k=cfg.tuple_size, rng=self.rng)
                plan.append(query)
            self._phase_state["issued"] = issued + 1
        elif phase in RQ2_STRATEGY:
            in_test = self._phase_state.get("train_done", False)
            meta["split"] = "test" if in_test else "train"
            strategy = "random" if in_test else RQ2_STRATEGY[phase]
            query = self._compose(strategy)
        elif phase in RQ3_STRATEGY:
            query = self._select_rq3(phase)
        else:  # repeat2
            cur = self._phase_state["cursor"]
            orig = self._phase_state["plan"][cur]
            query = TupleQuery(
                head=orig.head,
                body=orig.body,
                strategy=orig.strategy,
                model_version=orig.model_version,
            )
            meta["replay_of"] = self._phase_state["replay_of"][cur]
            self._phase_state["cursor"] = cur + 1
        meta["display_order"] = [
            int(i) for i in self.rng.permutation(len(query.body))
        ]
        self._pending = query
        self._pending_meta = meta
        self._queries[query.query_id] = query
        self.log.append(
            "query_issued",
            phase=phase,
            **_query_payload(query),
            display_order=meta["display_order"],
            shared_slot=meta.get("shared_slot"),
            replay_of=meta.get("replay_of"),
            split=meta.get("split", "train"),
        )

    def _compose(self, strategy: str) -> TupleQuery:
        k = self.cfg.tuple_size
        if strategy == "random":
            return compose_random(self.dataset, k=k, rng=self.rng)
        if strategy == "nn":
            return compose_nn(self.model_ws, self.dataset, k=k, rng=self.rng)
        if strategy == "random_nn":
            return compose_mixed(self.model_ws, self.dataset, k=k, rng=self.rng)
        raise InvalidInputError(f"no composer for strategy {strategy!r}")

    def _select_rq3(self, phase: str) -> TupleQuery:
        st = self._phase_state
        if RQ3_STRATEGY[phase] == "active_nn":
            return active_nn_select(
                st["model"],
                self.dataset,
                st["posterior"],
                k=self.cfg.tuple_size,
                exclude_heads=st.setdefault("skipped_heads", set()),
            )
        return infotuple_select(
            st["model"],
            self.dataset,
            st["posterior"],
            k=self.cfg.tuple_size,
            cfg=self.cfg.acq,
            cursor=st["cursor0"] + st["step"],
            rng=self.rng,
        )

    def _on_response(self, phase, query, response, meta) -> dict:
        if phase == "repeat1":
            self.repeat1_records.append((query, response))
            if not response.is_skip:
                self.warm_triplets = self.warm_triplets + decompose_response(
                    query, response
                )
        elif phase in RQ2_STRATEGY and not response.is_skip:
            split = meta.get("split", "train")
            self._phase_state[f"{split}_pairs"].append((query, response))
            if (
                split == "train"
                and len(self._phase_state["train_pairs"]) >= self.cfg.train_quota
            ):
                self._phase_state["train_done"] = True
        elif phase in RQ3_STRATEGY:
            if response.is_skip:
                # Move the selectors off an unanswerable head.
                self._phase_state.setdefault("skipped_heads", set()).add(query.head)
                self._phase_state["cursor0"] = self._phase_state.get("cursor0", 0) + 1
                return {}
            return self._rq3_retrain(phase, query, response)
        return {}

    def _rq3_retrain(self, phase, query, response) -> dict:
        st = self._phase_state
        st["triplets"] = st["triplets"] + decompose_response(query, response)
        t0 = time.perf_counter()
        finetune(st["model"], self.dataset, st["triplets"], self.cfg.opt)
        st["posterior"] = self._fit_arm_posterior(st["model"], st["triplets"])
        compute_ms = (time.perf_counter() - t0) * 1000.0
        st["step"] += 1
        self.log.append(
            "retrain",
            phase=phase,
            strategy=RQ3_STRATEGY[phase],
            step=st["step"],
            model_version=st["model"].version,
            n_triplets=len(st["triplets"]),
            compute_ms=compute_ms,
        )
        if self.test_pairs:
            acc = triplet_accuracy(st["model"], self.dataset, self.test_pairs)
            self.log.append(
                "accuracy_eval",
                phase=phase,
                strategy=RQ3_STRATEGY[phase],
                step=st["step"],
                accuracy=acc,
            )
        return {"retrained": True, "model_version": st["model"].version}

    def _phase_done(self, phase) -> bool:
        if phase == "warmup":
            return self._non_skip.get(phase, 0) >= self.cfg.warmup_quota
        if phase == "repeat1":
            return self._non_skip.get(phase, 0) >= self.cfg.repeat_quota
        if phase in RQ2_STRATEGY:
            return len(self._phase_state["test_pairs"]) >= self.cfg.test_quota
        if phase in RQ3_STRATEGY:
            return self._non_skip.get(phase, 0) >= self.cfg.train_quota
        return self._phase_state["cursor"] >= len(self._phase_state["plan"]) and (
            self._pending is None
        )

    def _finish_phase(self, phase) -> None:
        if phase in RQ2_STRATEGY:
            self._finish_rq2(phase)
        self.log.append(
            "phase_completed", phase=phase, non_skips=self._non_skip.get(phase, 0)
        )

    def _finish_rq2(self, phase) -> None:
        st = self._phase_state
        strategy = RQ2_STRATEGY[phase]
        triplets = self.warm_triplets + self.extra_warm_triplets
        for q, r in st["train_pairs"]:
            triplets = triplets + decompose_response(q, r)
        t0 = time.perf_counter()
        model = self.model_ws.clone()
        finetune(model, self.dataset, triplets, self.cfg.opt)
        compute_ms = (time.perf_counter() - t0) * 1000.0
        if phase == "rq2_rnd":
            # The random phase's held-out tuples double as the fixed test
            # set for the active-learning phases.
            self.test_pairs = list(st["test_pairs"])
        acc = triplet_accuracy(model, self.dataset, st["test_pairs"])
        self.log.append(
            "retrain",
            phase=phase,
            strategy=strategy,
            step=self.cfg.train_quota,
            model_version=model.version,
            n_triplets=len(triplets),
            compute_ms=compute_ms,
        )
        self.log.append(
            "accuracy_eval",
            phase=phase,
            strategy=strategy,
            step=self.cfg.train_quota,
            accuracy=acc,
        )

    # -- model plumbing ----------------------------------------------------

    def _train_warm_start(self) -> None:
        t0 = time.perf_counter()
        self.model_ws = self.base_model.clone()
        triplets = self.warm_triplets + self.extra_warm_triplets
        if len(triplets):
            finetune(self.model_ws, self.dataset, triplets, self.cfg.opt)
        self.log.append(
            "retrain",
            phase="repeat1",
            strategy="warmstart",
            step=0,
            model_version=self.model_ws.version,
            n_triplets=len(triplets),
            compute_ms=(time.perf_counter() - t0) * 1000.0,
        )

    def _fit_arm_posterior(self, model, triplets: TripletSet):
        if len(triplets) < self.cfg.min_posterior_triplets:
            return posterior_from_embedding(embed_all(model, self.dataset))
        idx = [
            (self.dataset.index[a], self.dataset.index[p], self.dataset.index[n])
            for a, p, n in triplets.triplets
        ]
        return fit_posterior(idx, N=len(self.dataset), cfg=self.cfg.tste)
