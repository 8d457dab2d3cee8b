import json

import numpy as np
import pytest

from scenesim.acquisition import AcquisitionConfig, TupleResponse
from scenesim.embed import MINI_ARCH, EmbeddingModel, OptConfig, SceneDataset
from scenesim.errors import ConflictError, InvalidInputError, OutOfOrderError
from scenesim.oracles import LatentSpace, OracleProfile
from scenesim.ordinal import TsteConfig
from scenesim.session import SessionLog, StudyConfig, StudySession, shared_query_plan
from scenesim.metrics import triplet_accuracy
from scenesim.study import (
    combine_warmstart,
    heldout_pairs_from_log,
    repeat1_triplets,
    report_from_logs,
    run_simulated_study,
)
from scenesim.synth import SynthProfile, synth_generate

TINY_PROFILE = SynthProfile(team_size=1, hz=2.0, duration_s=5.0)

FAST_CFG = StudyConfig(
    tuple_size=4,
    warmup_quota=2,
    repeat_quota=3,
    train_quota=3,
    test_quota=2,
    seed=11,
    opt=OptConfig(epochs=1, batch_size=16),
    tste=TsteConfig(d_ord=2, bootstrap=2, max_iter=30, restarts=1),
    acq=AcquisitionConfig(n_candidates=8, n_permutations=3, mc_passes=8),
)


@pytest.fixture(scope="module")
def world():
    scenes = synth_generate(seed=77, n_scenes=18, profile=TINY_PROFILE)
    dataset = SceneDataset(scenes)
    model = EmbeddingModel(MINI_ARCH, seed=0)
    return dataset, model


def answer(session, outcome=0, ms=500.0):
    nq = session.next_query()
    assert nq["status"] == "query"
    q = nq["query"]
    session.record_response(
        TupleResponse(query_id=q.query_id, outcome=outcome, response_ms=ms)
    )
    return q


class TestStateMachine:
    def test_fresh_session_starts_with_warmup(self, world):
        dataset, model = world
        s = StudySession(dataset, model, FAST_CFG, "a0")
        nq = s.next_query()
        assert nq["phase"] == "warmup"
        plan = shared_query_plan(dataset, FAST_CFG)
        assert nq["query"].head == plan["warmup"][0].head
        assert nq["query"].body == plan["warmup"][0].body

    def test_shared_plan_identical_across_annotators(self, world):
        dataset, model = world
        s1 = StudySession(dataset, model, FAST_CFG, "a1", session_seed=1)
        s2 = StudySession(dataset, model, FAST_CFG, "a2", session_seed=2)
        q1, q2 = s1.next_query()["query"], s2.next_query()["query"]
        assert (q1.head, q1.body) == (q2.head, q2.body)

    def test_next_query_idempotent(self, world):
        dataset, model = world
        s = StudySession(dataset, model, FAST_CFG, "a0")
        assert s.next_query()["query"].query_id == s.next_query()["query"].query_id

    def test_out_of_order_response(self, world):
        dataset, model = world
        s = StudySession(dataset, model, FAST_CFG, "a0")
        s.next_query()
        with pytest.raises(OutOfOrderError):
            s.record_response(
                TupleResponse(query_id="nope", outcome=0, response_ms=1.0)
            )

    def test_duplicate_response_conflict(self, world):
        dataset, model = world
        s = StudySession(dataset, model, FAST_CFG, "a0")
        q = answer(s)
        with pytest.raises(ConflictError):
            s.record_response(
                TupleResponse(query_id=q.query_id, outcome=1, response_ms=1.0)
            )

    def test_invalid_phase_order_rejected(self):
        with pytest.raises(InvalidInputError):
            StudyConfig(phases=("repeat1", "warmup"))

    def test_repeat2_without_repeat1_rejected(self):
        with pytest.raises(InvalidInputError):
            StudyConfig(phases=("warmup", "repeat2"))


class TestRepeatPhases:
    def test_skips_extend_repeat1_and_replay_in_repeat2(self, world):
        dataset, model = world
        cfg = StudyConfig(
            tuple_size=4,
            warmup_quota=1,
            repeat_quota=3,
            seed=5,
            phases=("warmup", "repeat1", "repeat2"),
        )
        s = StudySession(dataset, model, cfg, "a0")
        answer(s)  # warmup
        # Skip twice, then answer three: repeat1 must issue 5 queries.
        issued = []
        for outcome in (None, None, 0, 1, 2):
            nq = s.next_query()
            assert nq["phase"] == "repeat1"
            issued.append(nq["query"])
            s.record_response(
                TupleResponse(
                    query_id=nq["query"].query_id, outcome=outcome, response_ms=1.0
                )
            )
        assert len(issued) == 5
        # repeat2 replays all five in order with fresh ids.
        replayed = []
        for _ in range(5):
            nq = s.next_query()
            assert nq["phase"] == "repeat2"
            replayed.append(nq["query"])
            s.record_response(
                TupleResponse(
                    query_id=nq["query"].query_id, outcome=0, response_ms=1.0
                )
            )
        assert s.next_query()["status"] == "study-complete"
        for orig, rep in zip(issued, replayed):
            assert (orig.head, orig.body) == (rep.head, rep.body)
            assert orig.query_id != rep.query_id

    def test_repeat2_display_order_shuffles(self, world):
        dataset, model = world
        cfg = StudyConfig(
            tuple_size=9,
            warmup_quota=1,
            repeat_quota=6,
            seed=6,
            phases=("warmup", "repeat1", "repeat2"),
        )
        s = StudySession(dataset, model, cfg, "a0")
        orders = {"repeat1": [], "repeat2": []}
        while True:
            nq = s.next_query()
            if nq["status"] == "study-complete":
                break
            if nq["phase"] in orders:
                orders[nq["phase"]].append(tuple(nq["display_order"]))
            s.record_response(
                TupleResponse(
                    query_id=nq["query"].query_id, outcome=0, response_ms=1.0
                )
            )
        assert orders["repeat1"] != orders["repeat2"]


class TestRq3:
    def run_to_phase(self, world, phase, cfg):
        dataset, model = world
        s = StudySession(dataset, model, cfg, "a0")
        while True:
            nq = s.next_query()
            assert nq["status"] == "query"
            if nq["phase"] == phase:
                return s
            s.record_response(
                TupleResponse(
                    query_id=nq["query"].query_id, outcome=0, response_ms=1.0
                )
            )

    def test_nonskip_grows_triplets_and_version(self, world):
        cfg = StudyConfig(
            tuple_size=4,
            warmup_quota=1,
            repeat_quota=2,
            train_quota=2,
            test_quota=1,
            seed=8,
            phases=("warmup", "repeat1", "rq3_active_nn"),
            opt=OptConfig(epochs=1, batch_size=16),
            tste=TsteConfig(d_ord=2, bootstrap=2, max_iter=20, restarts=1),
        )
        s = self.run_to_phase(world, "rq3_active_nn", cfg)
        st = s._phase_state
        before_triplets = len(st["triplets"])
        before_version = st["model"].version
        versions = [before_version]
        for _ in range(2):
            nq = s.next_query()
            info = s.record_response(
                TupleResponse(
                    query_id=nq["query"].query_id, outcome=0, response_ms=1.0
                )
            )
            if not s.complete:
                assert info.get("retrained")
                versions.append(s._phase_state["model"].version)
        # Each body-3 non-skip adds exactly 2 triplets.
        assert all(b > a for a, b in zip(versions, versions[1:]))

    def test_skip_in_rq3_no_retrain(self, world):
        cfg = StudyConfig(
            tuple_size=4,
            warmup_quota=1,
            repeat_quota=2,
            train_quota=1,
            test_quota=1,
            seed=9,
            phases=("warmup", "repeat1", "rq3_active_nn"),
            opt=OptConfig(epochs=1, batch_size=16),
            tste=TsteConfig(d_ord=2, bootstrap=2, max_iter=20, restarts=1),
        )
        s = self.run_to_phase(world, "rq3_active_nn", cfg)
        version = s._phase_state["model"].version
        head_before = s.next_query()["query"].head
        info = s.record_response(
            TupleResponse(
                query_id=s.next_query()["query"].query_id,
                outcome=None,
                response_ms=1.0,
            )
        )
        assert not info.get("retrained")
        assert s._phase_state["model"].version == version
        # The deterministic selector moves off the skipped head.
        assert s.next_query()["query"].head != head_before


@pytest.fixture(scope="module")
def study_run(world):
    dataset, model = world
    space = LatentSpace(dataset, norm_pairs=40, seed=0)
    cohort = [
        OracleProfile(annotator_id="o0", latent="euclidean", beta=0.3, seed=0),
        OracleProfile(annotator_id="o1", latent="archetype", beta=0.3, seed=1),
    ]
    logs, report = run_simulated_study(
        dataset, model, cohort, FAST_CFG, seed=1, space=space
    )
    return dataset, model, logs, report


class TestSimulatedStudy:
    def test_smoke_single_oracle_min_quotas(self, world):
        dataset, model = world
        cfg = StudyConfig(
            tuple_size=4,
            warmup_quota=1,
            repeat_quota=1,
            train_quota=1,
            test_quota=1,
            seed=2,
            opt=OptConfig(epochs=1, batch_size=8),
            tste=TsteConfig(d_ord=2, bootstrap=2, max_iter=20, restarts=1),
            acq=AcquisitionConfig(n_candidates=6, n_permutations=2, mc_passes=8),
        )
        cohort = [OracleProfile(annotator_id="solo", beta=0.5, tau=50.0, base_skip_rate=0.0)]
        logs, report = run_simulated_study(dataset, model, cohort, cfg, seed=0)
        assert "solo" in report.consistencies
        assert report.non_skip_counts["solo"]["repeat1"] == 1

    def test_non_skip_counts_match_quotas(self, study_run):
        _, _, _, report = study_run
        for a, counts in report.non_skip_counts.items():
            assert counts["warmup"] == FAST_CFG.warmup_quota
            assert counts["repeat1"] == FAST_CFG.repeat_quota
            for phase in ("rq3_active_nn", "rq3_infotuple"):
                assert counts[phase] == FAST_CFG.train_quota
            for phase in ("rq2_rnd", "rq2_mixed", "rq2_nn"):
                assert counts[phase] == FAST_CFG.train_quota + FAST_CFG.test_quota

    def test_triplet_accounting(self, study_run):
        # Training set growth equals (body size - 1) per non-skip reply.
        _, _, logs, _ = study_run
        ts = repeat1_triplets(logs[0])
        assert len(ts) == FAST_CFG.repeat_quota * (FAST_CFG.tuple_size - 2)

    def test_report_fields_complete(self, study_run):
        _, _, _, report = study_run
        for a in ("o0", "o1"):
            assert 0 <= report.consistencies[a] <= 1
            assert set(report.final_accuracy[a]) >= {
                "random",
                "random_nn",
                "nn",
                "active_nn",
                "infotuple",
            }
            for strat, (e, te, le) in report.effectiveness[a].items():
                assert te <= e
        R = report.reliability_matrix
        np.testing.assert_allclose(R, R.T)
        np.testing.assert_allclose(np.diag(R), 1.0)

    def test_heldout_pairs_recovered_from_log(self, study_run):
        dataset, model, logs, _ = study_run
        pairs = heldout_pairs_from_log(logs[0])
        # Each of the three fixed-strategy phases holds out test_quota
        # non-skip replies.
        assert len(pairs) == 3 * FAST_CFG.test_quota
        for query, response in pairs:
            assert not response.is_skip
            assert len(query.body) == FAST_CFG.tuple_size - 1
            assert query.body[response.outcome] in dataset.index
        # The recovered pairs are scoreable directly.
        acc = triplet_accuracy(model, dataset, pairs)
        assert 0.0 <= acc <= 1.0

    def test_replay_reproduces_report_exactly(self, study_run, tmp_path):
        _, _, logs, report = study_run
        for log in logs:
            log.save(tmp_path / f"{log.annotator_id}.jsonl")
        reloaded = [
            SessionLog.load(tmp_path / f"{log.annotator_id}.jsonl") for log in logs
        ]
        replayed = report_from_logs(reloaded)
        assert replayed.to_json() == report.to_json()
        assert replayed.to_csv() == report.to_csv()

    def test_log_round_trip_preserves_events(self, study_run, tmp_path):
        _, _, logs, _ = study_run
        p = tmp_path / "log.jsonl"
        logs[0].save(p)
        again = SessionLog.load(p)
        assert again.events == logs[0].events
        assert again.annotator_id == logs[0].annotator_id


class TestCombineWarmstart:
    def test_cluster_of_one_is_own_warm_start(self, study_run):
        _, _, logs, _ = study_run
        own = repeat1_triplets(logs[0])
        combined = combine_warmstart([logs[0]])
        assert combined.triplets == own.triplets

    def test_two_members_concatenate(self, study_run):
        _, _, logs, _ = study_run
        combined = combine_warmstart(logs)
        assert len(combined) == sum(len(repeat1_triplets(log)) for log in logs)

    def test_empty_cluster_rejected(self):
        with pytest.raises(InvalidInputError):
            combine_warmstart([])
