import pytest
from fastapi.testclient import TestClient

from scenesim.acquisition import AcquisitionConfig
from scenesim.embed import OptConfig
from scenesim.ordinal import TsteConfig
from scenesim.scenes import save_scene_archive
from scenesim.server import ServiceConfig, create_app
from scenesim.session import StudyConfig
from scenesim.synth import SynthProfile, synth_generate

TINY_PROFILE = SynthProfile(team_size=1, hz=2.0, duration_s=5.0)

FAST_STUDY = StudyConfig(
    tuple_size=4,
    warmup_quota=1,
    repeat_quota=2,
    train_quota=1,
    test_quota=1,
    seed=3,
    opt=OptConfig(epochs=1, batch_size=8),
    tste=TsteConfig(d_ord=2, bootstrap=2, max_iter=20, restarts=1),
    acq=AcquisitionConfig(n_candidates=6, n_permutations=2, mc_passes=8),
)


@pytest.fixture()
def service(tmp_path):
    archive = tmp_path / "scenes.jsonl"
    save_scene_archive(synth_generate(seed=4, n_scenes=14, profile=TINY_PROFILE), archive)
    cfg = ServiceConfig(
        dataset_path=str(archive),
        storage_dir=str(tmp_path / "sessions"),
        study=FAST_STUDY,
    )
    return cfg, tmp_path


def drive_to_completion(client, token, max_steps=500):
    for _ in range(max_steps):
        q = client.get(f"/sessions/{token}/query").json()
        if q["status"] != "query":
            return q["status"]
        r = client.post(
            f"/sessions/{token}/response",
            json={"query_id": q["query_id"], "outcome": 0, "response_ms": 700.0},
        )
        assert r.status_code == 200, r.text
    raise AssertionError("session did not complete")


class TestEndpoints:
    def test_round_trip_smoke(self, service):
        cfg, _ = service
        client = TestClient(create_app(cfg))
        created = client.post("/sessions", json={"annotator_id": "human-1"}).json()
        token = created["session_id"]
        q1 = client.get(f"/sessions/{token}/query").json()
        assert q1["status"] == "query" and q1["phase"] == "warmup"
        assert len(q1["body"]) == 3
        assert sorted(q1["display_order"]) == [0, 1, 2]
        r = client.post(
            f"/sessions/{token}/response",
            json={"query_id": q1["query_id"], "outcome": 1, "response_ms": 432.0},
        )
        assert r.status_code == 200 and r.json()["accepted"]
        q2 = client.get(f"/sessions/{token}/query").json()
        assert q2["query_id"] != q1["query_id"]

    def test_duplicate_response_conflict(self, service):
        cfg, _ = service
        client = TestClient(create_app(cfg))
        token = client.post("/sessions", json={}).json()["session_id"]
        q = client.get(f"/sessions/{token}/query").json()
        payload = {"query_id": q["query_id"], "outcome": 0, "response_ms": 100.0}
        assert client.post(f"/sessions/{token}/response", json=payload).status_code == 200
        dup = client.post(f"/sessions/{token}/response", json=payload)
        assert dup.status_code == 409
        body = dup.json()
        assert body["code"] == "ConflictError" and "message" in body

    def test_out_of_order_response(self, service):
        cfg, _ = service
        client = TestClient(create_app(cfg))
        token = client.post("/sessions", json={}).json()["session_id"]
        client.get(f"/sessions/{token}/query")
        r = client.post(
            f"/sessions/{token}/response",
            json={"query_id": "bogus", "outcome": 0, "response_ms": 1.0},
        )
        assert r.status_code == 409
        assert r.json()["code"] == "OutOfOrderError"

    def test_unknown_session_404(self, service):
        cfg, _ = service
        client = TestClient(create_app(cfg))
        assert client.get("/sessions/nope/query").status_code == 404

    def test_scene_payload(self, service):
        cfg, _ = service
        client = TestClient(create_app(cfg))
        token = client.post("/sessions", json={}).json()["session_id"]
        q = client.get(f"/sessions/{token}/query").json()
        scene = client.get(f"/scenes/{q['head']}").json()
        assert scene["id"] == q["head"]
        assert len(scene["agents"]) == 3  # 1v1 plus ball in the tiny profile
        assert client.get("/scenes/ghost").status_code == 404

    def test_full_session_and_report(self, service):
        cfg, _ = service
        client = TestClient(create_app(cfg))
        created = client.post("/sessions", json={"annotator_id": "h"}).json()
        token = created["session_id"]
        for question, answer in [("expertise", "amateur"), ("understanding", "yes")]:
            assert (
                client.post(
                    f"/sessions/{token}/survey",
                    json={"question": question, "answer": answer},
                ).status_code
                == 200
            )
        assert drive_to_completion(client, token) == "study-complete"
        metrics = client.get(f"/sessions/{token}/metrics").json()
        assert metrics["complete"] is True
        assert metrics["consistency"] is not None
        report = client.get("/export/report").json()
        assert "h" in report["consistencies"]

    def test_restart_replay_restores_state(self, service):
        cfg, _ = service
        app = create_app(cfg)
        client = TestClient(app)
        token = client.post("/sessions", json={"annotator_id": "r"}).json()["session_id"]
        answered = []
        for _ in range(3):
            q = client.get(f"/sessions/{token}/query").json()
            answered.append(q["query_id"])
            client.post(
                f"/sessions/{token}/response",
                json={"query_id": q["query_id"], "outcome": 0, "response_ms": 10.0},
            )
        expected_next = client.get(f"/sessions/{token}/query").json()

        client2 = TestClient(create_app(cfg))  # fresh process over same storage
        q2 = client2.get(f"/sessions/{token}/query").json()
        assert q2["phase"] == expected_next["phase"]
        assert q2["head"] == expected_next["head"]
        assert q2["body"] == expected_next["body"]
        metrics = client2.get(f"/sessions/{token}/metrics").json()
        assert metrics["non_skip_counts"].get("warmup") == 1
