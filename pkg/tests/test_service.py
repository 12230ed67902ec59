import json
import threading

import numpy as np
import pytest
from fastapi.testclient import TestClient

from faceiq.manifest import ManifestRow
from faceiq.service import (RatingService, StudyPlan, build_study_plan,
                            create_app)


def make_plan(n_tests=10, pilot=20, golden=5):
    rows = []
    rng = np.random.default_rng(0)
    total = pilot + 2 * (n_tests + golden)  # pilot plus two formal sessions
    for i in range(total):
        mos = [float(rng.integers(1, 6)) for _ in range(6)]
        rows.append(ManifestRow(id=f"img{i:03d}", image_path=f"images/img{i:03d}.png",
                                bbox=(0, 0, 112, 112), mask_path=None,
                                scenario="indoor_day", mos=mos))
    return build_study_plan(rows, root=".", pilot_count=pilot,
                            tests_per_session=n_tests, seed=1)


@pytest.fixture
def client(tmp_path):
    plan = make_plan()
    service = RatingService(plan, tmp_path / "events.jsonl")
    app = create_app(service)
    with TestClient(app) as c:
        c.service = service
        c.plan = plan
        c.store = tmp_path / "events.jsonl"
        yield c


def run_pilot(client, rater, scorer):
    """Drive a pilot to completion; scorer maps expert scores to submitted."""
    created = client.post("/sessions", json={"rater_id": rater, "mode": "pilot"}).json()
    sid = created["session_id"]
    assert created["total_items"] == 20
    while True:
        nxt = client.get(f"/sessions/{sid}/next").json()
        if nxt.get("done"):
            break
        expert = client.plan.pilot_expert[nxt["image_id"]]
        resp = client.post(f"/sessions/{sid}/ratings",
                           json={"image_id": nxt["image_id"],
                                 "scores": scorer(expert)})
        assert resp.status_code == 200
    return sid


class TestPilotFlow:
    def test_pilot_queue_length_and_pass(self, client):
        sid = run_pilot(client, "alice", lambda e: list(e))
        gate = client.get(f"/sessions/{sid}/gate").json()
        assert gate["pass"] is True
        assert all(r == pytest.approx(1.0) for r in gate["per_dimension_srcc"])

    def test_reversed_rater_fails_and_can_retrain(self, client):
        sid = run_pilot(client, "bob", lambda e: [6 - s for s in e])
        gate = client.get(f"/sessions/{sid}/gate").json()
        assert gate["pass"] is False
        # formal still locked
        resp = client.post("/sessions", json={"rater_id": "bob", "mode": "formal"})
        assert resp.status_code == 423
        # fresh pilot, honest this time
        sid2 = run_pilot(client, "bob", lambda e: list(e))
        assert client.get(f"/sessions/{sid2}/gate").json()["pass"] is True
        resp = client.post("/sessions", json={"rater_id": "bob", "mode": "formal"})
        assert resp.status_code == 200

    def test_gate_requires_completion(self, client):
        created = client.post("/sessions",
                              json={"rater_id": "carl", "mode": "pilot"}).json()
        resp = client.get(f"/sessions/{created['session_id']}/gate")
        assert resp.status_code == 400

    def test_formal_before_pilot_is_gated(self, client):
        resp = client.post("/sessions", json={"rater_id": "nobody", "mode": "formal"})
        assert resp.status_code == 423


class TestFormalFlow:
    def start_formal(self, client, rater="alice"):
        run_pilot(client, rater, lambda e: list(e))
        created = client.post("/sessions",
                              json={"rater_id": rater, "mode": "formal"}).json()
        return created["session_id"], created

    def expert_for(self, client, sid, image_id):
        state = client.service._sessions[sid]
        plan_session = client.service._plan_session(state)
        return plan_session.golden.get(image_id)

    def test_queue_composition(self, client):
        sid, created = self.start_formal(client)
        assert created["total_items"] == 10 + 5 + 5
        queue = client.service._sessions[sid].queue
        roles = [q["role"] for q in queue]
        assert roles.count("golden") == 5 and roles.count("repeated_second") == 5
        assert all(r != "golden" for r in roles[:3])  # protected prefix
        for item in (q for q in queue if q["role"] == "repeated_second"):
            first = next(i for i, q in enumerate(queue)
                         if q["image_id"] == item["image_id"]
                         and q["role"] == "repeated_first")
            second = queue.index(item)
            assert second > first

    def test_clean_session_completes(self, client):
        sid, _ = self.start_formal(client)
        first_scores = {}
        while True:
            nxt = client.get(f"/sessions/{sid}/next").json()
            if nxt.get("done"):
                assert nxt["status"] == "complete"
                break
            image_id = nxt["image_id"]
            expert = self.expert_for(client, sid, image_id)
            if expert is not None:
                scores = list(expert)
            elif image_id in first_scores:
                scores = first_scores[image_id]
            else:
                scores = [3, 3, 3, 3, 3, 3]
            first_scores.setdefault(image_id, scores)
            r = client.post(f"/sessions/{sid}/ratings",
                            json={"image_id": image_id, "scores": scores})
            assert r.status_code == 200

    def test_two_golden_violations_discard(self, client):
        sid, _ = self.start_formal(client)
        violations = 0
        while True:
            nxt = client.get(f"/sessions/{sid}/next").json()
            if nxt.get("done"):
                assert nxt["status"] == "discarded"
                break
            image_id = nxt["image_id"]
            expert = self.expert_for(client, sid, image_id)
            if expert is not None and violations < 2:
                scores = [max(1, min(5, s - 3)) if s >= 4 else min(5, s + 3)
                          for s in expert]
                violations += 1
                resp = client.post(f"/sessions/{sid}/ratings",
                                   json={"image_id": image_id, "scores": scores})
                assert resp.json()["live_flags"]["flagged"] is True
                continue
            scores = list(expert) if expert is not None else [3] * 6
            client.post(f"/sessions/{sid}/ratings",
                        json={"image_id": image_id, "scores": scores})
        summary = client.get(f"/sessions/{sid}").json()
        assert summary["outlier_count"] == 2 and summary["screened_count"] == 10

    def test_next_is_idempotent_and_order_enforced(self, client):
        sid, _ = self.start_formal(client)
        a = client.get(f"/sessions/{sid}/next").json()
        b = client.get(f"/sessions/{sid}/next").json()
        assert a == b
        wrong = client.post(f"/sessions/{sid}/ratings",
                            json={"image_id": "not-the-cursor-item",
                                  "scores": [3] * 6})
        assert wrong.status_code == 409

    def test_score_validation(self, client):
        sid, _ = self.start_formal(client)
        nxt = client.get(f"/sessions/{sid}/next").json()
        bad = client.post(f"/sessions/{sid}/ratings",
                          json={"image_id": nxt["image_id"], "scores": [0, 3, 3, 3, 3, 3]})
        assert bad.status_code == 400
        bad = client.post(f"/sessions/{sid}/ratings",
                          json={"image_id": nxt["image_id"], "scores": [3] * 5})
        assert bad.status_code == 400

    def test_gate_endpoint_rejects_formal(self, client):
        sid, _ = self.start_formal(client)
        assert client.get(f"/sessions/{sid}/gate").status_code == 400

    def test_concurrent_submissions_single_winner(self, client):
        sid, _ = self.start_formal(client)
        nxt = client.get(f"/sessions/{sid}/next").json()
        expert = self.expert_for(client, sid, nxt["image_id"])
        scores = list(expert) if expert else [3] * 6
        results = []

        def submit():
            r = client.post(f"/sessions/{sid}/ratings",
                            json={"image_id": nxt["image_id"], "scores": scores})
            results.append(r.status_code)

        threads = [threading.Thread(target=submit) for _ in range(2)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert sorted(results) == [200, 409]


class TestEventSourcing:
    def test_replay_reconstructs_state(self, client, tmp_path):
        run_pilot(client, "alice", lambda e: list(e))
        created = client.post("/sessions",
                              json={"rater_id": "alice", "mode": "formal"}).json()
        sid = created["session_id"]
        for _ in range(3):
            nxt = client.get(f"/sessions/{sid}/next").json()
            expert = client.plan.golden_lookup if False else None
            state = client.service._sessions[sid]
            plan_session = client.service._plan_session(state)
            expert = plan_session.golden.get(nxt["image_id"])
            client.post(f"/sessions/{sid}/ratings",
                        json={"image_id": nxt["image_id"],
                              "scores": list(expert) if expert else [3] * 6})

        replayed = RatingService(client.plan, client.store)
        for sid_, state in client.service._sessions.items():
            other = replayed._sessions[sid_]
            assert other.summary() == state.summary()
            assert other.queue == state.queue
            assert other.ratings == state.ratings
        assert replayed._pilot_passed == client.service._pilot_passed

    def test_export_contains_no_expert_scores(self, client):
        run_pilot(client, "alice", lambda e: list(e))
        log = client.get("/export/ratings").text
        for line in log.splitlines():
            event = json.loads(line)
            assert "expert" not in json.dumps(event)

    def test_distinct_raters_distinct_interleavings(self, client):
        run_pilot(client, "r1", lambda e: list(e))
        run_pilot(client, "r2", lambda e: list(e))
        s1 = client.post("/sessions", json={"rater_id": "r1", "mode": "formal"}).json()
        s2 = client.post("/sessions", json={"rater_id": "r2", "mode": "formal"}).json()
        q1 = client.service._sessions[s1["session_id"]].queue
        q2 = client.service._sessions[s2["session_id"]].queue
        assert q1 != q2


class TestPlanBuilder:
    def test_session_arithmetic(self):
        plan = make_plan(n_tests=10)
        assert len(plan.sessions) == 2
        for s in plan.sessions:
            assert len(s.test_ids) + len(s.golden) + len(s.repeated) == 20
            assert set(s.repeated) <= set(s.test_ids)
            assert not set(s.golden) & set(s.test_ids)

    def test_plan_roundtrip(self):
        plan = make_plan()
        again = StudyPlan.from_json(plan.to_json())
        assert again.pilot_items == plan.pilot_items
        assert again.sessions[0].golden == plan.sessions[0].golden
