"""HTTP service: sessions, steering, state, artifacts, diversity."""
import json

import pytest
from fastapi.testclient import TestClient

from blocksmith.core import DEFAULT_CONSTANTS, canonical_serialize
from blocksmith.service import create_app
from blocksmith.steering import SteeringEngine
from blocksmith.store import Store

from conftest import PROGRESSIVE_TOWER, REVERT_AND_EXTEND

STACK = PROGRESSIVE_TOWER[0]


@pytest.fixture
def harness(tmp_path):
    app = create_app(store_path=str(tmp_path))
    with TestClient(app) as client:
        yield client, Store(tmp_path)


@pytest.fixture
def client(harness):
    return harness[0]


def _session(client, session_id="demo"):
    response = client.post("/sessions", json={"session_id": session_id})
    assert response.status_code == 201
    return response.json()["session_id"]


class TestSessions:
    def test_create_with_explicit_id(self, client):
        assert _session(client, "alpha-1") == "alpha-1"

    def test_create_generates_id(self, client):
        response = client.post("/sessions")
        assert response.status_code == 201
        assert response.json()["session_id"].startswith("s-")

    def test_duplicate_rejected(self, client):
        _session(client)
        response = client.post("/sessions", json={"session_id": "demo"})
        assert response.status_code == 409
        assert response.json()["detail"]["code"] == "SessionExists"

    def test_bad_id_rejected(self, client):
        response = client.post("/sessions", json={"session_id": "NOT OK"})
        assert response.status_code == 422
        assert response.json()["detail"]["code"] == "BadSessionId"

    def test_unknown_session_is_404(self, client):
        response = client.post("/sessions/ghost/instruction", json={"text": STACK})
        assert response.status_code == 404
        assert response.json()["detail"]["code"] == "NoSuchSession"

    def test_health(self, client):
        _session(client)
        data = client.get("/health").json()
        assert data == {"ok": True, "backend": "grammar", "sessions": 1}


class TestInstruction:
    def test_admits_and_returns_version_zero(self, client):
        sid = _session(client)
        response = client.post(f"/sessions/{sid}/instruction", json={"text": STACK})
        assert response.status_code == 200
        data = response.json()
        assert data["version"] == 0
        assert data["category"] == "Fresh"
        assert data["reference_version"] is None
        assert data["repairs"] == []
        assert len(data["hash"]) == 64
        assert data["snapshot"]["goal_summary"] == "red on table; blue on red"
        assert data["spec"]["name"] == "stack_red_blue"

    def test_artifact_stored_canonically(self, harness):
        client, store = harness
        sid = _session(client)
        data = client.post(f"/sessions/{sid}/instruction", json={"text": STACK}).json()
        fetched = client.get(f"/artifacts/{data['hash']}")
        assert fetched.status_code == 200
        assert fetched.headers["content-type"].startswith("application/json")
        assert fetched.content == canonical_serialize(store.get_spec(data["hash"]))

    def test_second_instruction_conflicts(self, client):
        sid = _session(client)
        client.post(f"/sessions/{sid}/instruction", json={"text": STACK})
        response = client.post(f"/sessions/{sid}/instruction", json={"text": STACK})
        assert response.status_code == 409
        assert response.json()["detail"]["code"] == "SessionNotEmpty"

    def test_unparsable_text(self, client):
        sid = _session(client)
        response = client.post(
            f"/sessions/{sid}/instruction", json={"text": "juggle the cubes"}
        )
        assert response.status_code == 422
        detail = response.json()["detail"]
        assert detail["code"] == "UnparsableInstruction"
        assert detail["stage"] == "Parse"
        assert "juggle" in detail["diagnostics"]

    def test_infeasible_count_is_repaired_on_the_way_in(self, client):
        sid = _session(client)
        response = client.post(
            f"/sessions/{sid}/instruction",
            json={"text": "Align 9 cubes in a straight line"},
        )
        assert response.status_code == 200
        data = response.json()
        assert data["repairs"] == ["first_feasibility_repair"]
        assert len(data["spec"]["assets"]) == 8


class TestSteer:
    def test_extend_creates_version_one(self, client):
        sid = _session(client)
        client.post(f"/sessions/{sid}/instruction", json={"text": STACK})
        response = client.post(
            f"/sessions/{sid}/steer", json={"text": PROGRESSIVE_TOWER[1]}
        )
        assert response.status_code == 200
        data = response.json()
        assert data["version"] == 1
        assert data["category"] == "Extend"
        assert data["reference_version"] == 0
        assert "repairs" not in data

    def test_steer_before_instruction(self, client):
        sid = _session(client)
        response = client.post(f"/sessions/{sid}/steer", json={"text": "add a red cube"})
        assert response.status_code == 409
        assert response.json()["detail"]["code"] == "SessionEmpty"

    def test_unmatched_edit(self, client):
        sid = _session(client)
        client.post(f"/sessions/{sid}/instruction", json={"text": STACK})
        response = client.post(
            f"/sessions/{sid}/steer", json={"text": "paint the tower in stripes"}
        )
        assert response.status_code == 422
        detail = response.json()["detail"]
        assert detail["code"] == "UnparsableInstruction"
        assert detail["stage"] == "Steer"

    def test_rejected_edit_rolls_back(self, client):
        sid = _session(client)
        client.post(f"/sessions/{sid}/instruction", json={"text": STACK})
        client.post(f"/sessions/{sid}/steer", json={"text": PROGRESSIVE_TOWER[1]})
        # Two cubes demanded on one support interpenetrate at the goal.
        response = client.post(
            f"/sessions/{sid}/steer",
            json={"text": "add a purple cube on top of the blue cube"},
        )
        assert response.status_code == 422
        detail = response.json()["detail"]
        assert detail["code"] == "ValidationRejected"
        assert detail["stage"] == "GoalVerify"
        assert detail["failure_kind"] == "SynthesisFailed"
        assert "interpenetrate" in detail["diagnostics"]
        versions = client.get(f"/sessions/{sid}/versions").json()["versions"]
        assert [v["version_id"] for v in versions] == [0, 1]
        retry = client.post(
            f"/sessions/{sid}/steer", json={"text": PROGRESSIVE_TOWER[2]}
        )
        assert retry.status_code == 200
        assert retry.json()["version"] == 2


class TestRevert:
    def test_revert_reproduces_hash(self, client):
        sid = _session(client)
        first = client.post(f"/sessions/{sid}/instruction", json={"text": STACK}).json()
        client.post(f"/sessions/{sid}/steer", json={"text": PROGRESSIVE_TOWER[1]})
        response = client.post(f"/sessions/{sid}/revert", json={"version": 0})
        assert response.status_code == 200
        data = response.json()
        assert data["version"] == 2
        assert data["reference_version"] == 0
        assert data["hash"] == first["hash"]
        assert data["snapshot"]["code_hash"] == first["hash"]

    def test_unknown_version(self, client):
        sid = _session(client)
        client.post(f"/sessions/{sid}/instruction", json={"text": STACK})
        response = client.post(f"/sessions/{sid}/revert", json={"version": 5})
        assert response.status_code == 404
        assert response.json()["detail"]["code"] == "NoSuchVersion"


class TestVersionsAndState:
    def test_versions_list_matches_direct_replay(self, client):
        sid = _session(client)
        client.post(f"/sessions/{sid}/instruction", json={"text": PROGRESSIVE_TOWER[0]})
        for text in PROGRESSIVE_TOWER[1:]:
            assert (
                client.post(f"/sessions/{sid}/steer", json={"text": text}).status_code
                == 200
            )
        versions = client.get(f"/sessions/{sid}/versions").json()["versions"]

        engine = SteeringEngine()
        engine.begin(PROGRESSIVE_TOWER[0])
        for text in PROGRESSIVE_TOWER[1:]:
            engine.steer(text)
        assert [v["code_hash"] for v in versions] == [
            snap.code_hash for snap in engine.versions
        ]

    def test_initial_state_rows(self, client):
        sid = _session(client)
        client.post(f"/sessions/{sid}/instruction", json={"text": STACK})
        response = client.get(f"/sessions/{sid}/state/0", params={"seed": 3})
        assert response.status_code == 200
        data = response.json()
        assert data["phase"] == "initial"
        assert data["seed"] == 3
        ids = {row["id"] for row in data["rows"]}
        assert ids == {"cube-red-0", "cube-blue-0"}
        assert data["constants"] == DEFAULT_CONSTANTS.to_obj()
        again = client.get(f"/sessions/{sid}/state/0", params={"seed": 3})
        assert again.json() == data

    def test_goal_state_satisfies_stack(self, client):
        sid = _session(client)
        client.post(f"/sessions/{sid}/instruction", json={"text": STACK})
        response = client.get(
            f"/sessions/{sid}/state/0", params={"phase": "goal", "seed": 0}
        )
        assert response.status_code == 200
        rows = {row["id"]: row for row in response.json()["rows"]}
        red, blue = rows["cube-red-0"], rows["cube-blue-0"]
        assert blue["z"] == pytest.approx(red["z"] + 0.04, abs=1e-6)
        assert blue["x"] == pytest.approx(red["x"], abs=1e-6)

    def test_bad_phase_and_version(self, client):
        sid = _session(client)
        client.post(f"/sessions/{sid}/instruction", json={"text": STACK})
        assert (
            client.get(f"/sessions/{sid}/state/0", params={"phase": "dream"}).status_code
            == 422
        )
        response = client.get(f"/sessions/{sid}/state/7")
        assert response.status_code == 404
        assert response.json()["detail"]["code"] == "NoSuchVersion"


class TestArtifacts:
    def test_unknown_digest(self, client):
        assert client.get(f"/artifacts/{'0' * 64}").status_code == 404
        assert client.get("/artifacts/not-a-hash").status_code == 404

    def test_corrupted_artifact_is_500(self, harness):
        client, store = harness
        sid = _session(client)
        digest = client.post(f"/sessions/{sid}/instruction", json={"text": STACK}).json()[
            "hash"
        ]
        path = store.artifacts_dir / digest[:2] / f"{digest}.json"
        path.write_bytes(path.read_bytes().replace(b"stack", b"stuck", 1))
        response = client.get(f"/artifacts/{digest}")
        assert response.status_code == 500
        assert response.json()["detail"]["code"] == "HashMismatch"


class TestEventLog:
    def test_log_records_each_commit(self, harness):
        client, store = harness
        sid = _session(client)
        client.post(f"/sessions/{sid}/instruction", json={"text": STACK})
        client.post(f"/sessions/{sid}/steer", json={"text": PROGRESSIVE_TOWER[1]})
        client.post(f"/sessions/{sid}/revert", json={"version": 0})
        events = store.read_events(sid)
        assert [e["kind"] for e in events] == ["instruction", "steer", "revert"]
        assert [e["seq"] for e in events] == [0, 1, 2]
        assert events[2]["reference_version"] == 0
        assert events[2]["hash"] == events[0]["hash"]

    def test_rejected_edits_never_reach_the_log(self, harness):
        client, store = harness
        sid = _session(client)
        client.post(f"/sessions/{sid}/instruction", json={"text": STACK})
        client.post(f"/sessions/{sid}/steer", json={"text": "paint it"})
        assert [e["kind"] for e in store.read_events(sid)] == ["instruction"]


class TestDiversity:
    def test_curves_for_two_groups(self, client):
        body = {
            "groups": {
                "ann": [REVERT_AND_EXTEND[0], REVERT_AND_EXTEND[1]],
                "bob": [PROGRESSIVE_TOWER[0], PROGRESSIVE_TOWER[3]],
            },
            "shuffles": 5,
        }
        response = client.post("/diversity", json=body)
        assert response.status_code == 200
        data = response.json()
        assert data["pooled"]["ks"] == [2]
        assert set(data["cumulative"]) == {"ann", "bob"}
        assert data["combined"]["ns"] == [2, 3, 4]
        assert all(0.0 <= v <= 2.0 for v in data["combined"]["values"])

    def test_single_group_too_few(self, client):
        response = client.post(
            "/diversity", json={"groups": {"solo": ["a b c", "d e f"]}}
        )
        assert response.status_code == 422
        assert response.json()["detail"]["code"] == "TooFewTasks"

    def test_shuffle_bounds_enforced(self, client):
        response = client.post(
            "/diversity",
            json={"groups": {"a": ["x"], "b": ["y"]}, "shuffles": 0},
        )
        assert response.status_code == 422


def test_unknown_backend_rejected(tmp_path):
    with pytest.raises(ValueError, match="unknown proposal backend"):
        create_app(store_path=str(tmp_path), backend_name="oracle")
