import pytest
from fastapi.testclient import TestClient

from teamrules.regions import Region
from teamrules.sessions import build_card, replay_transcript
from teamrules.service import create_app

from conftest import make_dataset, make_example
from test_sessions import onboarding_fixture


@pytest.fixture()
def client():
    dataset, regions = onboarding_fixture()
    app = create_app(dataset, regions, seed=7)
    with TestClient(app) as tc:
        tc.by_label = {ex.id: ex.label for ex in dataset.examples}
        yield tc


def open_session(client, **options):
    response = client.post("/sessions", json={"options": options})
    assert response.status_code == 201
    return response.json()["session_id"]


def drive_to_done(client, session_id, wrong_items=()):
    """Answer every served item; returns (items answered, payloads seen)."""
    payloads = []
    while True:
        response = client.get(f"/sessions/{session_id}/next")
        payloads.append(response.json())
        if response.status_code == 409:
            assert response.json()["error"] == "done"
            return payloads
        item = response.json()["item"]
        if item["kind"] == "card":
            answer = "acknowledged"
        else:
            answer = client.by_label[item["example"]["id"]]
            if item["item_id"] in wrong_items:
                answer = "zzz"
        response = client.post(f"/sessions/{session_id}/answer",
                               json={"answer": answer,
                                     "used_ai": item["phase"] == "testing",
                                     "item_id": item["item_id"]})
        assert response.status_code == 200
        payloads.append(response.json())


class TestBasics:
    def test_health(self, client):
        body = client.get("/health").json()
        assert body == {"v": 1, "status": "ok", "regions": 2, "examples": 20}

    def test_card_reports_incomplete_fields(self, client):
        body = client.get("/card").json()
        assert body["v"] == 1
        assert body["card"]["average_ai_performance"]["value"] == 12 / 16
        assert "training_data_source" in body["incomplete_fields"]

    def test_every_payload_is_versioned(self, client):
        session_id = open_session(client, n_practice=1, n_test=2)
        payloads = drive_to_done(client, session_id)
        payloads.append(client.get(f"/sessions/{session_id}/transcript").json())
        payloads.append(client.get("/recommend",
                                   params={"example_id": "ex0016"}).json())
        payloads.append(client.get("/sessions/nope/next").json())
        assert all(body["v"] == 1 for body in payloads)


class TestSessionEndpoints:
    def test_unknown_session_is_404(self, client):
        assert client.get("/sessions/nope/next").status_code == 404
        assert client.post("/sessions/nope/answer",
                           json={"answer": "a"}).status_code == 404
        assert client.get("/sessions/nope/transcript").status_code == 404

    def test_option_validation(self, client):
        bad = [
            {"options": {"bogus": 1}},
            {"options": {"n_test": "three"}},
            {"options": {"n_test": True}},  # booleans are not counts
            {"options": {"show_recommendations": 1}},
            {"options": 3},
        ]
        for payload in bad:
            assert client.post("/sessions", json=payload).status_code == 400
        assert client.post("/sessions").status_code == 201  # empty body is fine

    def test_next_is_idempotent_until_answered(self, client):
        session_id = open_session(client)
        first = client.get(f"/sessions/{session_id}/next").json()
        second = client.get(f"/sessions/{session_id}/next").json()
        assert first == second

    def test_answer_validation(self, client):
        session_id = open_session(client)
        post = lambda body: client.post(f"/sessions/{session_id}/answer",
                                        json=body)
        assert post({}).status_code == 400
        assert post({"answer": "a", "used_ai": "yes"}).status_code == 400
        assert post({"answer": "a", "item_id": 3}).status_code == 400

    def test_resubmission_returns_the_original_feedback(self, client):
        session_id = open_session(client)
        item = client.get(f"/sessions/{session_id}/next").json()["item"]
        body = {"answer": "ok", "item_id": item["item_id"]}
        first = client.post(f"/sessions/{session_id}/answer", json=body)
        assert first.status_code == 200
        again = client.post(f"/sessions/{session_id}/answer", json=body)
        assert again.status_code == 409
        assert again.json()["error"] == "already_answered"
        assert again.json()["feedback"] == first.json()["feedback"]
        assert again.json()["item_id"] == item["item_id"]

    def test_future_item_id_is_a_mismatch(self, client):
        session_id = open_session(client)
        response = client.post(f"/sessions/{session_id}/answer",
                               json={"answer": "a", "item_id": "testing:0"})
        assert response.status_code == 409
        assert response.json()["error"] == "item_mismatch"

    def test_full_run_and_transcript_replay(self, client):
        dataset, regions = onboarding_fixture()
        session_id = open_session(client, n_practice=1, n_test=4)
        payloads = drive_to_done(client, session_id, wrong_items={"teaching:0"})

        answers = [p for p in payloads if "feedback" in p]
        assert [p["phase"] for p in answers].count("done") >= 1
        transcript = client.get(f"/sessions/{session_id}/transcript").json()
        assert transcript["phase"] == "done"
        assert transcript["second_pass_queue"] == [0]
        assert len(transcript["events"]) == len(answers)

        served = {key: value for key, value in transcript.items() if key != "v"}
        replayed = replay_transcript(dataset, regions, build_card(dataset),
                                     served)
        assert replayed.transcript() == served

    def test_done_session_rejects_further_traffic(self, client):
        session_id = open_session(client, n_practice=0, n_test=0)
        drive_to_done(client, session_id)
        response = client.get(f"/sessions/{session_id}/next")
        assert response.status_code == 409 and response.json()["error"] == "done"
        response = client.post(f"/sessions/{session_id}/answer",
                               json={"answer": "a"})
        assert response.status_code == 409 and response.json()["error"] == "done"

    def test_sessions_are_independent(self, client):
        first = open_session(client, n_practice=0, n_test=0)
        second = open_session(client, n_practice=0, n_test=0)
        client.post(f"/sessions/{first}/answer", json={"answer": "ok"})
        one = client.get(f"/sessions/{first}/next").json()["item"]
        other = client.get(f"/sessions/{second}/next").json()["item"]
        assert one["phase"] == "teaching" and other["phase"] == "intro"

    def test_zero_region_service_still_onboards(self):
        dataset, _ = onboarding_fixture()
        with TestClient(create_app(dataset, [])) as tc:
            response = tc.post("/sessions",
                               json={"options": {"n_practice": 0, "n_test": 1}})
            session_id = response.json()["session_id"]
            tc.post(f"/sessions/{session_id}/answer", json={"answer": "ok"})
            item = tc.get(f"/sessions/{session_id}/next").json()["item"]
            assert item["phase"] == "testing"


class TestRecommend:
    def test_lookup_by_example_id(self, client):
        body = client.get("/recommend", params={"example_id": "ex0016"}).json()
        assert body["covered"] is True
        assert body["recommendation"]["decision"] == 1
        assert body["recommendation"]["region_id"] == 0
        body = client.get("/recommend", params={"example_id": "ex0018"}).json()
        assert body["covered"] is False and body["recommendation"] is None
        assert client.get("/recommend",
                          params={"example_id": "ghost"}).status_code == 404

    def test_raw_vector_validation(self, client):
        post = lambda body: client.post("/recommend", json=body)
        assert post({}).status_code == 400
        assert post({"embedding": [1.0]}).status_code == 400  # wrong length
        assert post({"embedding": ["x", "y"]}).status_code == 400
        assert post({"embedding": [5.1, 5.0],
                     "ai_features": [1.0]}).status_code == 400

    def test_raw_vector_recommendation(self, client):
        body = client.post("/recommend",
                           json={"embedding": [5.1, 5.0]}).json()
        assert body["covered"] is True
        assert body["recommendation"]["decision"] == 1
        body = client.post("/recommend", json={"embedding": [0.0, 0.0]}).json()
        assert body["covered"] is False

    def test_raw_vectors_are_scaled_for_normalized_datasets(self):
        examples = [make_example(0, (0.5, -1.0), label="a", ai="a", human="b")]
        region = Region(id=0, centroid=(0.5, -1.0), scale=(1.0, 1.0),
                        radius=0.05, decision=1)
        normalized = make_dataset(examples, vocab=("a", "b"), normalized=True)
        with TestClient(create_app(normalized, [region])) as tc:
            body = tc.post("/recommend",
                           json={"embedding": [2000.0, -4000.0]}).json()
            assert body["covered"] is True  # max-abs scaling maps onto the region
        plain = make_dataset(examples, vocab=("a", "b"), normalized=False)
        with TestClient(create_app(plain, [region])) as tc:
            body = tc.post("/recommend",
                           json={"embedding": [2000.0, -4000.0]}).json()
            assert body["covered"] is False


def test_assets_are_served_from_the_configured_directory(tmp_path):
    (tmp_path / "hello.txt").write_text("static ok")
    dataset, regions = onboarding_fixture()
    with TestClient(create_app(dataset, regions, assets_dir=tmp_path)) as tc:
        response = tc.get("/assets/hello.txt")
        assert response.status_code == 200 and response.text == "static ok"
