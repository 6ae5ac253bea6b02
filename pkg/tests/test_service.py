import pytest
from fastapi.testclient import TestClient

from coralcast.elicitation import ClassificationStore, sample_points, score_accuracy
from coralcast.service import (CatalogImage, ElicitationService, build_app,
                               read_catalog_csv, read_expert_labels_csv)


def _service(n_points=4, seed=0):
    catalog = [
        CatalogImage("val1", "Catlin", 150.1, -22.9, 2004,
                     "http://img/val1.jpg", True),
        CatalogImage("rc1", "ReefCheck", 150.3, -22.7, 2004,
                     "http://img/rc1.jpg", False),
    ]
    expert = {"val1": {0: "coral", 1: "algae", 2: "coral", 3: "sand"}}
    return ElicitationService(catalog, expert, store=ClassificationStore(),
                              n_points=n_points, seed=seed)


@pytest.fixture
def client():
    return TestClient(build_app(_service()))


def _classify_all(client, media_id, user, labels):
    points = client.get(f"/api/images/{media_id}/points",
                        params={"user": user}).json()
    body = [{"media_id": media_id, "point_id": p["point_id"],
             "label": lab, "user_id": user}
            for p, lab in zip(points, labels)]
    return client.post("/api/classifications", json=body)


class TestImagesNext:
    def test_validation_images_served_first(self, client):
        img = client.get("/api/images/next", params={"user": "alice"}).json()
        assert img["media_id"] == "val1"
        assert img["validation"] is True
        assert set(img) == {"media_id", "image_url", "lon", "lat",
                            "validation"}

    def test_advances_after_completion(self, client):
        resp = _classify_all(client, "val1", "alice",
                             ["coral", "algae", "coral", "sand"])
        assert resp.json() == {"accepted": 4}
        img = client.get("/api/images/next", params={"user": "alice"}).json()
        assert img["media_id"] == "rc1"

    def test_exhausted_catalog_404(self, client):
        _classify_all(client, "val1", "alice",
                      ["coral", "algae", "coral", "sand"])
        _classify_all(client, "rc1", "alice",
                      ["water", "water", "coral", "unknown"])
        resp = client.get("/api/images/next", params={"user": "alice"})
        assert resp.status_code == 404


class TestPoints:
    def test_points_are_deterministic(self, client):
        a = client.get("/api/images/rc1/points",
                       params={"user": "alice"}).json()
        b = client.get("/api/images/rc1/points",
                       params={"user": "alice"}).json()
        assert a == b
        assert len(a) == 4
        for p in a:
            assert 0.0 <= p["x"] < 1.0 and 0.0 <= p["y"] < 1.0

    def test_validation_points_shared_between_users(self, client):
        a = client.get("/api/images/val1/points",
                       params={"user": "alice"}).json()
        b = client.get("/api/images/val1/points",
                       params={"user": "bob"}).json()
        assert a == b

    def test_survey_points_differ_between_users(self, client):
        a = client.get("/api/images/rc1/points",
                       params={"user": "alice"}).json()
        b = client.get("/api/images/rc1/points",
                       params={"user": "bob"}).json()
        assert a != b

    def test_unknown_image_404(self, client):
        resp = client.get("/api/images/nope/points",
                          params={"user": "alice"})
        assert resp.status_code == 404


class TestClassifications:
    def test_batch_accepted(self, client):
        resp = _classify_all(client, "val1", "alice",
                             ["coral", "coral", "algae", "unknown"])
        assert resp.status_code == 200
        assert resp.json() == {"accepted": 4}

    def test_unissued_point_rejects_whole_batch(self, client):
        client.get("/api/images/val1/points", params={"user": "alice"})
        body = [
            {"media_id": "val1", "point_id": 0, "label": "coral",
             "user_id": "alice"},
            {"media_id": "val1", "point_id": 99, "label": "coral",
             "user_id": "alice"},
        ]
        resp = client.post("/api/classifications", json=body)
        assert resp.status_code == 400
        acc = client.get("/api/users/alice/accuracy").json()
        assert acc["n_validation_images"] == 0

    def test_invalid_label_rejected(self, client):
        client.get("/api/images/val1/points", params={"user": "alice"})
        resp = client.post("/api/classifications", json=[
            {"media_id": "val1", "point_id": 0, "label": "fish",
             "user_id": "alice"}])
        assert resp.status_code == 400

    def test_resubmission_updates_label(self, client):
        _classify_all(client, "val1", "alice",
                      ["coral", "coral", "coral", "coral"])
        resp = client.post("/api/classifications", json=[
            {"media_id": "val1", "point_id": 0, "label": "sand",
             "user_id": "alice"}])
        assert resp.json() == {"accepted": 1}


class TestAccuracy:
    def test_matches_direct_scoring(self, client):
        # expert: coral, algae, coral, sand; alice wrong on point 3
        _classify_all(client, "val1", "alice",
                      ["coral", "algae", "coral", "coral"])
        got = client.get("/api/users/alice/accuracy").json()
        assert got["n_validation_images"] == 1
        # tp=2, tn=1, fp=1, fn=0
        assert got["w_a"] == pytest.approx(score_accuracy([(2, 1, 1, 0)]))

    def test_unknowns_excluded(self, client):
        _classify_all(client, "val1", "alice",
                      ["unknown", "algae", "unknown", "sand"])
        got = client.get("/api/users/alice/accuracy").json()
        assert got["w_a"] == pytest.approx(1.0)

    def test_unscored_user_reports_null(self, client):
        got = client.get("/api/users/ghost/accuracy").json()
        assert got == {"w_a": None, "n_validation_images": 0}

    def test_recomputed_on_demand(self, client):
        _classify_all(client, "val1", "alice",
                      ["coral", "algae", "coral", "sand"])
        assert client.get("/api/users/alice/accuracy").json()["w_a"] == 1.0
        client.post("/api/classifications", json=[
            {"media_id": "val1", "point_id": 0, "label": "sand",
             "user_id": "alice"}])
        assert client.get("/api/users/alice/accuracy").json()["w_a"] == \
            pytest.approx(0.75)


class TestCatalogFiles:
    def test_catalog_and_expert_csv(self, tmp_path):
        cat = tmp_path / "images.csv"
        cat.write_text(
            "media_id,source,lon,lat,year,image_url,validation\n"
            "m1,Catlin,150.0,-22.0,2004,http://x/m1.jpg,true\n"
            "m2,ReefCheck,150.1,-22.1,2005,http://x/m2.jpg,0\n")
        images = read_catalog_csv(cat)
        assert images[0].validation is True
        assert images[1].validation is False
        exp = tmp_path / "expert.csv"
        exp.write_text("media_id,point_id,label\nm1,0,coral\nm1,1,sand\n")
        labels = read_expert_labels_csv(exp)
        assert labels == {"m1": {0: "coral", 1: "sand"}}


def test_store_log_survives_restart(tmp_path):
    log = tmp_path / "classifications.log"
    catalog = [CatalogImage("val1", "Catlin", 150.1, -22.9, 2004, "u", True)]
    expert = {"val1": {0: "coral", 1: "algae"}}
    svc = ElicitationService(catalog, expert,
                             store=ClassificationStore(log_path=log),
                             n_points=2, seed=0)
    svc.points("val1", "alice")
    svc.classify([{"media_id": "val1", "point_id": 0, "label": "coral",
                   "user_id": "alice"},
                  {"media_id": "val1", "point_id": 1, "label": "algae",
                   "user_id": "alice"}])
    assert svc.accuracy("alice") == (1.0, 1)

    svc2 = ElicitationService(catalog, expert,
                              store=ClassificationStore(log_path=log),
                              n_points=2, seed=0)
    assert svc2.accuracy("alice") == (1.0, 1)
