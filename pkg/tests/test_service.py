"""HTTP API contracts exercised through the in-process test client."""

import pytest
from fastapi.testclient import TestClient

from gmtlsim.graphs import save_dataset
from gmtlsim.service import app
from gmtlsim.synthdata import synthetic_classification_dataset


@pytest.fixture(scope="module")
def client():
    return TestClient(app)


@pytest.fixture(scope="module")
def dataset_file(tmp_path_factory):
    manifest, samples = synthetic_classification_dataset(36, 3, 4, seed=12)
    path = tmp_path_factory.mktemp("data") / "synth.json"
    save_dataset(manifest, samples, path)
    return str(path)


SMALL = {
    "rounds": 2,
    "eta": 0.01,
    "model": {"hidden_dim": 8, "node_dim": 8, "pool_dim": 8, "dropout": 0.0},
    "partition": {"clients": 3, "alpha": 0.5, "seed": 0},
}


class TestHealth:
    def test_health(self, client):
        body = client.get("/health").json()
        assert body["status"] == "ok"


class TestSimulate:
    def test_run_from_dataset_path(self, client, dataset_file):
        response = client.post("/simulate", json={
            "config": SMALL, "dataset_path": dataset_file,
        })
        assert response.status_code == 200
        body = response.json()
        assert not body["failed"]
        assert body["runs"][0]["metrics_csv"].startswith("round,client,")
        assert body["summary"]["dataset"]["num_tasks"] == 3

    def test_run_from_inline_dataset(self, client):
        manifest, samples = synthetic_classification_dataset(24, 2, 4, seed=3)
        inline = {
            "manifest": {
                "name": manifest.name, "task_type": manifest.task_type,
                "num_tasks": manifest.num_tasks, "d_input": manifest.d_input,
                "d_edge": manifest.d_edge, "metric": manifest.metric,
            },
            "samples": [
                {
                    "nodes": s.node_features.tolist(),
                    "edges": [list(e) for e in s.edges],
                    "edge_feats": s.edge_features.tolist(),
                    "label": s.label.tolist(),
                    "mask": [bool(b) for b in s.label_mask],
                }
                for s in samples
            ],
        }
        cfg = dict(SMALL, partition={"clients": 2, "alpha": 0.5, "seed": 0})
        response = client.post("/simulate", json={"config": cfg, "dataset": inline})
        assert response.status_code == 200
        assert not response.json()["failed"]

    def test_missing_dataset_is_a_client_error(self, client):
        response = client.post("/simulate", json={"config": SMALL})
        assert response.status_code == 400
        assert "dataset" in response.json()["detail"]

    def test_bad_config_is_a_client_error(self, client, dataset_file):
        response = client.post("/simulate", json={
            "config": {"tau": 0}, "dataset_path": dataset_file,
        })
        assert response.status_code == 400

    def test_overrides_are_applied(self, client, dataset_file):
        response = client.post("/simulate", json={
            "config": SMALL,
            "dataset_path": dataset_file,
            "overrides": {"algorithm": "isolated"},
        })
        body = response.json()
        assert body["runs"][0]["algorithm"] == "isolated"


class TestBounds:
    def test_worked_example(self, client):
        response = client.post("/bounds", json={
            "eta": 0.1, "L": 1.0, "tau": 5, "zeta": 1 / 3, "sigma_sq": 1.0,
            "K": 8, "T": 100, "f_init": 1.0,
        })
        body = response.json()
        assert response.status_code == 200
        assert body["bound"] > 0
        assert body["lr_condition_lhs"] > 0

    def test_zeta_one_reports_unbounded(self, client):
        response = client.post("/bounds", json={
            "eta": 0.1, "L": 1.0, "tau": 5, "zeta": 1.0, "sigma_sq": 1.0,
            "K": 8, "T": 100,
        })
        body = response.json()
        assert body["bound"] is None
        assert not body["feasible"]


class TestTopologyInspect:
    def test_complete_gap_is_zero(self, client):
        body = client.post("/topology/inspect", json={"kind": "complete", "K": 8}).json()
        assert abs(body["zeta"]) < 1e-12
        assert body["connected"]

    def test_ring_c4_uniform(self, client):
        body = client.post("/topology/inspect", json={
            "kind": "ring", "K": 4, "n_neighbors": 2, "uniform_weights": True,
        }).json()
        assert abs(body["zeta"] - 1 / 3) < 1e-10

    def test_bad_kind_is_a_client_error(self, client):
        response = client.post("/topology/inspect", json={"kind": "torus", "K": 4})
        assert response.status_code == 400
