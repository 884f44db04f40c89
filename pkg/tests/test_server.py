# tests/test_server.py
from __future__ import annotations

from types import SimpleNamespace

import orjson
import pytest
from fastapi.testclient import TestClient

import server.routers.health as health_router
import server.routers.jobs as jobs_router
import server.services.jobs as job_services
from server.config import Settings
from server.main import create_app
from workers import run_eval_job, run_generate_job, run_train_job

KEY = {"X-API-Key": "k1"}


class _Queue:
    def __init__(self):
        self.calls = []

    def enqueue(self, fn, *args, **kwargs):
        self.calls.append((fn, args, kwargs))
        return SimpleNamespace(id=f"job-{len(self.calls)}")


class _Redis:
    def __init__(self):
        self.published = []
        self.keys = {}

    def publish(self, channel, data):
        self.published.append((channel, orjson.loads(data)))

    def setex(self, key, ttl, value):
        self.keys[key] = value

    def get(self, key):
        return self.keys.get(key)


@pytest.fixture
def env(tmp_path, monkeypatch):
    for name in ("DATA_DIR", "RUNS_DIR", "JOBS_DIR"):
        monkeypatch.setenv(name, str(tmp_path / name.lower()))
    monkeypatch.setenv("API_KEYS", "k1, k2")
    monkeypatch.setenv("ENABLE_PROMETHEUS", "false")
    return tmp_path


@pytest.fixture
def queue(monkeypatch) -> _Queue:
    q = _Queue()
    monkeypatch.setattr(jobs_router, "get_rq_queue", lambda cfg=None: q)
    return q


@pytest.fixture
def fake_redis(monkeypatch) -> _Redis:
    r = _Redis()
    monkeypatch.setattr(job_services, "get_redis", lambda cfg=None: r)
    return r


@pytest.fixture
def client(env, queue, fake_redis) -> TestClient:
    return TestClient(create_app())


def test_settings_split_keys(env):
    assert Settings().api_keys() == ["k1", "k2"]


class TestHealth:
    def test_healthz(self, client):
        r = client.get("/api/healthz")
        assert r.status_code == 200
        assert r.json()["ok"] is True

    def test_readyz_without_redis(self, client, monkeypatch):
        def broken(cfg=None):
            raise ConnectionError("no redis")

        monkeypatch.setattr(health_router, "get_redis", broken)
        assert client.get("/api/readyz").json() == {"ok": False, "redis": False}


class TestTasks:
    def test_list(self, client):
        tasks = client.get("/api/tasks").json()["tasks"]
        assert len(tasks) == 13
        assert tasks[0]["id"] == "cable-ring"

    def test_one(self, client):
        t = client.get("/api/tasks/block-notarget").json()["task"]
        assert t["n_rots"] == 24 and t["goal_conditioned"] is True

    def test_unknown(self, client):
        assert client.get("/api/tasks/cable-knot").status_code == 404


class TestJobs:
    def test_needs_api_key(self, client, queue):
        r = client.post("/api/jobs/generate", json={"task": "cable-ring"})
        assert r.status_code == 401
        r = client.post("/api/jobs/generate", json={"task": "cable-ring"}, headers={"X-API-Key": "nope"})
        assert r.status_code == 401
        assert not queue.calls

    def test_generate(self, client, queue):
        r = client.post("/api/jobs/generate", json={"task": "cable-ring", "count": 3}, headers=KEY)
        assert r.status_code == 200
        assert r.json() == {"ok": True, "job_id": "job-1", "stream": "/api/jobs/stream?job_id=job-1"}
        fn, args, kwargs = queue.calls[0]
        assert fn is run_generate_job
        assert args[0]["count"] == 3
        assert args[1]["JOBS_DIR"].endswith("jobs_dir")
        assert kwargs["description"] == "generate cable-ring"

    def test_generate_unknown_task(self, client, queue):
        r = client.post("/api/jobs/generate", json={"task": "cable-knot"}, headers=KEY)
        assert r.status_code == 400
        assert not queue.calls

    def test_generate_count_checked(self, client):
        assert client.post("/api/jobs/generate", json={"task": "cable-ring", "count": 0}, headers=KEY).status_code == 422

    def test_train(self, client, queue):
        body = {"config": {"task": "cable-ring", "iterations": 400, "snapshot_interval": 200}, "dataset_job": "job-0"}
        r = client.post("/api/jobs/train", json=body, headers=KEY)
        assert r.status_code == 200
        fn, args, _ = queue.calls[0]
        assert fn is run_train_job
        assert args[0] == {"config": {"task": "cable-ring", "iterations": "400", "snapshot_interval": "200"},
                           "dataset_job": "job-0"}

    @pytest.mark.parametrize(
        "body",
        [
            {"config": {"task": "cable-ring"}},
            {"config": {"task": "cable-ring", "iterations": 300, "snapshot_interval": 200}, "dataset_job": "j"},
            {"config": {"task": "cable-knot"}, "dataset_job": "j"},
        ],
    )
    def test_train_rejected(self, client, queue, body):
        assert client.post("/api/jobs/train", json=body, headers=KEY).status_code == 400
        assert not queue.calls

    def test_eval_needs_checkpoint(self, client):
        r = client.post("/api/jobs/eval", json={"task": "fabric-cover", "model": "transporter"}, headers=KEY)
        assert r.status_code == 400

    def test_eval_demonstrator(self, client, queue):
        r = client.post("/api/jobs/eval", json={"task": "fabric-cover", "model": "demonstrator", "episodes": 2}, headers=KEY)
        assert r.status_code == 200
        assert queue.calls[0][0] is run_eval_job

    def test_cancel(self, client, fake_redis):
        r = client.post("/api/jobs/cancel", json={"job_id": "job-9"}, headers=KEY)
        assert r.json() == {"ok": True, "cancelled": True}
        assert job_services.is_cancelled(Settings(), "job-9")


class TestExports:
    def test_list_and_download(self, client, env):
        art = env / "jobs_dir" / "job-1" / "artifacts"
        art.mkdir(parents=True)
        (art / "eval.json").write_text('{"ok": true}')
        items = client.get("/api/exports/job-1", headers=KEY).json()["artifacts"]
        assert items == [{"label": "eval.json", "href": "/api/exports/job-1/eval.json", "bytes": 12}]
        r = client.get("/api/exports/job-1/eval.json", headers=KEY)
        assert r.status_code == 200 and r.content == b'{"ok": true}'

    def test_unknown_job(self, client):
        assert client.get("/api/exports/job-404", headers=KEY).json() == {"ok": True, "artifacts": []}
        assert client.get("/api/exports/job-404/x.txt", headers=KEY).status_code == 404


class TestWorkers:
    def test_generate_job_publishes(self, env, fake_redis):
        stats = run_generate_job({"task": "fabric-cover", "count": 1, "seed": 0}, Settings().model_dump())
        assert stats["episodes"] == 1
        assert (env / "jobs_dir" / "local" / "artifacts" / "dataset").is_dir()
        events = [payload["event"] for channel, payload in fake_redis.published]
        assert {ch for ch, _ in fake_redis.published} == {"job:local:events"}
        assert events[-1] == "done"
        assert "artifact" in events

    def test_eval_job_failure_is_published(self, env, fake_redis):
        with pytest.raises(Exception):
            run_eval_job({"task": "fabric-cover", "checkpoint_job": "missing"}, Settings().model_dump())
        channel, payload = fake_redis.published[-1]
        assert payload["event"] == "failed"
        assert payload["data"]["kind"] == "FileNotFoundError"
