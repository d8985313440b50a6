import json
import socket
import subprocess
import sys
import time
import urllib.error
import urllib.request

import pytest

from dynodist.envs import make_env
from dynodist.server import serve
from dynodist.trainer import TrainerConfig


def serve_config(**over):
    base = dict(env="smaze9", method="DDLfP", horizon_T=50,
                total_env_steps=5000, slate_size=3,
                query_interval_env_steps=400, query_budget=10,
                query_timeout_seconds=15.0, seed=0)
    base.update(over)
    return TrainerConfig(**base)


def get(base, path):
    try:
        with urllib.request.urlopen(base + path, timeout=10) as r:
            body = r.read()
            return r.status, (json.loads(body) if body else None)
    except urllib.error.HTTPError as exc:
        return exc.code, None


def post(base, payload):
    req = urllib.request.Request(base + "/respond",
                                 data=json.dumps(payload).encode(),
                                 headers={"Content-Type": "application/json"},
                                 method="POST")
    try:
        with urllib.request.urlopen(req, timeout=10) as r:
            return r.status
    except urllib.error.HTTPError as exc:
        return exc.code


def wait_for_query(base, deadline=60.0):
    end = time.time() + deadline
    while time.time() < end:
        code, payload = get(base, "/query")
        if code == 200:
            return payload
        assert code == 204
        time.sleep(0.02)
    raise AssertionError("no query appeared in time")


def test_protocol_ten_full_cycles():
    env = make_env("smaze9", horizon_T=50)
    handle = serve(env, serve_config(), port=0, block=False)
    base = f"http://127.0.0.1:{handle.port}"
    try:
        goals_seen = []
        for cycle in range(10):
            payload = wait_for_query(base)
            qid = payload["query_id"]
            assert [c["index"] for c in payload["candidates"]] == [0, 1, 2]
            grid = payload["candidates"][0]["grid_render"]
            assert len(grid) == 9 and len(grid[0]) == 9
            assert (payload["previous_goal"] is None) == (cycle == 0)

            assert post(base, {"query_id": qid, "choice_index": 42}) == 400
            assert post(base, {"query_id": qid + 1000, "choice_index": 0}) == 409
            if cycle == 0:
                # no previous goal yet: the keep index is out of range
                assert post(base, {"query_id": qid, "choice_index": 3}) == 400
            assert post(base, {"query_id": qid, "choice_index": 1}) == 200
            # exactly-once: a second answer to the same query is stale
            assert post(base, {"query_id": qid, "choice_index": 0}) == 409

            code, status = get(base, "/status")
            assert code == 200
            goals_seen.append(status["current_goal"])
        assert handle.wait(120)
        assert handle.error is None, handle.error
        result = handle.result
        assert len(result.queries) == 10
        # exactly-once goal updates: the final goal is the accepted answer
        # (candidate index 1) of the last query, none of the stale retries
        assert result.goal is not None
        assert result.goal.state == result.queries[-1].candidates[1]
    finally:
        handle.shutdown()


def test_keep_previous_every_time_freezes_first_choice():
    env = make_env("smaze9", horizon_T=50)
    cfg = serve_config(query_budget=5, total_env_steps=2500,
                       query_interval_env_steps=400)
    handle = serve(env, cfg, port=0, block=False)
    base = f"http://127.0.0.1:{handle.port}"
    try:
        first = wait_for_query(base)
        assert post(base, {"query_id": first["query_id"], "choice_index": 0}) == 200
        for _ in range(4):
            payload = wait_for_query(base)
            keep = len(payload["candidates"])
            assert post(base, {"query_id": payload["query_id"],
                               "choice_index": keep}) == 200
        assert handle.wait(60)
        result = handle.result
        assert result.goal.state == result.queries[0].candidates[0]
    finally:
        handle.shutdown()


def test_status_endpoint_shape():
    env = make_env("smaze9", horizon_T=50)
    cfg = serve_config(query_budget=1, total_env_steps=1200,
                       query_interval_env_steps=600)
    handle = serve(env, cfg, port=0, block=False)
    base = f"http://127.0.0.1:{handle.port}"
    try:
        payload = wait_for_query(base)
        code, status = get(base, "/status")
        assert code == 200
        assert set(status) == {"env_steps", "episode", "current_goal",
                               "queries_used", "curve"}
        assert isinstance(status["curve"], list)
        assert post(base, {"query_id": payload["query_id"], "choice_index": 0}) == 200
        assert handle.wait(60)
    finally:
        handle.shutdown()


def test_unanswered_queries_time_out_and_run_completes():
    env = make_env("smaze9", horizon_T=50)
    cfg = serve_config(query_timeout_seconds=0.05, total_env_steps=2000,
                       query_interval_env_steps=400, query_budget=4)
    handle = serve(env, cfg, port=0, block=False)
    try:
        assert handle.wait(60)
        assert handle.error is None, handle.error
        result = handle.result
        assert result.episodes == 2000 // 50
        assert len(result.queries) == 4  # all issued, all timed out
        assert result.goal is None       # nothing ever chosen
    finally:
        handle.shutdown()


def test_malformed_body_is_400():
    env = make_env("smaze9", horizon_T=50)
    cfg = serve_config(query_budget=1, total_env_steps=800,
                       query_interval_env_steps=400)
    handle = serve(env, cfg, port=0, block=False)
    base = f"http://127.0.0.1:{handle.port}"
    try:
        payload = wait_for_query(base)
        req = urllib.request.Request(base + "/respond", data=b"not json",
                                     method="POST")
        with pytest.raises(urllib.error.HTTPError) as err:
            urllib.request.urlopen(req, timeout=10)
        assert err.value.code == 400
        assert post(base, {"query_id": payload["query_id"], "choice_index": 0}) == 200
        assert handle.wait(60)
    finally:
        handle.shutdown()


def test_serve_cli_port_in_use_exits_one(tmp_path):
    blocker = socket.socket()
    blocker.bind(("127.0.0.1", 0))
    port = blocker.getsockname()[1]
    try:
        res = subprocess.run(
            [sys.executable, "-m", "dynodist", "serve",
             "--set", "env=smaze9", "--set", "method=DDLfP",
             "--set", "total_env_steps=500",
             "--port", str(port), "--out", str(tmp_path / "s")],
            capture_output=True, text=True, timeout=60)
        assert res.returncode == 1
        assert "port" in res.stderr.lower()
    finally:
        blocker.close()


def test_serve_requires_ddlfp():
    env = make_env("smaze9", horizon_T=50)
    with pytest.raises(ValueError, match="DDLfP"):
        serve(env, serve_config(method="FixedGoal", fixed_goal_state="hint"),
              port=0, block=False)
