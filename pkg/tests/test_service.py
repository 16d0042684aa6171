import json
import threading
import urllib.error
import urllib.request
from pathlib import Path

import pytest

from qintent.cache import CacheStore
from qintent.errors import CacheError, ConfigError
from qintent.pipeline import batch_run, pipeline_version
from qintent.service import IntentService, ServeConfig, serve

FIXTURES = Path(__file__).parent / "fixtures"

BATCH_QUERIES = ["wildflower", "better chew", "450 north", "pesto pasta", "taco townhouse"]


@pytest.fixture(scope="module")
def cache_path(tmp_path_factory, store, index, encoder, engine, search_tool, empty_whitelist):
    from qintent.pipeline import PipelineConfig, PipelineDeps
    from qintent.reasoner import PolicyContext

    deps = PipelineDeps(
        store=store, index=index, encoder=encoder, engine=engine, tool=search_tool,
        whitelist=empty_whitelist, policy=PolicyContext.empty(), config=PipelineConfig(),
    )
    path = tmp_path_factory.mktemp("svc") / "cache.db"
    with CacheStore(path, pipeline_version(deps), store.version) as cache:
        report = batch_run(BATCH_QUERIES, deps, cache)
        assert report.failed == 0
    return path


def _config(cache_path, **kwargs):
    defaults = dict(
        cache_path=str(cache_path),
        whitelist_path=str(FIXTURES / "whitelist_empty.json"),
        taxonomy_path=str(FIXTURES / "taxonomy.json"),
        host="127.0.0.1",
        port=0,
    )
    defaults.update(kwargs)
    return ServeConfig(**defaults)


@pytest.fixture()
def service(cache_path):
    svc = serve(_config(cache_path))
    yield svc
    svc.stop()


def _get(port, path):
    try:
        with urllib.request.urlopen(f"http://127.0.0.1:{port}{path}") as resp:
            return resp.status, json.loads(resp.read())
    except urllib.error.HTTPError as err:
        return err.code, json.loads(err.read())


def _post(port, path, body=None, headers=None):
    data = json.dumps(body or {}).encode()
    req = urllib.request.Request(
        f"http://127.0.0.1:{port}{path}", data=data,
        headers={"Content-Type": "application/json", **(headers or {})},
    )
    try:
        with urllib.request.urlopen(req) as resp:
            return resp.status, json.loads(resp.read())
    except urllib.error.HTTPError as err:
        return err.code, json.loads(err.read())


def test_intent_lookup_after_batch(service):
    status, body = _get(service.port, "/intent?q=wildflower")
    assert status == 200
    assert body["final_vertical"] == "restaurant"
    assert body["primary"] == "restaurant"
    assert body["secondary"] == "flower"
    assert body["rule_fired"] == "primary_default"
    assert body["schema"] == "intent-response-v1"
    assert body["miss"] is False


def test_intent_lookup_normalizes_query(service):
    status, body = _get(service.port, "/intent?q=%20WildFlower%20")
    assert status == 200
    assert body["query_key"] == "wildflower"
    assert body["final_vertical"] == "restaurant"


def test_intent_miss_default_policy(service):
    status, body = _get(service.port, "/intent?q=zzz-unknown")
    assert status == 200
    assert body["miss"] is True
    assert body["final_vertical"] == "restaurant"
    assert body["rule_fired"] == "miss_default"


def test_intent_miss_404_policy(cache_path):
    svc = serve(_config(cache_path, miss_policy="error_404"))
    try:
        status, body = _get(svc.port, "/intent?q=zzz-unknown")
        assert status == 404
        assert body["miss"] is True
    finally:
        svc.stop()


def test_intent_missing_param(service):
    status, body = _get(service.port, "/intent")
    assert status == 400


def test_healthz_reports_counts(service):
    status, body = _get(service.port, "/healthz")
    assert status == 200
    assert body["records"] == len(BATCH_QUERIES)
    assert body["whitelist_version"] == "w-empty"
    assert body["pipeline_version"]


def test_unknown_path_404(service):
    status, _ = _get(service.port, "/nope")
    assert status == 404


def test_whitelist_hot_reload_re_resolves(cache_path):
    svc = serve(_config(cache_path))
    try:
        # cached under the empty whitelist: (dish, grocery) resolves to dish
        status, before = _get(svc.port, "/intent?q=pesto%20pasta")
        assert before["final_vertical"] == "dish"
        assert before["rule_fired"] == "primary_default"
        status, reload_body = _post(
            svc.port, "/admin/reload-whitelist",
            {"path": str(FIXTURES / "whitelist_dish_grocery.json")},
        )
        assert status == 200
        assert reload_body["whitelist_version"] == "w-dish-grocery-1"
        # same cached tuple, new policy: secondary wins via serve-time re-resolution
        status, after = _get(svc.port, "/intent?q=pesto%20pasta")
        assert after["final_vertical"] == "grocery"
        assert after["rule_fired"] == "override"
        assert after["whitelist_version"] == "w-dish-grocery-1"
        # records without the pair are unaffected
        status, other = _get(svc.port, "/intent?q=wildflower")
        assert other["final_vertical"] == "restaurant"
    finally:
        svc.stop()


def test_reload_cache_roundtrip(service, cache_path):
    status, body = _post(service.port, "/admin/reload-cache")
    assert status == 200
    assert body["records"] == len(BATCH_QUERIES)
    status, health = _get(service.port, "/healthz")
    assert health["records"] == len(BATCH_QUERIES)


def test_reload_bad_path_is_400(service):
    status, body = _post(
        service.port, "/admin/reload-whitelist", {"path": "/does/not/exist.json"}
    )
    assert status == 400


def test_admin_token_enforced(cache_path):
    svc = serve(_config(cache_path, admin_token="sekrit"))
    try:
        status, _ = _post(svc.port, "/admin/reload-cache")
        assert status == 403
        status, _ = _post(svc.port, "/admin/reload-cache", headers={"X-Admin-Token": "sekrit"})
        assert status == 200
        # the read path never requires the token
        status, _ = _get(svc.port, "/intent?q=wildflower")
        assert status == 200
    finally:
        svc.stop()


def test_concurrent_identical_gets_identical(service):
    results = []
    lock = threading.Lock()

    def fetch():
        status, body = _get(service.port, "/intent?q=better%20chew")
        with lock:
            results.append((status, json.dumps(body, sort_keys=True)))

    threads = [threading.Thread(target=fetch) for _ in range(16)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(set(results)) == 1


def test_corrupt_cache_refuses_to_start(tmp_path):
    bad = tmp_path / "bad.db"
    bad.write_text("garbage header\n", encoding="utf-8")
    with pytest.raises(CacheError):
        IntentService(_config(bad))


def test_unknown_default_vertical_rejected(cache_path):
    with pytest.raises(ConfigError):
        IntentService(_config(cache_path, default_vertical="spaceport"))
