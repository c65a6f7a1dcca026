import json

import numpy as np
import pytest

from autokg.embedding import (
    CachingEmbedder,
    EmbeddingCache,
    EmbeddingProviderConfig,
    OfflineHashEmbedder,
    RemoteEmbeddingProvider,
    embed_batch,
    offline_hash_embed,
)
from autokg.errors import ParameterError, ProtocolError, ProviderError
from autokg.simgraph import angle

# offline_hash_embed("x", 16): the padded text has exactly one 3-gram,
# landing with negative sign in bucket 14. Frozen as the determinism oracle.
FROZEN_X16 = np.zeros(16)
FROZEN_X16[14] = -1.0


class TestOfflineHash:
    def test_deterministic(self):
        a = offline_hash_embed("abc", 32)
        b = offline_hash_embed("abc", 32)
        assert np.array_equal(a, b)

    def test_frozen_single_gram_vector(self):
        assert np.array_equal(offline_hash_embed("x", 16), FROZEN_X16)

    def test_distinct_texts_distinct_unit_vectors(self):
        a = offline_hash_embed("abc", 64)
        b = offline_hash_embed("abd", 64)
        assert not np.array_equal(a, b)
        assert np.linalg.norm(a) == pytest.approx(1.0, abs=1e-12)
        assert np.linalg.norm(b) == pytest.approx(1.0, abs=1e-12)

    def test_trailing_space_changes_angle(self):
        theta = angle(offline_hash_embed("alpha", 64), offline_hash_embed("alpha ", 64))
        assert theta > 1e-6

    def test_different_dimensions_both_unit(self):
        for d in (16, 32):
            v = offline_hash_embed("same text", d)
            assert v.shape == (d,)
            assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-9)

    def test_short_text_padded_not_error(self):
        for text in ("", "a", "ab"):
            v = offline_hash_embed(text, 8)
            assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-9)

    def test_unit_norm_property(self, rng):
        for _ in range(50):
            length = int(rng.integers(0, 40))
            text = "".join(chr(int(c)) for c in rng.integers(32, 127, size=length))
            v = offline_hash_embed(text, 24)
            assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-9)

    def test_dimension_floor(self):
        with pytest.raises(ParameterError):
            offline_hash_embed("x", 1)


class CountingProvider:
    provider_kind = "offline-hash"
    model_name = "counting"
    dimension = 8

    def __init__(self):
        self.calls = 0

    def embed_batch(self, texts):
        self.calls += len(texts)
        return [offline_hash_embed(t, self.dimension) for t in texts]


class TestCache:
    def test_repeat_batch_hits_cache(self):
        provider = CountingProvider()
        embedder = CachingEmbedder(provider)
        first = embedder.embed_batch(["a", "b"])
        second = embedder.embed_batch(["a", "b"])
        assert provider.calls == 2
        for x, y in zip(first, second):
            assert np.array_equal(x, y)

    def test_cache_file_round_trip(self, tmp_path):
        path = tmp_path / "cache.jsonl"
        provider = CountingProvider()
        CachingEmbedder(provider, EmbeddingCache(path)).embed_batch(["hello", "there"])
        assert provider.calls == 2

        fresh_provider = CountingProvider()
        fresh = CachingEmbedder(fresh_provider, EmbeddingCache(path))
        fresh.embed_batch(["hello", "there"])
        assert fresh_provider.calls == 0

        records = [json.loads(line) for line in path.read_text().splitlines()]
        assert {"content_hash", "model_name", "vector"} <= set(records[0])

    def test_batch_companions_do_not_matter(self):
        embedder = OfflineHashEmbedder(16)
        alone = embedder.embed_batch(["target"])[0]
        crowded = embedder.embed_batch(["aaa", "target", "zzz"])[1]
        assert np.array_equal(alone, crowded)


class FakeResponse:
    def __init__(self, payload, status_code=200):
        self._payload = payload
        self.status_code = status_code

    def json(self):
        return self._payload


class FakeSession:
    """Echoes deterministic embeddings in scrambled index order."""

    def __init__(self, dimension=8, fail_times=0, status_code=200):
        self.dimension = dimension
        self.fail_times = fail_times
        self.status_code = status_code
        self.requests = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.requests.append(json)
        if self.fail_times > 0:
            self.fail_times -= 1
            raise ConnectionError("transport down")
        texts = json["input"]
        data = [
            {"index": i, "embedding": offline_hash_embed(t, self.dimension).tolist()}
            for i, t in enumerate(texts)
        ]
        return FakeResponse({"data": list(reversed(data))}, status_code=self.status_code)


def _remote_config(dimension=8, **kw):
    return EmbeddingProviderConfig(
        provider_kind="remote", endpoint_url="http://localhost/embed",
        model_name="fake", dimension=dimension, max_retries=1,
        retry_backoff_s=0.0, **kw)


class TestRemoteProvider:
    def test_order_alignment(self):
        provider = RemoteEmbeddingProvider(_remote_config(), session=FakeSession())
        vectors = provider.embed_batch(["first", "second", "third"])
        assert np.array_equal(vectors[0], offline_hash_embed("first", 8))
        assert np.array_equal(vectors[2], offline_hash_embed("third", 8))

    def test_dimension_mismatch_is_protocol_error(self):
        provider = RemoteEmbeddingProvider(_remote_config(dimension=1536),
                                           session=FakeSession(dimension=8))
        with pytest.raises(ProtocolError):
            provider.embed_batch(["abc"])

    def test_transport_failure_carries_indices(self):
        session = FakeSession(fail_times=10)
        provider = RemoteEmbeddingProvider(_remote_config(batch_size=2), session=session)
        with pytest.raises(ProviderError) as err:
            provider.embed_batch(["a", "b", "c"])
        assert set(err.value.failed_indices) <= {0, 1, 2}
        assert err.value.failed_indices

    def test_retry_then_success(self):
        session = FakeSession(fail_times=1)
        provider = RemoteEmbeddingProvider(_remote_config(), session=session)
        assert len(provider.embed_batch(["a"])) == 1

    def test_http_error_status_retried_then_fails(self):
        session = FakeSession(status_code=500)
        provider = RemoteEmbeddingProvider(_remote_config(), session=session)
        with pytest.raises(ProviderError):
            provider.embed_batch(["a"])

    def test_api_key_header(self, monkeypatch):
        monkeypatch.setenv("AUTOKG_API_KEY", "secret-key")

        class HeaderCheck(FakeSession):
            def post(self, url, json=None, headers=None, timeout=None):
                assert headers["Authorization"] == "Bearer secret-key"
                return super().post(url, json=json, headers=headers, timeout=timeout)

        provider = RemoteEmbeddingProvider(_remote_config(), session=HeaderCheck())
        provider.embed_batch(["a"])


class TestEmbedBatch:
    def test_offline_path(self):
        config = EmbeddingProviderConfig(provider_kind="offline-hash", dimension=16)
        out = embed_batch(["abc", "abc"], config)
        assert np.array_equal(out[0], out[1])

    def test_empty_text_rejected(self):
        config = EmbeddingProviderConfig(provider_kind="offline-hash", dimension=16)
        with pytest.raises(ParameterError):
            embed_batch(["ok", ""], config)
