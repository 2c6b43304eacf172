from unittest.mock import MagicMock, patch

import numpy as np
import pytest
import requests

from app.core.embeddings import (
    EmbeddingConfig,
    HashingEmbeddingProvider,
    RemoteEmbeddingProvider,
    build_provider,
    cosine_similarity,
    embed,
    fnv1a_64,
    tokenize,
)
from app.core.errors import IncompatibleVectorsError, ProviderUnavailableError


class TestHashingProvider:
    def test_fnv1a_reference_values(self):
        assert fnv1a_64(b"") == 0xCBF29CE484222325
        assert fnv1a_64(b"a") == 0xAF63DC4C8601EC8C

    def test_tokenize_lowercases_and_splits_names(self):
        assert tokenize("Move_to_Shelf, please!") == ["move", "to", "shelf", "please"]

    def test_deterministic(self, provider):
        assert embed("Move to shelf one", provider) == embed("Move to shelf one", provider)
        assert embed("Move to shelf one", provider) == HashingEmbeddingProvider().embed_text("Move to shelf one")

    def test_unit_norm(self, provider):
        vector = embed("Identify the vacancy in shelf one", provider)
        assert vector.normalized
        assert vector.norm == pytest.approx(1.0, abs=1e-9)

    def test_empty_text_is_degenerate(self, provider):
        vector = embed("", provider)
        assert vector.degenerate
        assert cosine_similarity(vector, embed("anything", provider)) == 0.0

    def test_self_similarity(self, provider):
        vector = embed("switch band", provider)
        assert cosine_similarity(vector, vector) == pytest.approx(1.0)

    def test_word_order_does_not_matter(self, provider):
        a = embed("shelf one move", provider)
        b = embed("move shelf one", provider)
        assert cosine_similarity(a, b) == pytest.approx(1.0)

    def test_vectors_are_read_only(self, provider):
        vector = embed("move", provider)
        with pytest.raises(ValueError):
            vector.values[0] = 1.0

    def test_dimension_mismatch(self, provider):
        other = HashingEmbeddingProvider(dim=64)
        with pytest.raises(IncompatibleVectorsError):
            cosine_similarity(embed("move", provider), embed("move", other))

    def test_invalid_dimension(self):
        with pytest.raises(ValueError):
            HashingEmbeddingProvider(dim=0)


class TestRemoteProvider:
    @patch("app.core.embeddings.requests.post")
    def test_vectors_normalized(self, mock_post):
        mock_post.return_value = MagicMock(
            json=MagicMock(return_value={"vectors": [[3.0, 4.0, 0.0]]}),
            raise_for_status=MagicMock(),
        )
        provider = RemoteEmbeddingProvider("http://encoder/embed", dim=3)

        [vector] = provider.embed_many(["hello"])

        np.testing.assert_allclose(vector.values, [0.6, 0.8, 0.0])
        mock_post.assert_called_once_with("http://encoder/embed", json={"texts": ["hello"]}, timeout=10.0)

    @patch("app.core.embeddings.requests.post")
    def test_network_failure(self, mock_post):
        mock_post.side_effect = requests.ConnectionError("refused")
        with pytest.raises(ProviderUnavailableError):
            RemoteEmbeddingProvider("http://encoder/embed", dim=3).embed_many(["hello"])

    @patch("app.core.embeddings.requests.post")
    def test_wrong_dimension(self, mock_post):
        mock_post.return_value = MagicMock(json=MagicMock(return_value={"vectors": [[1.0, 0.0]]}))
        with pytest.raises(IncompatibleVectorsError):
            RemoteEmbeddingProvider("http://encoder/embed", dim=3).embed_many(["hello"])

    def test_remote_config_needs_url(self):
        with pytest.raises(ProviderUnavailableError):
            build_provider(EmbeddingConfig(kind="remote", dim=3))

    def test_default_config_is_hashing(self):
        assert build_provider().provider_id == "fnv1a-hashing-256"
