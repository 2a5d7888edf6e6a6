import numpy as np
import pytest
import requests

import doc2eg.api as api

TEST_ENDPOINT = "http://example.com/v1/"


@pytest.fixture()
def chat():
    return api.ChatCompletionClient(
        endpoint=TEST_ENDPOINT, model="test-model", api_key="secret"
    )


@pytest.fixture()
def embeddings():
    return api.EmbeddingClient(endpoint="http://example.com/v1", model="embedder")


def test_api_key_becomes_bearer_header(chat):
    assert chat.api.headers["Authorization"] == "Bearer secret"


def test_no_api_key_no_authorization_header():
    client = api.ChatCompletionClient(endpoint=TEST_ENDPOINT, model="m")

    assert "Authorization" not in client.api.headers


def test_endpoint_and_model_are_required():
    with pytest.raises(ValueError):
        api.ChatCompletionClient(endpoint="", model="m")
    with pytest.raises(ValueError):
        api.ChatCompletionClient(endpoint=TEST_ENDPOINT, model=None)


def test_complete_sends_history_and_sampling(chat, requests_mock):
    requests_mock.post(
        TEST_ENDPOINT + "chat/completions",
        json={"choices": [{"message": {"role": "assistant", "content": "(1) yes"}}]},
    )

    content = chat.complete(
        "which other sentences?",
        temperature=0.0,
        top_p=0.9,
        max_tokens=1024,
        history=[("first prompt", "first answer")],
    )

    assert content == "(1) yes"
    sent = requests_mock.last_request.json()
    assert sent == {
        "model": "test-model",
        "messages": [
            {"role": "user", "content": "first prompt"},
            {"role": "assistant", "content": "first answer"},
            {"role": "user", "content": "which other sentences?"},
        ],
        "temperature": 0.0,
        "top_p": 0.9,
        "max_tokens": 1024,
    }


def test_complete_http_error_is_provider_response_error(chat, requests_mock):
    requests_mock.post(
        TEST_ENDPOINT + "chat/completions",
        status_code=400,
        json={"error": {"message": "context length exceeded"}},
    )

    with pytest.raises(api.ProviderResponseError) as excinfo:
        chat.complete("prompt", 0.5, 0.9, 10)

    assert excinfo.value.status_code == 400
    assert "context length exceeded" in str(excinfo.value)


def test_complete_error_payload_with_200_status(chat, requests_mock):
    requests_mock.post(
        TEST_ENDPOINT + "chat/completions", json={"error": "model overloaded"}
    )

    with pytest.raises(api.ProviderResponseError, match="model overloaded"):
        chat.complete("prompt", 0.5, 0.9, 10)


def test_complete_missing_choices(chat, requests_mock):
    requests_mock.post(TEST_ENDPOINT + "chat/completions", json={"choices": []})

    with pytest.raises(api.ProviderResponseError):
        chat.complete("prompt", 0.5, 0.9, 10)


def test_complete_timeout(chat, requests_mock):
    requests_mock.post(
        TEST_ENDPOINT + "chat/completions", exc=requests.exceptions.ReadTimeout
    )

    with pytest.raises(api.ProviderTimeout):
        chat.complete("prompt", 0.5, 0.9, 10)


def test_complete_connection_error(chat, requests_mock):
    requests_mock.post(
        TEST_ENDPOINT + "chat/completions", exc=requests.exceptions.ConnectionError
    )

    with pytest.raises(api.TransportError):
        chat.complete("prompt", 0.5, 0.9, 10)


def test_provider_errors_share_a_base_class():
    for error in (
        api.TransportError,
        api.ProviderResponseError,
        api.ProviderTimeout,
        api.FixtureMissingError,
    ):
        assert issubclass(error, api.ProviderError)


def test_embed_orders_vectors_by_index(embeddings, requests_mock):
    requests_mock.post(
        "http://example.com/v1/embeddings",
        json={
            "data": [
                {"index": 1, "embedding": [0.0, 1.0]},
                {"index": 0, "embedding": [1.0, 0.0]},
            ]
        },
    )

    vectors = embeddings.embed(["first", "second"])

    assert requests_mock.last_request.json() == {
        "model": "embedder",
        "input": ["first", "second"],
    }
    np.testing.assert_array_equal(vectors[0], [1.0, 0.0])
    np.testing.assert_array_equal(vectors[1], [0.0, 1.0])


def test_embed_count_mismatch(embeddings, requests_mock):
    requests_mock.post(
        "http://example.com/v1/embeddings",
        json={"data": [{"index": 0, "embedding": [1.0]}]},
    )

    with pytest.raises(api.ProviderResponseError):
        embeddings.embed(["first", "second"])


def test_retries_are_configured_on_the_session(chat):
    retry = chat.api.get_adapter(TEST_ENDPOINT).max_retries

    assert retry.total == 3
    assert 429 in retry.status_forcelist
