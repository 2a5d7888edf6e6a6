from typing import Dict, List, Optional, Sequence
from urllib.parse import urljoin

import numpy as np
import requests
import requests.adapters
import requests.packages
import urllib3


class ProviderError(RuntimeError):
    pass


class TransportError(ProviderError):
    """The request could not be delivered, even after retrying."""


class ProviderResponseError(ProviderError):
    """The provider answered with an error payload or an unusable body."""

    def __init__(self, message, status_code=None, payload=None):
        super().__init__(message)
        self.status_code = status_code
        self.payload = payload


class ProviderTimeout(ProviderError):
    pass


class FixtureMissingError(ProviderError):
    pass


def bunchify(obj):
    if isinstance(obj, (list, tuple)):
        return [bunchify(item) for item in obj]
    if isinstance(obj, dict):
        return Bunch(obj)
    return obj


class Bunch(dict):
    def __init__(self, kwargs=None):
        if kwargs is None:
            kwargs = {}
        for key, value in kwargs.items():
            kwargs[key] = bunchify(value)
        super(Bunch, self).__init__(kwargs)
        self.__dict__ = self


RETRY_STATUS_CODES = (408, 429, 500, 502, 503, 504)


class MinimalProviderClient:
    """
    JSON-over-HTTP access to an OpenAI-style completion/embedding server.

    Transient failures (connection errors and the status codes in
    RETRY_STATUS_CODES) are retried by urllib3 with exponential backoff.
    """

    def __init__(
        self,
        endpoint,
        model,
        api_key=None,
        verify=True,
        max_retries=3,
        backoff_factor=1.0,
        timeout=120.0,
    ):
        if not endpoint:
            raise ValueError("A provider endpoint is required")
        if not model:
            raise ValueError("A model name is required")

        if not endpoint.endswith("/"):
            self.endpoint = endpoint + "/"
        else:
            self.endpoint = endpoint
        self.model = model
        self.timeout = timeout
        self.api = requests.Session()
        self.api.verify = verify
        self.api.headers.update({"Content-Type": "application/json"})

        if api_key is not None:
            self.api.headers.update({"Authorization": f"Bearer {api_key}"})

        adapter = requests.adapters.HTTPAdapter(
            max_retries=urllib3.Retry(
                total=max_retries,
                backoff_factor=backoff_factor,
                status_forcelist=RETRY_STATUS_CODES,
                respect_retry_after_header=True,
                allowed_methods=None,
            )
        )
        self.api.mount("http://", adapter)
        self.api.mount("https://", adapter)

        if not verify:
            requests.packages.urllib3.disable_warnings(
                requests.packages.urllib3.exceptions.InsecureRequestWarning
            )

    def _post(self, path, payload):
        try:
            r = self.api.post(
                urljoin(self.endpoint, path), json=payload, timeout=self.timeout
            )
        except requests.exceptions.Timeout as e:
            raise ProviderTimeout(f"{path}: no answer within {self.timeout}s") from e
        except (
            requests.exceptions.ConnectionError,
            requests.exceptions.RetryError,
        ) as e:
            raise TransportError(f"{path}: {e}") from e

        try:
            body = r.json()
        except ValueError:
            body = None

        if not r.ok:
            raise ProviderResponseError(
                f"{path}: HTTP {r.status_code} - "
                f"{_error_message(body) or r.text[:200]}",
                status_code=r.status_code,
                payload=body,
            )
        if not isinstance(body, dict):
            raise ProviderResponseError(
                f"{path}: response is not a JSON object", status_code=r.status_code
            )
        if body.get("error"):
            raise ProviderResponseError(
                f"{path}: {_error_message(body)}",
                status_code=r.status_code,
                payload=body,
            )
        return bunchify(body)


def _error_message(body) -> Optional[str]:
    if not isinstance(body, dict) or "error" not in body:
        return None
    error = body["error"]
    if isinstance(error, dict):
        return str(error.get("message") or error)
    return str(error)


class ChatCompletionClient(MinimalProviderClient):
    def complete(
        self,
        prompt: str,
        temperature: float,
        top_p: float,
        max_tokens: int,
        history: Sequence = (),
    ) -> str:
        """
        Send one chat completion request.

        Args:
            prompt (str): the user message for this turn
            temperature (float): sampling temperature
            top_p (float): nucleus sampling mass
            max_tokens (int): completion budget
            history (sequence of (str, str)): earlier (prompt, response) turns
              of the same conversation

        Returns:
            The text of the first choice

        """
        messages: List[Dict[str, str]] = list()
        for previous_prompt, previous_response in history:
            messages.append({"role": "user", "content": previous_prompt})
            messages.append({"role": "assistant", "content": previous_response})
        messages.append({"role": "user", "content": prompt})

        response = self._post(
            "chat/completions",
            {
                "model": self.model,
                "messages": messages,
                "temperature": temperature,
                "top_p": top_p,
                "max_tokens": max_tokens,
            },
        )
        try:
            content = response.choices[0].message.content
        except (AttributeError, IndexError, KeyError) as e:
            raise ProviderResponseError(
                "chat/completions: no message in response", payload=response
            ) from e
        if content is None:
            raise ProviderResponseError(
                "chat/completions: empty message content", payload=response
            )
        return content


class EmbeddingClient(MinimalProviderClient):
    def embed(self, texts: Sequence[str]) -> List[np.ndarray]:
        response = self._post("embeddings", {"model": self.model, "input": list(texts)})
        try:
            items = sorted(response.data, key=lambda item: item.get("index", 0))
            vectors = [np.asarray(item.embedding, dtype=float) for item in items]
        except (AttributeError, KeyError, TypeError) as e:
            raise ProviderResponseError(
                "embeddings: malformed response", payload=response
            ) from e
        if len(vectors) != len(texts):
            raise ProviderResponseError(
                f"embeddings: asked for {len(texts)} vectors, got {len(vectors)}",
                payload=response,
            )
        return vectors
