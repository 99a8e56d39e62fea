import logging
import time
from collections.abc import Mapping
from pathlib import Path

import httpx

from ..config import LiveEndpoint
from ..errors import AuthError, RateLimited, TransportError
from .base import Oracle
from .prompts import Message
from .roles import OracleRole


log = logging.getLogger(__name__)


ATTEMPTS = 3


class LiveOracle(Oracle):
    """Chat-completion backend; every exchange is appended to the `record` transcript"""

    def __init__(
        self,
        endpoint: LiveEndpoint,
        record: Path | None = None,
        transport: httpx.BaseTransport | None = None,
        backoff: float = 1.0,
    ):
        super().__init__(record)
        self.endpoint = endpoint
        self.backoff = backoff
        self.client = httpx.Client(
            transport=transport,
            timeout=endpoint.timeout,
            headers={"Authorization": f"Bearer {endpoint.api_key}"},
        )

    @classmethod
    def shortname(cls) -> str:
        return "live"

    def close(self) -> None:
        self.client.close()

    def _post(self, payload: dict) -> dict:
        status = None
        for attempt in range(1, ATTEMPTS + 1):
            try:
                response = self.client.post(self.endpoint.url, json=payload)
            except httpx.TransportError as e:
                log.warning("Attempt %d/%d to %s failed: %s", attempt, ATTEMPTS, self.endpoint.url, e)
                status = None
            else:
                status = response.status_code
                if status in (401, 403):
                    raise AuthError(f"Endpoint rejected the credentials ({status})")
                if status < 400:
                    log.debug("Attempt %d/%d to %s succeeded", attempt, ATTEMPTS, self.endpoint.url)
                    return response.json()
                if status != 429 and status < 500:
                    raise TransportError(f"Endpoint answered {status}: {response.text[:200]}")
                log.warning("Attempt %d/%d to %s answered %d", attempt, ATTEMPTS, self.endpoint.url, status)
            if attempt < ATTEMPTS:
                time.sleep(self.backoff * 2 ** (attempt - 1))
        if status == 429:
            raise RateLimited(f"Rate limited by {self.endpoint.url} after {ATTEMPTS} attempts")
        raise TransportError(f"No answer from {self.endpoint.url} after {ATTEMPTS} attempts")

    def preflight(self) -> None:
        self._post({
            "model": self.endpoint.model,
            "temperature": self.endpoint.temperature,
            "max_tokens": 1,
            "messages": [{"role": "user", "content": "ping"}],
        })

    def conversation(self, messages: tuple[Message, ...]) -> list[Message]:
        """System prompt, then the latest compacted history turns, then the request"""
        turns = self.endpoint.history_turns
        history = self.session.history[-2 * turns:] if turns else []
        system = [m for m in messages if m.role == "system"]
        rest = [m for m in messages if m.role != "system"]
        return system + history + rest

    def _respond(self, role: OracleRole, messages: tuple[Message, ...], context: Mapping, seq: int) -> str:
        data = self._post({
            "model": self.endpoint.model,
            "temperature": self.endpoint.temperature,
            "messages": [m.to_dict() for m in self.conversation(messages)],
        })
        try:
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise TransportError(f"Malformed chat completion for request #{seq}") from None
