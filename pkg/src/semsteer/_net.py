"""Small shared HTTP helper: JSON POST with bounded exponential-backoff retries.

Transport-level failures (connection errors, timeouts, 5xx) are retried up to
the budget and then surface as :class:`TransportError`; anything that comes
back but violates the wire contract (4xx, non-JSON bodies) is a
:class:`ProtocolError` and is never retried.
"""

from __future__ import annotations

import logging
import os
import time
from typing import Any, Callable

import requests

from .domain import ProtocolError, TransportError

logger = logging.getLogger(__name__)

TOKEN_ENV = "SEMSTEER_API_TOKEN"


def post_json(
    url: str,
    payload: dict,
    *,
    timeout: float = 30.0,
    retries: int = 3,
    backoff: float = 0.25,
    session: requests.Session | None = None,
    sleeper: Callable[[float], None] = time.sleep,
    token: str | None = None,
) -> tuple[Any, int]:
    """POST ``payload`` to ``url`` and return ``(parsed_json, attempts_retried)``.

    :param retries: how many additional attempts are allowed after the first.
    :param backoff: initial sleep in seconds, doubled per retry.
    :param sleeper: injection point so tests do not actually sleep.
    """
    headers = {"Content-Type": "application/json"}
    token = token if token is not None else os.environ.get(TOKEN_ENV, "")
    if token:
        headers["Authorization"] = f"Bearer {token}"
    http = session if session is not None else requests
    last_err: Exception | None = None
    for attempt in range(retries + 1):
        if attempt:
            sleeper(backoff * (2 ** (attempt - 1)))
        try:
            resp = http.post(url, json=payload, headers=headers, timeout=timeout)
        except requests.RequestException as exc:
            last_err = exc
            logger.debug("transport failure on %s (attempt %d): %s", url, attempt, exc)
            continue
        if resp.status_code >= 500:
            last_err = TransportError(f"{url} answered {resp.status_code}")
            logger.debug("server failure on %s (attempt %d): %s", url, attempt, resp.status_code)
            continue
        if resp.status_code >= 400:
            raise ProtocolError(f"{url} rejected request: {resp.status_code} {resp.text[:200]}")
        try:
            return resp.json(), attempt
        except ValueError as exc:
            raise ProtocolError(f"{url} returned a non-JSON body") from exc
    raise TransportError(f"{url} unreachable after {retries} retries: {last_err}")
