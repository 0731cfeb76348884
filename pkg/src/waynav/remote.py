"""HTTP JSON client that lets a remote model server stand in for the oracle backends.

Wire format, one POST per decision::

    request  {"role": "lang"|"vis", "text_blocks": [...], "images": [<base64 PNG>...], "metadata": {...}}
    response {"text": "<raw decision text>"}

The auth token, when set, is read from ``WAYNAV_API_TOKEN`` and sent as a bearer header.
"""

from __future__ import annotations

import json
import os
import socket
import time
import urllib.error
import urllib.parse
import urllib.request
from dataclasses import dataclass, field
from typing import Callable, Optional

from .agent.prompts import PromptPayload
from .errors import BackendError

TOKEN_ENV = "WAYNAV_API_TOKEN"
BACKOFF = (1.0, 4.0, 16.0)


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    lang_path: str = "/lang"
    vis_path: str = "/vis"
    timeout: float = 180.0
    max_retries: int = 3
    token: Optional[str] = field(default=None, repr=False)

    def __post_init__(self):
        if not self.timeout > 0:
            raise ValueError("timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be non-negative")
        scheme = urllib.parse.urlparse(self.base_url).scheme
        if scheme not in ("http", "https"):
            raise ValueError(f"endpoint must be an http(s) URL, got {self.base_url!r}")
        if self.token is None:
            object.__setattr__(self, "token", os.environ.get(TOKEN_ENV) or None)

    def url(self, role: str) -> str:
        path = {"lang": self.lang_path, "vis": self.vis_path}[role]
        return self.base_url.rstrip("/") + "/" + path.lstrip("/")


def _backoff(attempt: int) -> float:
    return BACKOFF[min(attempt, len(BACKOFF) - 1)]


def remote_decide(config: EndpointConfig, role: str, payload: PromptPayload, *,
                  sleep: Callable[[float], None] = time.sleep,
                  log: Optional[Callable[..., None]] = None) -> str:
    """POST one decision request and return the response text.

    Timeouts, connection failures and 5xx replies are retried up to
    ``config.max_retries`` times. 4xx replies and undecodable bodies fail at once.
    """
    if role not in ("lang", "vis"):
        raise ValueError(f"role must be lang or vis, got {role!r}")
    body = json.dumps(payload.to_wire(role)).encode("utf-8")
    headers = {"Content-Type": "application/json", "Accept": "application/json"}
    if config.token:
        headers["Authorization"] = f"Bearer {config.token}"
    url = config.url(role)

    last_kind, last_msg = "timeout", ""
    for attempt in range(config.max_retries + 1):
        if attempt:
            sleep(_backoff(attempt - 1))
        req = urllib.request.Request(url, data=body, headers=headers, method="POST")
        try:
            with urllib.request.urlopen(req, timeout=config.timeout) as resp:
                raw = resp.read()
        except urllib.error.HTTPError as e:
            last_kind, last_msg = "http", f"HTTP {e.code} from {url}"
            if log:
                log(role=role, attempt=attempt, request=body.decode("utf-8"), status=e.code)
            if 500 <= e.code < 600:
                continue
            raise BackendError("http", last_msg) from None
        except (socket.timeout, TimeoutError) as e:
            last_kind, last_msg = "timeout", f"no reply from {url} within {config.timeout:g} s"
            if log:
                log(role=role, attempt=attempt, request=body.decode("utf-8"), status="timeout")
            continue
        except urllib.error.URLError as e:
            if isinstance(e.reason, (socket.timeout, TimeoutError)):
                last_kind, last_msg = "timeout", f"no reply from {url} within {config.timeout:g} s"
            else:
                last_kind, last_msg = "http", f"cannot reach {url}: {e.reason}"
            if log:
                log(role=role, attempt=attempt, request=body.decode("utf-8"), status=last_kind)
            continue
        text = raw.decode("utf-8", errors="replace")
        if log:
            log(role=role, attempt=attempt, request=body.decode("utf-8"), status=200, response=text)
        try:
            doc = json.loads(text)
        except json.JSONDecodeError:
            raise BackendError("malformed", f"non-JSON reply from {url}") from None
        if not isinstance(doc, dict) or not isinstance(doc.get("text"), str):
            raise BackendError("malformed", f"reply from {url} lacks a string 'text' field")
        return doc["text"]
    raise BackendError(last_kind, f"{last_msg} after {config.max_retries} retries")


class HttpBackend:
    """Decision backend that forwards every prompt to a remote endpoint.

    Holds no per-episode state, so one instance serves concurrent workers.
    The runner may set ``trace_hook`` on the per-episode copy to capture raw traffic.
    """

    def __init__(self, config: EndpointConfig, sleep: Callable[[float], None] = time.sleep):
        self.config = config
        self.sleep = sleep
        self.trace_hook: Optional[Callable[..., None]] = None

    def for_episode(self, world, probe) -> "HttpBackend":
        # the world and probe are deliberately ignored: nothing simulator-side goes on the wire
        return HttpBackend(self.config, self.sleep)

    def decide_lang(self, payload: PromptPayload) -> str:
        return remote_decide(self.config, "lang", payload, sleep=self.sleep, log=self.trace_hook)

    def decide_vis(self, payload: PromptPayload) -> str:
        return remote_decide(self.config, "vis", payload, sleep=self.sleep, log=self.trace_hook)
