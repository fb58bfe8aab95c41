"""Chat-completion tuning backends: HTTP, scripted mock, and the validated
decision path with retry and rule fallback."""

from __future__ import annotations

import json
import logging
import os
import urllib.error
import urllib.request
from pathlib import Path
from typing import Optional, Protocol

import jsonschema

from .decisions import (
    DIRECTIONS,
    PARAMETERS,
    SCALES,
    ControlLogSummary,
    DecisionError,
    RuleConfig,
    TuningDecision,
    rule_decide,
)
from ..control import CHANNELS

log = logging.getLogger(__name__)

ENDPOINT_ENV = "UUVLAB_LLM_ENDPOINT"
KEY_ENV = "UUVLAB_LLM_KEY"
DEFAULT_TIMEOUT = 10.0

DECISION_SCHEMA = {
    "type": "object",
    "properties": {
        "channel": {"enum": list(CHANNELS)},
        "parameter": {"enum": list(PARAMETERS)},
        "direction": {"enum": list(DIRECTIONS)},
        "scale": {"enum": list(SCALES)},
        "rationale": {"type": "string"},
    },
    "required": ["channel", "parameter", "direction", "scale", "rationale"],
    "additionalProperties": False,
}

SYSTEM_PROMPT = (
    "You tune an underwater vehicle attitude controller between evaluation windows. "
    "Each channel (roll, pitch, yaw, depth) has gains zeta1 (error slope), zeta2 "
    "(damping on the error rate) and alpha (adaptive bias rate). Reply with exactly one JSON "
    'object {"channel", "parameter", "direction", "scale", "rationale"}. direction is '
    "increase, decrease or hold; scale is one of 2.0, 1.5, 1.0, 0.67, 0.5 (2.0/0.5 for major "
    "changes, 1.5/0.67 for refinements, 1.0 only with hold). Output adjustment values only."
)


class BackendError(RuntimeError):
    """Transport-level failure (timeout, network, HTTP status)."""


class ChatBackend(Protocol):
    def complete(self, messages: list, timeout: float) -> str: ...


class HTTPBackend:
    """POST ``{"messages": [...]}`` with a bearer token; returns the reply text.

    Accepts either a bare decision object or an OpenAI-style
    ``choices[0].message.content`` envelope.
    """

    def __init__(self, endpoint: Optional[str] = None, key: Optional[str] = None):
        self.endpoint = endpoint if endpoint is not None else os.environ.get(ENDPOINT_ENV, "")
        self.key = key if key is not None else os.environ.get(KEY_ENV, "")

    def complete(self, messages: list, timeout: float = DEFAULT_TIMEOUT) -> str:
        if not self.endpoint:
            raise BackendError(f"{ENDPOINT_ENV} is not set")
        body = json.dumps({"messages": messages}).encode()
        req = urllib.request.Request(self.endpoint, data=body, method="POST")
        req.add_header("Content-Type", "application/json")
        if self.key:
            req.add_header("Authorization", f"Bearer {self.key}")
        try:
            with urllib.request.urlopen(req, timeout=timeout) as resp:
                raw = resp.read().decode("utf-8", errors="replace")
        except (urllib.error.URLError, TimeoutError, OSError, ValueError) as exc:
            raise BackendError(f"request to {self.endpoint} failed: {exc}") from exc
        try:
            env = json.loads(raw)
        except json.JSONDecodeError:
            return raw
        if isinstance(env, dict) and "choices" in env:
            try:
                return env["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError):
                return raw
        return raw


class MockBackend:
    """Replays scripted responses from a JSON list (file path or list).

    Entries are strings (returned verbatim), objects (serialized) or
    ``{"__error__": "timeout"}`` to simulate a transport failure. When the
    script runs out the last entry repeats.
    """

    def __init__(self, script):
        if isinstance(script, (str, Path)):
            script = json.loads(Path(script).read_text())
        if not isinstance(script, list) or not script:
            raise ValueError("mock script must be a non-empty JSON list")
        self.script = list(script)
        self.calls = 0

    def complete(self, messages: list, timeout: float = DEFAULT_TIMEOUT) -> str:
        entry = self.script[min(self.calls, len(self.script) - 1)]
        self.calls += 1
        if isinstance(entry, dict) and "__error__" in entry:
            raise BackendError(f"scripted failure: {entry['__error__']}")
        return entry if isinstance(entry, str) else json.dumps(entry)


def parse_decision(text: str) -> TuningDecision:
    """Extract and validate the single JSON decision object in ``text``."""
    start, end = text.find("{"), text.rfind("}")
    if start < 0 or end <= start:
        raise DecisionError("no JSON object in response")
    try:
        obj = json.loads(text[start : end + 1])
    except json.JSONDecodeError as exc:
        raise DecisionError(f"malformed JSON: {exc}") from exc
    try:
        jsonschema.validate(obj, DECISION_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise DecisionError(f"schema violation: {exc.message}") from exc
    return TuningDecision(obj["channel"], obj["parameter"], obj["direction"], float(obj["scale"]), obj["rationale"])


def build_messages(s: ControlLogSummary) -> list:
    return [{"role": "system", "content": SYSTEM_PROMPT}, {"role": "user", "content": s.to_text()}]


def llm_decide(
    s: ControlLogSummary,
    client: ChatBackend,
    timeout: float = DEFAULT_TIMEOUT,
    rules: RuleConfig = RuleConfig(),
    log_path=None,
    notes: Optional[list] = None,
) -> list:
    """One validated decision from the backend, or the rule table on failure.

    A response that fails validation is retried once. Transport errors and a
    second invalid response fall back to :func:`rule_decide` with a warning
    (also appended to ``notes`` when given). Every exchange is logged as a
    JSON line to ``log_path``.
    """
    messages = build_messages(s)
    for attempt in range(2):
        record = {"attempt": attempt + 1, "request": messages}
        try:
            reply = client.complete(messages, timeout)
        except BackendError as exc:
            record["error"] = str(exc)
            _log(log_path, record)
            return _fallback(s, rules, f"backend unavailable ({exc}); using rule backend", notes)
        record["response"] = reply
        try:
            d = parse_decision(reply)
        except DecisionError as exc:
            record["rejected"] = str(exc)
            _log(log_path, record)
            continue
        record["accepted"] = d.to_dict()
        _log(log_path, record)
        return [d]
    return _fallback(s, rules, "invalid backend response after retry; using rule backend", notes)


def _fallback(s, rules, msg, notes):
    log.warning(msg)
    if notes is not None:
        notes.append(msg)
    return rule_decide(s, rules)


def _log(path, record) -> None:
    if path is None:
        return
    with open(path, "a") as f:
        f.write(json.dumps(record) + "\n")
