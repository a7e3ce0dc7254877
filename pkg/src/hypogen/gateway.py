"""Model backend abstraction, scripted mock, and agent-output parsers.

The gateway is stateless and thread safe. Backends are pure functions of the
request (the scripted mock literally so), which is what makes desk-scale
end-to-end runs deterministic and replayable.
"""

from __future__ import annotations

import json
import os
import re
import time
from enum import Enum
from pathlib import Path
from typing import Optional, Protocol, Union

import httpx
from pydantic import BaseModel, ConfigDict, Field

from .core import ObservationLabel
from .errors import (
    BackendTimeout,
    BackendUnavailable,
    MissingBinding,
    RateLimited,
    UnknownLabel,
)
from .templates import PLACEHOLDER_RE, placeholders_of, render_prompt

MAX_DEBATE_TURNS = 10


class AgentKind(str, Enum):
    SUPERVISOR = "supervisor"
    GENERATION = "generation"
    REFLECTION = "reflection"
    RANKING = "ranking"
    PROXIMITY = "proximity"
    EVOLUTION = "evolution"
    META_REVIEW = "meta_review"
    SAFETY = "safety"


class ModelRequest(BaseModel):
    model_config = ConfigDict(frozen=True)

    agent_kind: AgentKind
    template_id: str
    bindings: dict[str, str] = Field(default_factory=dict)
    max_turns_hint: Optional[int] = None
    trace_id: str = ""

    def prompt(self) -> str:
        """Render this request's template; raises MissingBinding."""
        return render_prompt(self.template_id, self.bindings)


class ModelResponse(BaseModel):
    model_config = ConfigDict(frozen=True)

    text: str
    backend_id: str
    latency: float = 0.0
    token_counts: Optional[tuple[int, int]] = None


class Backend(Protocol):
    """Anything that can answer a ModelRequest."""

    def complete(self, request: ModelRequest) -> ModelResponse: ...


class MockScriptEntry(BaseModel):
    """One matcher -> response rule. First matching entry wins."""

    model_config = ConfigDict(frozen=True)

    agent_kind: Optional[AgentKind] = None
    template_id: Optional[str] = None
    contains: str = ""
    response: str

    def matches(self, request: ModelRequest) -> bool:
        if self.agent_kind is not None and request.agent_kind != self.agent_kind:
            return False
        if self.template_id is not None and request.template_id != self.template_id:
            return False
        if self.contains:
            blob = "\n".join(str(v) for v in request.bindings.values())
            if self.contains not in blob:
                return False
        return True


class MockScript(BaseModel):
    model_config = ConfigDict(frozen=True)

    entries: tuple[MockScriptEntry, ...] = ()
    default_response: str = ""

    @classmethod
    def from_file(cls, path: str | Path) -> "MockScript":
        data = json.loads(Path(path).read_text())
        if isinstance(data, list):
            data = {"entries": data, "default_response": ""}
        return cls(
            entries=tuple(MockScriptEntry(**e) for e in data.get("entries", [])),
            default_response=data.get("default_response", ""),
        )

    def respond(self, request: ModelRequest) -> str:
        for entry in self.entries:
            if entry.matches(request):
                return entry.response
        return self.default_response


class ScriptedBackend:
    """Deterministic mock backend replaying a MockScript."""

    backend_id = "scripted"

    def __init__(self, script: MockScript) -> None:
        self.script = script

    def complete(self, request: ModelRequest) -> ModelResponse:
        # Render to surface MissingBinding errors exactly like a real call.
        prompt = request.prompt()
        text = self.script.respond(request)
        return ModelResponse(
            text=text,
            backend_id=self.backend_id,
            latency=0.0,
            token_counts=(len(prompt.split()), len(text.split())),
        )


class HttpBackend:
    """Adapter for a real completion endpoint.

    Speaks a minimal JSON contract: POST {model, prompt} -> {text}. Retries
    rate limits with exponential backoff (max 3 attempts) before surfacing
    the error to the task framework.
    """

    backend_id = "http"

    def __init__(
        self,
        endpoint: str,
        model: str = "",
        token_env: str = "HYPOGEN_MODEL_TOKEN",
        timeout: float = 60.0,
        max_attempts: int = 3,
        client: Optional[httpx.Client] = None,
    ) -> None:
        self.endpoint = endpoint
        self.model = model
        self.token_env = token_env
        self.timeout = timeout
        self.max_attempts = max_attempts
        self._client = client or httpx.Client(timeout=timeout)

    def complete(self, request: ModelRequest) -> ModelResponse:
        prompt = request.prompt()
        headers = {}
        token = os.environ.get(self.token_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        payload = {"model": self.model, "prompt": prompt}
        backoff = 0.5
        started = time.monotonic()
        for attempt in range(1, self.max_attempts + 1):
            try:
                resp = self._client.post(self.endpoint, json=payload, headers=headers)
            except httpx.TimeoutException as exc:
                raise BackendTimeout(str(exc)) from exc
            except httpx.HTTPError as exc:
                raise BackendUnavailable(str(exc)) from exc
            if resp.status_code == 429:
                retry_after = float(resp.headers.get("retry-after", backoff))
                if attempt == self.max_attempts:
                    raise RateLimited(retry_after)
                time.sleep(retry_after)
                backoff *= 2
                continue
            if resp.status_code >= 500:
                raise BackendUnavailable(f"backend returned {resp.status_code}")
            body = resp.json()
            return ModelResponse(
                text=body.get("text", ""),
                backend_id=self.backend_id,
                latency=time.monotonic() - started,
            )
        raise BackendUnavailable("retries exhausted")


class DebateSignal(Enum):
    """Non-final outcomes of a generation debate turn."""

    CONTINUE = "continue"
    EXHAUSTED = "exhausted"


DebateOutcome = Union[str, DebateSignal]

# The terminator is case sensitive: the template demands all capital letters.
# It counts when alone on a line or followed by whitespace.
_HYPOTHESIS_MARKER_RE = re.compile(r"(?m)(?:^[ \t]*HYPOTHESIS[ \t]*$|\bHYPOTHESIS(?=\s))")


def parse_debate_outcome(transcript: str, turns_used: int) -> DebateOutcome:
    """Extract the finalized hypothesis from a debate transcript.

    Returns the text after the last standalone HYPOTHESIS marker, or
    CONTINUE while under the turn cap, or EXHAUSTED at the cap.
    """
    if turns_used < 0:
        raise ValueError("turns_used must be >= 0")
    last = None
    for match in _HYPOTHESIS_MARKER_RE.finditer(transcript):
        last = match
    if last is not None:
        text = transcript[last.end():].strip()
        if text:
            return text
    if turns_used < MAX_DEBATE_TURNS:
        return DebateSignal.CONTINUE
    return DebateSignal.EXHAUSTED


# Judges may quote the instruction ("better hypothesis: <1 or 2>") before the
# decisive line, so we take the last occurrence and reject digits that are
# part of an "<1 or 2>" enumeration.
_VERDICT_RE = re.compile(
    r'better\s+(?:hypothesis|idea)\s*:\s*[<\[\("\'*_ \t]*([12])(?!\s*or\b)(?![0-9])',
    re.IGNORECASE,
)


def parse_match_verdict(transcript: str) -> Optional[str]:
    """Return "a" or "b" from the judge's final verdict, or None if unparseable."""
    last = None
    for match in _VERDICT_RE.finditer(transcript):
        last = match
    if last is None:
        return None
    return "a" if last.group(1) == "1" else "b"


_OBSERVATION_LINE_RE = re.compile(r"hypothesis\s*:\s*(.+)", re.IGNORECASE)

_LABELS: dict[str, ObservationLabel] = {
    "already explained": ObservationLabel.ALREADY_EXPLAINED,
    "other explanations more likely": ObservationLabel.OTHER_EXPLANATIONS_MORE_LIKELY,
    "missing piece": ObservationLabel.MISSING_PIECE,
    "neutral": ObservationLabel.NEUTRAL,
    "disproved": ObservationLabel.DISPROVED,
}


def parse_observation_label(text: str) -> ObservationLabel:
    """Map the last "hypothesis: <label>" line to the five-way enum."""
    last = None
    for match in _OBSERVATION_LINE_RE.finditer(text):
        last = match
    if last is None:
        raise UnknownLabel(text[:80])
    raw = last.group(1)
    normalized = re.sub(r"[^a-z ]", " ", raw.lower())
    normalized = re.sub(r"\s+", " ", normalized).strip()
    for key, label in _LABELS.items():
        if normalized == key or normalized.startswith(key):
            return label
    raise UnknownLabel(raw.strip()[:80])


def find_unrendered_placeholders(text: str) -> list[str]:
    """Placeholder markers that survived rendering (should be none)."""
    return [m.group(1) for m in PLACEHOLDER_RE.finditer(text)]


__all__ = [
    "AgentKind",
    "Backend",
    "DebateOutcome",
    "DebateSignal",
    "HttpBackend",
    "MAX_DEBATE_TURNS",
    "MissingBinding",
    "MockScript",
    "MockScriptEntry",
    "ModelRequest",
    "ModelResponse",
    "ScriptedBackend",
    "find_unrendered_placeholders",
    "parse_debate_outcome",
    "parse_match_verdict",
    "parse_observation_label",
    "placeholders_of",
    "render_prompt",
]
