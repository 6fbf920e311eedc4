"""Chat-completion backends and the Thought/Action/Observation loop."""
from __future__ import annotations

import json
import os
import re
import threading
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Protocol, Sequence

ROLES = ("system", "user", "assistant")
DEFAULT_MAX_STEPS = 6
API_KEY_ENV = "LEAN_OPT_API_KEY"

FORMAT_REMINDER = (
    "Your last reply did not follow the required format. Reply with either\n"
    "Thought: ...\nAction: <tool name>\nAction Input: <input>\n"
    "or\nThought: ...\nFinal Answer: <answer>"
)


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if not self.content:
            raise ValueError("message content must be non-empty")


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[ChatMessage, ...]
    temperature: float = 0.0
    top_p: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "messages", tuple(self.messages))


class Backend(Protocol):
    def complete(self, request: ChatRequest) -> str: ...


class ScriptExhaustedError(RuntimeError):
    pass


class TransportError(ConnectionError):
    pass


class ScriptedBackend:
    """Replays canned responses in order and records every request it receives."""

    def __init__(self, responses: Iterable[str] = ()):
        self._queue = list(responses)
        self._pos = 0
        self.requests: list[ChatRequest] = []
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "ScriptedBackend":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        return cls(data["responses"] if isinstance(data, dict) else data)

    @property
    def remaining(self) -> int:
        return len(self._queue) - self._pos

    def complete(self, request: ChatRequest) -> str:
        with self._lock:
            self.requests.append(request)
            if self._pos >= len(self._queue):
                raise ScriptExhaustedError(f"scripted backend exhausted after {self._pos} responses")
            out = self._queue[self._pos]
            self._pos += 1
            return out


class RecordingBackend:
    """Wraps another backend and keeps its responses so a run can be replayed."""

    def __init__(self, inner: Backend):
        self.inner = inner
        self.responses: list[str] = []

    def complete(self, request: ChatRequest) -> str:
        out = self.inner.complete(request)
        self.responses.append(out)
        return out

    def dump(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"responses": self.responses}, fh, indent=2, ensure_ascii=False)


@dataclass
class RemoteBackend:
    """Chat-completions HTTP endpoint; the bearer token comes from the environment."""

    endpoint: str
    model: str
    timeout: float = 60.0
    api_key_env: str = API_KEY_ENV

    def complete(self, request: ChatRequest) -> str:
        import httpx

        key = os.environ.get(self.api_key_env)
        if not key:
            raise TransportError(f"environment variable {self.api_key_env} is not set")
        body = {
            "model": self.model,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "temperature": request.temperature,
            "top_p": request.top_p,
        }
        try:
            resp = httpx.post(self.endpoint, json=body, timeout=self.timeout,
                              headers={"Authorization": f"Bearer {key}"})
            resp.raise_for_status()
            return resp.json()["choices"][0]["message"]["content"]
        except httpx.HTTPError as exc:
            raise TransportError(f"chat endpoint failed: {exc}") from exc
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise TransportError(f"malformed chat response: {exc}") from exc


# --------------------------------------------------------------------------- traces

EVENT_KINDS = ("prompt", "thought", "action", "observation", "final_answer")


@dataclass(frozen=True)
class TraceEvent:
    kind: str
    content: str
    tool: Optional[str] = None


@dataclass
class AgentTrace:
    name: str = ""
    events: list[TraceEvent] = field(default_factory=list)

    def add(self, kind: str, content: str, tool: Optional[str] = None) -> None:
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown trace event {kind!r}")
        if self.events and self.events[-1].kind == "final_answer":
            raise ValueError("trace already holds a final answer")
        self.events.append(TraceEvent(kind, content, tool))

    @property
    def final_answer(self) -> Optional[str]:
        if self.events and self.events[-1].kind == "final_answer":
            return self.events[-1].content
        return None

    @property
    def steps(self) -> int:
        return sum(1 for e in self.events if e.kind == "prompt")

    def to_dict(self) -> dict:
        return {"name": self.name, "events": [{k: v for k, v in asdict(e).items() if v is not None}
                                              for e in self.events]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False, sort_keys=True)


class AgentError(RuntimeError):
    def __init__(self, message: str, trace: AgentTrace):
        self.trace = trace
        super().__init__(message)


class UnknownToolError(AgentError):
    pass


class MissingActionInputError(AgentError):
    pass


class StepLimitError(AgentError):
    pass


class UnparseableTurnError(AgentError):
    pass


class ToolError(AgentError):
    pass


# --------------------------------------------------------------------------- turn parsing

_LABEL = r"^[ \t]*(?:\*\*)?{name}(?:\*\*)?[ \t]*:(?:\*\*)?[ \t]*"
_OBS = re.compile(_LABEL.format(name="Observation"), re.MULTILINE)
_FINAL = re.compile(_LABEL.format(name="Final Answer"), re.MULTILINE)
_ACTION = re.compile(_LABEL.format(name="Action") + r"(.*)$", re.MULTILINE)
_INPUT = re.compile(_LABEL.format(name="Action Input"), re.MULTILINE)
_THOUGHT = re.compile(_LABEL.format(name="Thought"), re.MULTILINE)


@dataclass(frozen=True)
class Turn:
    thought: str
    action: Optional[str] = None
    action_input: Optional[str] = None
    final_answer: Optional[str] = None
    text: str = ""  # the reply with any invented observation removed


def _strip_quotes(s: str) -> str:
    s = s.strip()
    if len(s) >= 2 and s[0] == s[-1] and s[0] in "\"'`":
        return s[1:-1].strip()
    if len(s) >= 2 and s[0] in "“" and s[-1] in "”":
        return s[1:-1].strip()
    return s


def parse_turn(text: str) -> Optional[Turn]:
    """Split one assistant reply into its labelled parts; None when it has none."""
    m = _OBS.search(text)
    if m:
        text = text[:m.start()]  # the model must not write its own observations
    text = text.rstrip()
    first_label = min((p.search(text).start() for p in (_FINAL, _ACTION, _INPUT) if p.search(text)),
                      default=len(text))
    head = text[:first_label]
    tm = _THOUGHT.search(head)
    thought = head[tm.end():].strip() if tm else head.strip()
    fm = _FINAL.search(text)
    if fm:
        return Turn(thought, final_answer=text[fm.end():].strip(), text=text)
    am = _ACTION.search(text)
    if not am:
        return None
    action = _strip_quotes(am.group(1)).rstrip(".").strip()
    im = _INPUT.search(text, am.end())
    action_input = _strip_quotes(text[im.end():]) if im else None
    return Turn(thought, action, action_input, text=text)


def react_loop(
    backend: Backend,
    system: str,
    tools: Mapping[str, Callable[[str], str]],
    question: str,
    max_steps: int = DEFAULT_MAX_STEPS,
    name: str = "",
    temperature: float = 0.0,
    top_p: float = 1.0,
) -> tuple[str, AgentTrace]:
    """Run Thought/Action/Observation turns until a Final Answer appears.

    A step is one backend call. One malformed reply earns a format reminder;
    a second malformed reply raises UnparseableTurnError.
    """
    if max_steps < 1:
        raise ValueError("max_steps must be at least 1")
    trace = AgentTrace(name)
    messages = [ChatMessage("system", system), ChatMessage("user", question)]
    reprompted = False
    for _ in range(max_steps):
        trace.add("prompt", messages[-1].content)
        reply = backend.complete(ChatRequest(tuple(messages), temperature, top_p))
        turn = parse_turn(reply)
        if turn is None:
            if reprompted:
                raise UnparseableTurnError("reply has neither an Action nor a Final Answer", trace)
            reprompted = True
            if reply.strip():
                trace.add("thought", reply.strip())
            messages += [ChatMessage("assistant", reply or "(empty)"), ChatMessage("user", FORMAT_REMINDER)]
            continue
        if turn.thought:
            trace.add("thought", turn.thought)
        if turn.final_answer is not None:
            trace.add("final_answer", turn.final_answer)
            return turn.final_answer, trace
        if turn.action not in tools:
            trace.add("action", turn.action_input or "", tool=turn.action)
            raise UnknownToolError(f"unknown tool {turn.action!r}; available: {sorted(tools)}", trace)
        if not turn.action_input:
            trace.add("action", "", tool=turn.action)
            raise MissingActionInputError(f"action {turn.action!r} has no Action Input", trace)
        trace.add("action", turn.action_input, tool=turn.action)
        try:
            observation = tools[turn.action](turn.action_input)
        except Exception as exc:
            raise ToolError(f"tool {turn.action!r} failed: {exc}", trace) from exc
        trace.add("observation", observation, tool=turn.action)
        messages += [ChatMessage("assistant", turn.text), ChatMessage("user", f"Observation: {observation}")]
    raise StepLimitError(f"no Final Answer within {max_steps} steps", trace)
