"""
Completion Providers

Handles:
- The provider contract: (system text, role-tagged history) -> assistant text
  plus any discoveries emitted alongside it
- A scripted mock that replays per-step response files deterministically
- A live HTTPS chat-completion client configured from environment variables
"""

import logging
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Protocol

import requests

from .config import ProviderConfig
from .errors import ProviderError
from .memory import extract_state_blocks, parse_state_lines
from .models import ConditionKind, DiscoveryCandidate

logger = logging.getLogger(__name__)

# Judge requests open with this line, followed by the dimension id
JUDGE_PREFIX = "Rubric dimension: "

Message = Dict[str, str]


@dataclass
class Completion:
    text: str
    discoveries: List[DiscoveryCandidate] = field(default_factory=list)


class CompletionProvider(Protocol):
    # True when calls must not overlap; the orchestrator serializes them
    serialize: bool

    def complete(self, system: Optional[str], messages: List[Message]) -> Completion:
        ...


def _step_index(messages: List[Message]) -> int:
    return sum(1 for m in messages if m.get("role") == "user")


# -----------------------------------------------------------------------------
# Scripted Mock
# -----------------------------------------------------------------------------

class MockProvider:
    """
    Replays scripted responses from a directory.

    Layout:
        step-<k>.txt        assistant output for step k
        step-<k>.state      optional discovery lines for step k
        judge-<dim>.json    judge reply for a rubric dimension
        A/, B/, C/          per-condition overrides of the files above

    The step index is the number of user messages in the history, so the
    output depends only on (step, condition).
    """

    serialize = False

    def __init__(self, mock_dir, condition: Optional[ConditionKind] = None):
        self.mock_dir = Path(mock_dir)
        self.condition = condition
        self.call_count = 0
        self._lock = threading.Lock()
        if not self.mock_dir.is_dir():
            raise ProviderError(f"Mock directory {self.mock_dir} not found")

    def for_condition(self, condition: ConditionKind) -> "MockProvider":
        return MockProvider(self.mock_dir, condition)

    def _script(self, name: str) -> Optional[Path]:
        if self.condition is not None:
            override = self.mock_dir / self.condition.label / name
            if override.exists():
                return override
        path = self.mock_dir / name
        return path if path.exists() else None

    def complete(self, system: Optional[str], messages: List[Message]) -> Completion:
        with self._lock:
            self.call_count += 1
        if not messages:
            raise ProviderError("Mock provider received an empty history")

        last = messages[-1].get("content", "")
        if last.startswith(JUDGE_PREFIX):
            dimension = last[len(JUDGE_PREFIX):].split(None, 1)[0]
            path = self._script(f"judge-{dimension}.json")
            if path is None:
                raise ProviderError(f"No scripted judge reply for {dimension}")
            return Completion(path.read_text(encoding="utf-8"))

        step = _step_index(messages)
        path = self._script(f"step-{step}.txt")
        if path is None:
            raise ProviderError(f"No scripted response for step {step} in {self.mock_dir}")
        text = path.read_text(encoding="utf-8")

        discoveries = extract_state_blocks(text, step)
        state_path = self._script(f"step-{step}.state")
        if state_path is not None:
            discoveries.extend(parse_state_lines(state_path.read_text(encoding="utf-8"), step))
        logger.debug(f"Mock step {step} ({path.relative_to(self.mock_dir)}): {len(discoveries)} discoveries")
        return Completion(text, discoveries)


# -----------------------------------------------------------------------------
# Live HTTPS Provider
# -----------------------------------------------------------------------------

class LiveProvider:
    """
    Chat-completion client speaking the common `messages` wire format.

    Endpoint, model and key come from the environment only. A failed request
    is retried the configured number of times before ProviderError.
    """

    serialize = True

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str,
        timeout: float = 60.0,
        retries: int = 1,
        session: Optional[requests.Session] = None,
    ):
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        self.retries = max(0, retries)
        self.session = session or requests.Session()

    @classmethod
    def from_env(cls, config: Optional[ProviderConfig] = None, environ=None) -> "LiveProvider":
        config = config or ProviderConfig()
        environ = os.environ if environ is None else environ
        values = {}
        for name in (config.endpoint_env, config.model_env, config.api_key_env):
            values[name] = environ.get(name, "")
            if not values[name]:
                raise ProviderError(f"Environment variable {name} is not set")
        return cls(
            endpoint=values[config.endpoint_env],
            model=values[config.model_env],
            api_key=values[config.api_key_env],
            timeout=config.timeout,
            retries=config.retries,
        )

    def _payload(self, system: Optional[str], messages: List[Message]) -> dict:
        history = [{"role": "system", "content": system}] if system else []
        history.extend({"role": m["role"], "content": m["content"]} for m in messages)
        return {"model": self.model, "messages": history}

    def complete(self, system: Optional[str], messages: List[Message]) -> Completion:
        headers = {
            "Authorization": f"Bearer {self.api_key}",
            "Content-Type": "application/json",
        }
        payload = self._payload(system, messages)
        attempts = self.retries + 1
        last_error = None
        for attempt in range(1, attempts + 1):
            try:
                response = self.session.post(self.endpoint, json=payload, headers=headers, timeout=self.timeout)
                response.raise_for_status()
                text = response.json()["choices"][0]["message"]["content"]
                break
            except (requests.RequestException, ValueError, KeyError, IndexError, TypeError) as e:
                last_error = e
                logger.warning(f"Provider request failed (attempt {attempt}/{attempts}): {e}")
        else:
            raise ProviderError(f"Provider request failed after {attempts} attempt(s): {last_error}")

        if not isinstance(text, str):
            raise ProviderError("Provider returned a non-text completion")
        return Completion(text, extract_state_blocks(text, _step_index(messages)))


def create_provider(
    kind: str,
    mock_dir=None,
    config: Optional[ProviderConfig] = None,
) -> CompletionProvider:
    """Provider factory for the CLI: 'mock' or 'live'."""
    if kind == "mock":
        if mock_dir is None:
            raise ProviderError("The mock provider needs a mock directory")
        return MockProvider(mock_dir)
    if kind == "live":
        return LiveProvider.from_env(config)
    raise ProviderError(f"Unknown provider: {kind}")

