"""Regenerate the object-to-room matrix from a chat-completion endpoint.

For every object two chain-of-thought queries go out over the full room
list: one asking where the object is likely to be, one asking where it is
unlikely.  The model is told to finish with a score block::

    SCORES
    bedroom: 0.95
    kitchen: 0.05
    END

Only that block is parsed (a ``{room: score, ...}`` dict is also accepted).
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from .matrix import O2RMatrix, bundled_for, combine_scores

log = logging.getLogger(__name__)

API_KEY_ENV = "O2R_LLM_API_KEY"
ROOM_SLOT = "{room_list}"
OBJECT_SLOT = "{object}"


class TransportError(RuntimeError):
    """The endpoint could not be reached or rejected the request."""


class AuthError(TransportError):
    """No API key, or the endpoint refused it."""


class LLMParseError(ValueError):
    def __init__(self, message: str, text: str):
        super().__init__(f"{message}; model output was: {text!r}")
        self.text = text


@dataclass(frozen=True)
class PromptPair:
    positive_template: str
    negative_template: str
    cot_preamble: str

    def __post_init__(self):
        for name in ("positive_template", "negative_template"):
            tpl = getattr(self, name)
            for slot in (OBJECT_SLOT, ROOM_SLOT):
                if slot not in tpl:
                    raise ValueError(f"{name} is missing the {slot} slot")

    def render(self, polarity: str, obj: str, rooms: Sequence[str]) -> str:
        tpl = self.positive_template if polarity == "positive" else self.negative_template
        return tpl.replace(OBJECT_SLOT, obj).replace(ROOM_SLOT, ", ".join(rooms))


DEFAULT_PROMPTS = PromptPair(
    positive_template=(
        "You are helping a home robot search for a {object}. Room types: {room_list}. "
        "For each room type, how likely is it that a {object} is found there?"
    ),
    negative_template=(
        "You are helping a home robot search for a {object}. Room types: {room_list}. "
        "For each room type, how likely is it that the room is irrelevant when looking "
        "for a {object}, i.e. a {object} would almost never be there?"
    ),
    cot_preamble=(
        "Think step by step about what each room type is used for and which objects "
        "people keep there. After your reasoning, output a block that starts with a "
        "line 'SCORES', then one line per room type in the form '<room>: <score>' with "
        "a score between 0 and 1, and ends with a line 'END'."
    ),
)


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str = "https://api.openai.com/v1"
    model: str = "gpt-4"
    temperature: float = 0.0
    timeout_s: float = 60.0
    max_retries: int = 2
    max_parallel: int = 4
    offline_fallback: bool = False
    api_key_env: str = API_KEY_ENV


_BLOCK_RE = re.compile(r"SCORES\s*\n(.*?)(?:\n\s*END\b|\Z)", re.S | re.I)
_BRACE_RE = re.compile(r"\{([^{}]*)\}", re.S)
_PAIR_RE = re.compile(r"['\"]?([A-Za-z][A-Za-z0-9'_\- ]*?)['\"]?\s*:\s*(-?\d+(?:\.\d+)?)")


def parse_scores(text: str, rooms: Sequence[str]) -> tuple[dict[str, float], list[str]]:
    """Per-room scores from a model reply, plus the rooms it left out.

    Raises LLMParseError when no score for a known room is found or a
    score falls outside [0, 1].
    """
    blocks = _BLOCK_RE.findall(text)
    if blocks:
        body = blocks[-1]
    else:
        braces = _BRACE_RE.findall(text)
        if not braces:
            raise LLMParseError("no SCORES block or {room: score} mapping found", text)
        body = braces[-1].replace(",", "\n")
    lookup = {r.lower(): r for r in rooms}
    scores: dict[str, float] = {}
    for name, value in _PAIR_RE.findall(body):
        room = lookup.get(name.strip().strip("-* ").lower())
        if room is None:
            continue
        v = float(value)
        if not 0.0 <= v <= 1.0:
            raise LLMParseError(f"score {v} for {room!r} is outside [0, 1]", text)
        scores[room] = v
    if not scores:
        raise LLMParseError("score block names none of the requested rooms", text)
    missing = [r for r in rooms if r not in scores]
    return scores, missing


class _Transcript:
    def __init__(self, path: Path | None):
        self.path = path
        self.lock = threading.Lock()
        self.records: list[dict] = []

    def add(self, record: dict) -> None:
        with self.lock:
            self.records.append(record)
            if self.path is not None:
                with open(self.path, "a") as fh:
                    fh.write(json.dumps(record) + "\n")


def _post_chat(cfg: EndpointConfig, api_key: str, system: str, user: str) -> tuple[dict, str]:
    payload = {
        "model": cfg.model,
        "temperature": cfg.temperature,
        "messages": [
            {"role": "system", "content": system},
            {"role": "user", "content": user},
        ],
    }
    req = urllib.request.Request(
        cfg.base_url.rstrip("/") + "/chat/completions",
        data=json.dumps(payload).encode(),
        headers={"Content-Type": "application/json", "Authorization": f"Bearer {api_key}"},
        method="POST",
    )
    try:
        with urllib.request.urlopen(req, timeout=cfg.timeout_s) as resp:
            body = json.loads(resp.read().decode())
    except urllib.error.HTTPError as exc:
        if exc.code in (401, 403):
            raise AuthError(f"endpoint rejected credentials (HTTP {exc.code})") from exc
        raise TransportError(f"HTTP {exc.code} from {req.full_url}") from exc
    except (urllib.error.URLError, OSError, json.JSONDecodeError) as exc:
        raise TransportError(f"request to {req.full_url} failed: {exc}") from exc
    try:
        content = body["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        raise TransportError(f"unexpected response shape: {str(body)[:200]}") from None
    return payload, content


def _query_one(cfg, api_key, prompts, polarity, obj, rooms, transcript) -> dict[str, float]:
    user = prompts.render(polarity, obj, rooms)
    last_err: LLMParseError | None = None
    for attempt in range(cfg.max_retries + 1):
        payload, content = _post_chat(cfg, api_key, prompts.cot_preamble, user)
        record = {"object": obj, "polarity": polarity, "attempt": attempt,
                  "request": payload, "response": content}
        try:
            scores, missing = parse_scores(content, rooms)
        except LLMParseError as exc:
            record["error"] = str(exc)
            transcript.add(record)
            last_err = exc
            continue
        if missing:
            record["warning"] = f"rooms defaulted to 0: {missing}"
            log.warning("%s/%s: no score for %s, defaulting to 0", obj, polarity, missing)
        transcript.add(record)
        return {r: scores.get(r, 0.0) for r in rooms}
    assert last_err is not None
    raise last_err


def query_llm_matrix(
    cfg: EndpointConfig,
    prompts: PromptPair,
    rooms: Sequence[str],
    objects: Sequence[str],
    transcript_dir=None,
    fallback: O2RMatrix | None = None,
) -> O2RMatrix:
    """Build a matrix with one positive and one negative query per object.

    On transport/auth failure with ``cfg.offline_fallback`` the bundled matrix
    for these category lists (or ``fallback``) is returned, provenance
    ``bundled`` with the failure recorded under ``fallback_reason``.
    """
    rooms, objects = list(rooms), list(objects)
    tpath = None
    if transcript_dir is not None:
        Path(transcript_dir).mkdir(parents=True, exist_ok=True)
        tpath = Path(transcript_dir) / "transcript.jsonl"
    transcript = _Transcript(tpath)
    try:
        api_key = os.environ.get(cfg.api_key_env, "")
        if not api_key:
            raise AuthError(f"environment variable {cfg.api_key_env} is not set")
        jobs = [(o, p) for o in objects for p in ("positive", "negative")]
        with ThreadPoolExecutor(max_workers=max(1, cfg.max_parallel)) as pool:
            futures = {job: pool.submit(_query_one, cfg, api_key, prompts, job[1], job[0],
                                        rooms, transcript) for job in jobs}
            results = {job: fut.result() for job, fut in futures.items()}
    except TransportError as exc:
        if not cfg.offline_fallback:
            raise
        base = fallback if fallback is not None else bundled_for(rooms, objects)
        if base is None:
            raise TransportError(f"{exc}; no bundled matrix matches these categories") from exc
        log.warning("LLM query failed (%s); falling back to bundled matrix", exc)
        transcript.add({"fallback": True, "reason": str(exc)})
        prov = dict(base.provenance, kind="bundled", fallback_reason=str(exc))
        return O2RMatrix(base.rooms, base.objects, base.scores, prov, base.notes)

    table = np.zeros((len(rooms), len(objects)))
    for j, o in enumerate(objects):
        pos, neg = results[(o, "positive")], results[(o, "negative")]
        for i, r in enumerate(rooms):
            table[i, j] = combine_scores(pos[r], neg[r])
    prov = {
        "kind": "llm-generated",
        "model": cfg.model,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    return O2RMatrix(tuple(rooms), tuple(objects), table, prov)
