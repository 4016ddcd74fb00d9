"""Pluggable judgment interface: naming, classification, join validation,
fragmentation, rewriting, summarization, and embeddings.

Two implementations ship: a deterministic rule-based one (the test stack,
fully offline) and a remote chat-completions client that falls back to the
deterministic answers on any failure. `complete` never raises to callers.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from . import text

TASKS = (
    "simplify_name",
    "classify_column",
    "judge_join",
    "judge_path",
    "fragment",
    "rewrite_sql",
    "summarize",
    "embed",
)


@dataclass
class AdjudicationRequest:
    task: str
    payload: dict
    budget: int = 2048
    temperature: float = 0.0  # fixed; the system prizes determinism

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        self.temperature = 0.0


@dataclass
class AdjudicationResponse:
    text: str
    parsed: Any
    usable: bool
    raw: str
    provenance: str = "deterministic"  # deterministic | remote | fallback


class AuditLog:
    """Append-only record of raw adjudication exchanges."""

    def __init__(self, path: Optional[str | Path] = None):
        self.path = Path(path) if path else None
        self.entries: list[dict] = []
        self._lock = threading.Lock()

    def record(self, request: AdjudicationRequest, response: AdjudicationResponse) -> None:
        entry = {
            "task": request.task,
            "payload": request.payload,
            "raw": response.raw,
            "provenance": response.provenance,
        }
        with self._lock:
            self.entries.append(entry)
            if self.path:
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(entry, sort_keys=True) + "\n")

    def dump_text(self) -> str:
        return "\n".join(json.dumps(e, sort_keys=True) for e in self.entries)


class DeterministicAdjudicator:
    """Rule-based answers for every task; pure and reentrant.

    The entire primary suite runs against this implementation with no
    network access.
    """

    def __init__(self, audit: Optional[AuditLog] = None):
        self.audit = audit or AuditLog()

    # -- task rules ---------------------------------------------------------

    def _answer(self, request: AdjudicationRequest) -> tuple[str, Any]:
        task, payload = request.task, request.payload
        if task == "simplify_name":
            simplified = text_simplify(payload.get("raw", ""), payload.get("table_context", ""))
            return simplified, simplified
        if task == "classify_column":
            role = payload.get("default", "dimension")
            return role, role
        if task == "judge_join":
            if payload.get("kind") == "primary_key_choice":
                choice = _prefer_key_name(payload.get("candidates", []))
                return choice, choice
            ok = (
                float(payload.get("score", 0.0)) >= float(payload.get("threshold", 0.8))
                and float(payload.get("inclusion_fraction", 0.0)) >= 0.95
                and float(payload.get("sample_support", 1.0)) >= float(payload.get("min_support", 0.0))
            )
            verdict = "accept" if ok else "reject"
            return verdict, ok
        if task == "judge_path":
            return "1", 0  # candidates arrive pre-ranked; keep the first
        if task == "fragment":
            from .plan.fragments import deterministic_fragment, render_fragments

            fragments = deterministic_fragment(
                payload.get("question", ""), payload.get("exemplars", [])
            )
            rendered = render_fragments(fragments)
            return rendered, fragments
        if task == "rewrite_sql":
            sql = payload.get("sql", "")
            return f"```sql\n{sql}\n```", sql
        if task == "summarize":
            summary = _template_summary(payload)
            return summary, summary
        raise ValueError(f"task {task!r} needs complete(), not embed()")

    def complete(self, request: AdjudicationRequest) -> AdjudicationResponse:
        raw, parsed = self._answer(request)
        response = AdjudicationResponse(
            text=raw, parsed=parsed, usable=True, raw=raw, provenance="deterministic"
        )
        self.audit.record(request, response)
        return response

    def embed(self, texts: list[str]) -> list[list[float]]:
        if not texts:
            raise ValueError("texts must be non-empty")
        return [text.embed_text(t) for t in texts]


class RemoteAdjudicator:
    """OpenAI-compatible chat-completions client with deterministic fallback.

    Network failures, timeouts and unparseable responses all degrade to the
    deterministic answer (provenance="fallback"); callers never see an error.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str = "",
        audit: Optional[AuditLog] = None,
        max_in_flight: int = 8,
        retries: int = 2,
        total_budget_s: float = 10.0,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.audit = audit or AuditLog()
        self.retries = retries
        self.total_budget_s = total_budget_s
        self._gate = threading.BoundedSemaphore(max_in_flight)
        self._fallback = DeterministicAdjudicator(audit=self.audit)

    def _post_chat(self, prompt: str, budget: int) -> str:
        import httpx

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {
            "model": self.model,
            "temperature": 0,
            "max_tokens": budget,
            "messages": [{"role": "user", "content": prompt}],
        }
        deadline = time.monotonic() + self.total_budget_s
        delay = 0.5
        last_exc: Exception | None = None
        for attempt in range(self.retries + 1):
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                break
            try:
                with self._gate:
                    resp = httpx.post(
                        f"{self.base_url}/chat/completions",
                        json=body,
                        headers=headers,
                        timeout=min(remaining, 10.0),
                    )
                resp.raise_for_status()
                return resp.json()["choices"][0]["message"]["content"]
            except Exception as exc:  # noqa: BLE001 - fallback contract
                last_exc = exc
                if attempt < self.retries:
                    time.sleep(min(delay, max(0.0, deadline - time.monotonic())))
                    delay *= 2
        raise last_exc or RuntimeError("remote call failed")

    def complete(self, request: AdjudicationRequest) -> AdjudicationResponse:
        prompt = build_prompt(request)
        try:
            raw = self._post_chat(prompt, request.budget)
            parsed, usable = parse_response(request.task, raw)
            if usable:
                response = AdjudicationResponse(
                    text=raw, parsed=parsed, usable=True, raw=raw, provenance="remote"
                )
                self.audit.record(request, response)
                return response
        except Exception:  # noqa: BLE001
            pass
        fallback = self._fallback.complete(request)
        return AdjudicationResponse(
            text=fallback.text,
            parsed=fallback.parsed,
            usable=True,
            raw=fallback.raw,
            provenance="fallback",
        )

    def embed(self, texts: list[str]) -> list[list[float]]:
        import httpx

        if not texts:
            raise ValueError("texts must be non-empty")
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = httpx.post(
                f"{self.base_url}/embeddings",
                json={"model": self.model, "input": texts},
                headers=headers,
                timeout=self.total_budget_s,
            )
            resp.raise_for_status()
            data = resp.json()["data"]
            return [d["embedding"] for d in sorted(data, key=lambda d: d.get("index", 0))]
        except Exception:  # noqa: BLE001
            return self._fallback.embed(texts)


def build_prompt(request: AdjudicationRequest) -> str:
    header = {
        "simplify_name": "Expand this column name into a short human-friendly phrase. Answer with the phrase only.",
        "classify_column": "Classify this column as 'dimension' or 'measure'. Answer with one word.",
        "judge_join": "Judge this join candidate. Answer 'accept' or 'reject'.",
        "judge_path": "Pick the best join path. Answer with its 1-based number.",
        "fragment": "Break the question into operations using the documented fragment syntax.",
        "rewrite_sql": "Improve this SQL if possible. Answer with a single fenced SQL block.",
        "summarize": "Summarize the result for the user in one or two sentences.",
    }[request.task]
    return header + "\n\n" + json.dumps(request.payload, sort_keys=True, default=str)


def parse_response(task: str, raw: str) -> tuple[Any, bool]:
    body = raw.strip()
    if not body:
        return None, False
    if task == "classify_column":
        word = body.split()[0].strip(".,").lower()
        return (word, True) if word in {"dimension", "measure"} else (None, False)
    if task == "judge_join":
        word = body.split()[0].strip(".,").lower()
        if word in {"accept", "reject"}:
            return word == "accept", True
        return (body.splitlines()[0].strip(), True) if body else (None, False)
    if task == "judge_path":
        first = body.split()[0].strip(".,")
        return (int(first) - 1, True) if first.isdigit() and int(first) >= 1 else (None, False)
    if task == "fragment":
        from .plan.fragments import parse_rendered_fragments

        try:
            return parse_rendered_fragments(body), True
        except Exception:  # noqa: BLE001
            return None, False
    if task == "rewrite_sql":
        if "```" in body:
            inner = body.split("```", 2)[1]
            inner = inner[3:] if inner.lower().startswith("sql") else inner
            inner = inner.strip()
            return (inner, True) if inner else (None, False)
        return None, False
    return body, True  # simplify_name, summarize: free text


def _prefer_key_name(candidates: list[str]) -> str:
    for c in candidates:
        low = c.lower()
        if "key" in low or low.endswith("id") or low.endswith("_id") or low == "id":
            return c
    return candidates[0] if candidates else ""


def _template_summary(payload: dict) -> str:
    columns = payload.get("columns", [])
    rows = payload.get("rows", [])
    if not rows:
        return "The query returned no rows."
    parts = [f"The query returned {len(rows)} row{'s' if len(rows) != 1 else ''}"]
    numeric_idx = [
        i for i in range(len(columns)) if any(isinstance(r[i], (int, float)) for r in rows)
    ]
    if numeric_idx:
        i = numeric_idx[-1]
        vals = [r[i] for r in rows if isinstance(r[i], (int, float))]
        label = columns[i] if i < len(columns) else f"column {i}"
        parts.append(
            f"; {label} ranges from {min(vals):g} to {max(vals):g}"
        )
    return "".join(parts) + "."


def text_simplify(raw: str, table_context: str = "") -> str:
    """Deterministic name simplification shared by semantics and the
    deterministic adjudicator: prefix resolution against the table name,
    dictionary expansion, adjacent-duplicate collapse."""
    tokens = text.split_identifier(raw)
    if not tokens:
        return raw.lower()
    out: list[str] = []
    table_word = text.singularize(table_context.lower()) if table_context else ""
    for i, tok in enumerate(tokens):
        if (
            i == 0
            and table_word
            and len(tok) <= 2
            and table_word.startswith(tok)
            and len(tokens) > 1
        ):
            out.extend(table_word.split())
            continue
        out.extend(text.expand_token(tok).split())
    deduped = text.dedupe_adjacent(out)
    return " ".join(deduped)


def default_adjudicator(kind: str = "deterministic", **kwargs) -> Any:
    if kind == "deterministic":
        return DeterministicAdjudicator(audit=kwargs.get("audit"))
    if kind == "remote":
        return RemoteAdjudicator(
            base_url=kwargs["endpoint"],
            model=kwargs.get("model", "gpt-4o-mini"),
            api_key=kwargs.get("api_key", ""),
            audit=kwargs.get("audit"),
        )
    raise ValueError(f"unknown adjudicator kind {kind!r}")
