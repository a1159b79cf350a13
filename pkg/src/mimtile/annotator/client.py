"""Chat-completions client for QA and rationale annotation of image sets."""

from __future__ import annotations

import base64
import json
import logging
import os
import random
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import httpx
import yaml

from ..datagen.instances import ImageRef, InstructionInstance, image_bytes
from ..errors import CredentialError, ImageError
from .templates import TemplateStore

log = logging.getLogger(__name__)

RETRYABLE_STATUS = frozenset({429, 500, 502, 503, 504})


@dataclass
class EndpointConfig:
    base_url: str
    model: str = "default"
    api_key_env: str = "MIMTILE_ANNOTATOR_KEY"
    concurrency: int = 4
    requests_per_minute: float | None = 60.0
    request_timeout: float = 120.0
    max_attempts: int = 3
    backoff_base: float = 1.0
    backoff_factor: float = 2.0
    backoff_jitter: float = 0.25
    log_path: str | None = None

    @classmethod
    def from_file(cls, path) -> "EndpointConfig":
        text = Path(path).read_text(encoding="utf-8")
        data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown endpoint config keys: {', '.join(sorted(unknown))}")
        return cls(**data)


@dataclass
class AnnotationJob:
    images: Sequence[ImageRef]
    prompt_template_id: str
    template_vars: dict = field(default_factory=dict)
    max_attempts: int | None = None
    request_timeout: float | None = None
    job_id: str | None = None


@dataclass(frozen=True)
class QAItem:
    question: str
    answer: str
    rationale: str | None = None


@dataclass
class AnnotationResult:
    qa_items: list[QAItem]
    raw_response: str | None
    status: str  # ok | parse_failed | transport_failed
    attempts_used: int
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"


class ReplyParseError(ValueError):
    pass


# -- request construction ------------------------------------------------------

_MAGIC = [
    (b"\x89PNG\r\n\x1a\n", "image/png"),
    (b"\xff\xd8\xff", "image/jpeg"),
    (b"GIF8", "image/gif"),
    (b"RIFF", "image/webp"),
]


def _mime(data: bytes) -> str:
    for magic, mime in _MAGIC:
        if data.startswith(magic):
            return mime
    return "application/octet-stream"


def build_request(job: AnnotationJob, store: TemplateStore | None = None, model: str = "default", base_dir=None) -> dict:
    """Chat request with one user message: prompt text, then images in order."""
    store = store or TemplateStore()
    if not job.images:
        raise ImageError("an annotation job needs at least one image")
    variables = {"num_images": len(job.images), **job.template_vars}
    text = store.render(job.prompt_template_id, variables)
    parts = [{"type": "text", "text": text}]
    for ref in job.images:
        data = image_bytes(ref, base_dir)
        if not data:
            raise ImageError(f"image {ref!r} is empty")
        url = f"data:{_mime(data)};base64,{base64.b64encode(data).decode('ascii')}"
        parts.append({"type": "image_url", "image_url": {"url": url}})
    return {"model": model, "messages": [{"role": "user", "content": parts}]}


# -- reply parsing --------------------------------------------------------------

_FENCE = re.compile(r"```[ \t]*(?:json|JSON)?[ \t]*\r?\n(.*?)```", re.DOTALL)


def _items_from(obj) -> list[QAItem]:
    if isinstance(obj, dict):
        if "question" in obj:
            obj = [obj]
        else:
            lists = [v for v in obj.values() if isinstance(v, list)]
            if len(lists) != 1:
                raise ReplyParseError("JSON object does not hold a single list of QA items")
            obj = lists[0]
    if not isinstance(obj, list) or not obj:
        raise ReplyParseError("expected a non-empty list of QA items")
    items = []
    for n, it in enumerate(obj):
        if not isinstance(it, dict):
            raise ReplyParseError(f"item {n} is not an object")
        q, a, r = it.get("question"), it.get("answer"), it.get("rationale")
        if not isinstance(q, str) or not q.strip() or not isinstance(a, (str, int, float)) or not str(a).strip():
            raise ReplyParseError(f"item {n} lacks a non-empty question and answer")
        if r is not None and not isinstance(r, str):
            raise ReplyParseError(f"item {n} has a non-text rationale")
        items.append(QAItem(q, str(a), r))
    return items


def parse_reply(text: str) -> list[QAItem]:
    """QA items from a bare JSON reply or from its fenced JSON blocks."""
    candidates = [text.strip()] + [m.group(1).strip() for m in _FENCE.finditer(text)]
    last = None
    for cand in candidates:
        try:
            return _items_from(json.loads(cand))
        except (json.JSONDecodeError, ReplyParseError) as e:
            last = e
    raise ReplyParseError(f"no usable JSON in reply ({last})")


def _message_text(body: str) -> str:
    data = json.loads(body)
    content = data["choices"][0]["message"]["content"]
    if isinstance(content, list):
        content = "".join(p.get("text", "") for p in content if isinstance(p, dict))
    if not isinstance(content, str):
        raise ReplyParseError("message content is not text")
    return content


# -- client ---------------------------------------------------------------------


class RateLimiter:
    """Spaces request starts at least ``60 / rpm`` seconds apart."""

    def __init__(self, requests_per_minute: float | None, clock=time.monotonic, sleep=time.sleep):
        self.interval = 60.0 / requests_per_minute if requests_per_minute else 0.0
        self._clock, self._sleep = clock, sleep
        self._next = 0.0
        self._lock = threading.Lock()

    def acquire(self) -> None:
        if not self.interval:
            return
        with self._lock:
            now = self._clock()
            start = max(now, self._next)
            self._next = start + self.interval
        if start > now:
            self._sleep(start - now)


class AnnotatorClient:
    """Thread-safe client; at most ``config.concurrency`` requests in flight."""

    def __init__(
        self,
        config: EndpointConfig,
        store: TemplateStore | None = None,
        api_key: str | None = None,
        base_dir=None,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
        seed: int | None = None,
    ):
        key = api_key or os.environ.get(config.api_key_env)
        if not key:
            raise CredentialError(f"credential environment variable {config.api_key_env} is not set")
        self.config = config
        self.store = store or TemplateStore()
        self.base_dir = base_dir
        self._sleep = sleep
        self._rng = random.Random(seed)
        self._rng_lock = threading.Lock()
        self._slots = threading.BoundedSemaphore(max(1, config.concurrency))
        self._limiter = RateLimiter(config.requests_per_minute)
        self._log_lock = threading.Lock()
        self._http = httpx.Client(
            base_url=config.base_url.rstrip("/"),
            headers={"Authorization": f"Bearer {key}"},
            timeout=config.request_timeout,
            transport=transport,
        )

    def close(self):
        self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _backoff(self, attempt: int) -> float:
        delay = self.config.backoff_base * self.config.backoff_factor ** (attempt - 1)
        with self._rng_lock:
            return delay + self._rng.uniform(0, self.config.backoff_jitter * delay)

    def _log(self, record: dict) -> None:
        if not self.config.log_path:
            return
        line = json.dumps(record, ensure_ascii=False, sort_keys=True)
        with self._log_lock:
            Path(self.config.log_path).parent.mkdir(parents=True, exist_ok=True)
            with open(self.config.log_path, "a", encoding="utf-8") as f:
                f.write(line + "\n")

    def annotate(self, job: AnnotationJob) -> AnnotationResult:
        body = build_request(job, self.store, self.config.model, self.base_dir)
        max_attempts = job.max_attempts or self.config.max_attempts
        timeout = job.request_timeout or self.config.request_timeout
        error = None
        for attempt in range(1, max_attempts + 1):
            self._limiter.acquire()
            status_code, raw = None, None
            with self._slots:
                try:
                    resp = self._http.post("/chat/completions", json=body, timeout=timeout)
                    status_code, raw = resp.status_code, resp.text
                except httpx.HTTPError as e:
                    error = f"{type(e).__name__}: {e}"
            self._log(
                {
                    "job_id": job.job_id,
                    "attempt": attempt,
                    "status_code": status_code,
                    "error": error if status_code is None else None,
                    "raw_response": raw,
                    "time": time.time(),
                }
            )
            if status_code == 200:
                try:
                    items = parse_reply(_message_text(raw))
                except (ReplyParseError, json.JSONDecodeError, KeyError, IndexError, TypeError) as e:
                    return AnnotationResult([], raw, "parse_failed", attempt, str(e))
                return AnnotationResult(items, raw, "ok", attempt)
            if status_code is not None:
                error = f"HTTP {status_code}"
                if status_code not in RETRYABLE_STATUS:
                    return AnnotationResult([], raw, "transport_failed", attempt, error)
            if attempt < max_attempts:
                self._sleep(self._backoff(attempt))
        return AnnotationResult([], raw, "transport_failed", max_attempts, error)


def _qa_vars(inst: InstructionInstance) -> dict:
    pairs = inst.qa_pairs()
    return {"question": "\n".join(q for q, _ in pairs), "answer": "\n".join(a for _, a in pairs)}


def augment_rationale(
    inst: InstructionInstance,
    client: AnnotatorClient,
    template_id: str = "rationale",
    index: int | None = None,
) -> tuple[InstructionInstance, dict | None]:
    """Attach a generated rationale; on any failure return ``inst`` unchanged
    together with a failure record."""
    job_id = str(index) if index is not None else inst.meta.get("content_hash")
    base = {"index": index, "job_id": job_id}
    if inst.rationale:
        return inst, {**base, "status": "skipped", "reason": "instance already has a rationale"}
    if not inst.qa_pairs():
        return inst, {**base, "status": "skipped", "reason": "instance has no QA pair"}
    job = AnnotationJob(inst.images, template_id, _qa_vars(inst), job_id=job_id)
    try:
        result = client.annotate(job)
    except Exception as e:  # template or image problems must not drop the instance
        return inst, {**base, "status": "error", "reason": f"{type(e).__name__}: {e}"}
    rationale = next((it.rationale for it in result.qa_items if it.rationale and it.rationale.strip()), None)
    if result.ok and rationale:
        return replace(inst, rationale=rationale), None
    status = result.status if not result.ok else "parse_failed"
    return inst, {
        **base,
        "status": status,
        "attempts_used": result.attempts_used,
        "reason": result.error or "reply carried no rationale",
        "raw_response": result.raw_response,
    }


def augment_batch(
    instances: Sequence[InstructionInstance],
    client: AnnotatorClient,
    template_id: str = "rationale",
) -> tuple[list[InstructionInstance], list[dict]]:
    """Run :func:`augment_rationale` over a batch, keeping input order.

    The output always has one instance per input instance.
    """
    with ThreadPoolExecutor(max_workers=max(1, client.config.concurrency)) as pool:
        results = list(pool.map(lambda p: augment_rationale(p[1], client, template_id, p[0]), enumerate(instances)))
    out = [inst for inst, _ in results]
    failures = [f for _, f in results if f is not None]
    for f in failures:
        log.info("annotation failure for job %s: %s (%s)", f["job_id"], f["status"], f.get("reason"))
    return out, failures


def replay_log(path) -> dict[str, AnnotationResult]:
    """Re-parse logged raw responses offline, last HTTP 200 per job."""
    last: dict[str, dict] = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                rec = json.loads(line)
                if rec.get("status_code") == 200:
                    last[rec["job_id"]] = rec
    out = {}
    for job_id, rec in last.items():
        raw = rec["raw_response"]
        try:
            out[job_id] = AnnotationResult(parse_reply(_message_text(raw)), raw, "ok", rec["attempt"])
        except (ReplyParseError, json.JSONDecodeError, KeyError, IndexError, TypeError) as e:
            out[job_id] = AnnotationResult([], raw, "parse_failed", rec["attempt"], str(e))
    return out


def sample_for_review(items: Sequence, n: int, seed: int = 0) -> list:
    """Seeded random subset for manual quality review."""
    return random.Random(seed).sample(list(items), min(n, len(items)))
