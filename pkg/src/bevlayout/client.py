"""Batch client for OpenAI-compatible ``/v1/chat/completions`` endpoints.

Requests run in a bounded thread pool. Each QA item yields exactly one
record; failures are recorded, not raised. With an output path the run is
resumable: items already answered there are not queried again, and the file
is rewritten in input order at the end. Latency is kept in memory and logs
only, so reruns produce byte-identical files.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import mimetypes
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import httpx

from .qa import QAPair

log = logging.getLogger(__name__)

ENV_BASE_URL = "OPENAI_BASE_URL"
ENV_API_KEY = "OPENAI_API_KEY"

DEFAULT_TEMPLATE = (
    "{question}\n\n"
    "Reply in the form <map>[...]</map><think>...</think><answer>...</answer>. "
    "The map is a JSON list of {{\"label\", \"bbox\": [xmin, ymin, xmax, ymax]}} in meters, "
    "with you at the origin facing +y."
)


class ClientConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ClientConfig:
    base_url: str
    model_name: str
    api_key: str = field(default="", repr=False)
    temperature: float = 0.01
    max_output_tokens: int = 2048
    max_parallel: int = 4
    max_attempts: int = 3
    backoff_base: float = 1.0
    timeout: float = 300.0

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ClientConfigError("temperature must be >= 0")
        if self.max_parallel < 1 or self.max_attempts < 1:
            raise ClientConfigError("max_parallel and max_attempts must be >= 1")

    @classmethod
    def from_env(cls, model_name: str, **overrides) -> ClientConfig:
        base_url = overrides.pop("base_url", None) or os.environ.get(ENV_BASE_URL, "")
        return cls(base_url=base_url, model_name=model_name, api_key=os.environ.get(ENV_API_KEY, ""), **overrides)

    @property
    def endpoint(self) -> str:
        url = self.base_url.rstrip("/")
        if url.endswith("/chat/completions"):
            return url
        if not url.endswith("/v1"):
            url += "/v1"
        return url + "/chat/completions"


@dataclass
class QueryRecord:
    qa_id: str
    prompt: str
    images: list[str]
    raw: str = ""
    latency: float = 0.0
    status: str = "ok"  # "ok" or "failed"
    reason: str = ""

    def to_line(self) -> str:
        d = {"qa_id": self.qa_id, "raw": self.raw, "status": self.status}
        if self.reason:
            d["reason"] = self.reason
        return json.dumps(d) + "\n"


def image_refs(qa: QAPair, pattern: str | None) -> list[str]:
    """Expand ``pattern`` (``{scene_id}``, ``{frame}``) for each frame of the sequence."""
    if not pattern:
        return []
    return [pattern.format(scene_id=qa.scene_id, frame=f) for f in qa.sequence.frame_indices]


def _image_part(ref: str) -> dict:
    if ref.startswith(("http://", "https://", "data:")):
        url = ref
    else:
        mime = mimetypes.guess_type(ref)[0] or "image/jpeg"
        url = f"data:{mime};base64," + base64.b64encode(Path(ref).read_bytes()).decode("ascii")
    return {"type": "image_url", "image_url": {"url": url}}


def build_payload(prompt: str, images: Sequence[str], cfg: ClientConfig) -> dict:
    content = [_image_part(r) for r in images] + [{"type": "text", "text": prompt}]
    return {
        "model": cfg.model_name,
        "messages": [{"role": "user", "content": content}],
        "temperature": cfg.temperature,
        "max_tokens": cfg.max_output_tokens,
    }


def dry_run_response(prompt: str, images: Sequence[str]) -> str:
    digest = hashlib.sha256("\n".join([prompt, *images]).encode()).hexdigest()[:16]
    return f"<map></map><think>dry-run {digest}</think><answer>A</answer>"


def _query_one(http: httpx.Client, rec: QueryRecord, cfg: ClientConfig) -> QueryRecord:
    headers = {"Authorization": f"Bearer {cfg.api_key}"} if cfg.api_key else {}
    try:
        payload = build_payload(rec.prompt, rec.images, cfg)
    except OSError as exc:
        rec.status, rec.reason = "failed", f"image: {exc.strerror or exc}"
        return rec
    start = time.monotonic()
    reason = "max retries"
    for attempt in range(1, cfg.max_attempts + 1):
        try:
            resp = http.post(cfg.endpoint, json=payload, headers=headers)
        except httpx.HTTPError as exc:
            log.warning("%s: attempt %d transport error: %s", rec.qa_id, attempt, type(exc).__name__)
        else:
            if resp.status_code == 200:
                try:
                    text = resp.json()["choices"][0]["message"]["content"] or ""
                except (ValueError, KeyError, IndexError, TypeError):
                    rec.status, rec.reason = "failed", "malformed response"
                    break
                if text:
                    rec.raw, rec.status, rec.reason = text, "ok", ""
                else:
                    rec.status, rec.reason = "failed", "empty response"
                break
            if resp.status_code < 500 and resp.status_code != 429:
                rec.status, rec.reason = "failed", f"http {resp.status_code}"
                break
            log.warning("%s: attempt %d got HTTP %d", rec.qa_id, attempt, resp.status_code)
        if attempt < cfg.max_attempts:
            time.sleep(cfg.backoff_base * 2 ** (attempt - 1))
    else:
        rec.status, rec.reason = "failed", reason
    rec.latency = time.monotonic() - start
    log.info("%s: %s in %.2fs", rec.qa_id, rec.status, rec.latency)
    return rec


def _read_done(path: Path) -> dict[str, str]:
    """Successful lines already in ``path``, keyed by qa_id."""
    done: dict[str, str] = {}
    if not path.exists():
        return done
    for line in path.read_text().splitlines():
        try:
            d = json.loads(line)
        except json.JSONDecodeError:
            continue  # torn final line from an interrupted run
        if d.get("status", "ok") == "ok" and d.get("raw"):
            done[d["qa_id"]] = line + "\n"
    return done


def run_batch(
    qa: Sequence[QAPair],
    cfg: ClientConfig,
    prompt_template: str = DEFAULT_TEMPLATE,
    *,
    out_path: str | os.PathLike | None = None,
    dry_run: bool = False,
    image_pattern: str | None = None,
) -> list[QueryRecord]:
    """Query the endpoint once per QA item, in input order.

    Previously failed items in ``out_path`` are retried; successful ones are
    kept verbatim.
    """
    if not dry_run and not cfg.base_url:
        raise ClientConfigError(f"no endpoint: set {ENV_BASE_URL} or pass base_url")
    path = Path(out_path) if out_path is not None else None
    done = _read_done(path) if path is not None else {}

    records = [
        QueryRecord(q.qa_id, prompt_template.format(question=q.prompt_text()), image_refs(q, image_pattern))
        for q in qa
    ]
    todo = [r for r in records if r.qa_id not in done]
    for r in records:
        if r.qa_id in done:
            d = json.loads(done[r.qa_id])
            r.raw = d["raw"]

    lock = threading.Lock()
    sink = path.open("a") if path is not None else None

    def finish(rec: QueryRecord) -> QueryRecord:
        if sink is not None:
            with lock:
                sink.write(rec.to_line())
                sink.flush()
        return rec

    try:
        if dry_run:
            for r in todo:
                r.raw = dry_run_response(r.prompt, r.images)
                finish(r)
        elif todo:
            limits = httpx.Limits(max_connections=cfg.max_parallel)
            with httpx.Client(timeout=cfg.timeout, limits=limits) as http:
                with ThreadPoolExecutor(max_workers=cfg.max_parallel) as pool:
                    list(pool.map(lambda r: finish(_query_one(http, r, cfg)), todo))
    finally:
        if sink is not None:
            sink.close()

    if path is not None:
        lines = [done.get(r.qa_id) or r.to_line() for r in records]
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text("".join(lines))
        tmp.replace(path)
    return records
