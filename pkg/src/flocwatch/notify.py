"""Advisory delivery to webhook, stdout and file sinks."""
from __future__ import annotations

import json
import logging
import os
import sys
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional
from urllib.parse import urlparse

import requests

from .datamodel import Advisory, FlocError

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SCHEMA_HEADER = "X-Floc-Schema"
SINK_KINDS = ("webhook", "stdout", "file")


class SinkConfigError(FlocError, ValueError):
    pass


@dataclass(frozen=True)
class SinkConfig:
    kind: str
    url: Optional[str] = None
    timeout: float = 5.0
    retries: int = 3
    backoff: float = 0.5
    path: Optional[str] = None

    def check(self) -> "SinkConfig":
        if self.kind not in SINK_KINDS:
            raise SinkConfigError(f"unknown sink kind {self.kind!r}")
        if self.retries < 0 or not self.timeout > 0 or self.backoff < 0:
            raise SinkConfigError("need retries >= 0, timeout > 0, backoff >= 0")
        if self.kind == "webhook":
            u = urlparse(self.url or "")
            if u.scheme not in ("http", "https") or not u.netloc:
                raise SinkConfigError(f"bad webhook URL {self.url!r}")
        if self.kind == "file" and not self.path:
            raise SinkConfigError("file sink needs a path")
        return self

    @classmethod
    def from_dict(cls, doc: dict) -> "SinkConfig":
        try:
            return cls(**doc).check()
        except TypeError as exc:
            raise SinkConfigError(str(exc)) from None


@dataclass
class SinkResult:
    sink: str
    delivered: bool
    attempts: int
    reason: Optional[str] = None


@dataclass
class DeliveryReport:
    results: list = field(default_factory=list)

    @property
    def delivered(self) -> bool:
        return any(r.delivered for r in self.results)

    @property
    def all_delivered(self) -> bool:
        return all(r.delivered for r in self.results)


def format_payload(advisory: Advisory) -> str:
    """Single-line JSON with a fixed key order (see docs/webhook.md)."""
    doc = {
        "schema_version": SCHEMA_VERSION,
        "device_id": advisory.device_id,
        "timestamp": advisory.timestamp,
        "predicted_class": int(advisory.predicted_class),
        "class_label": advisory.predicted_class.label,
        "probabilities": [float(p) for p in advisory.probabilities],
        "severity": advisory.severity.label,
        "actions": list(advisory.actions),
        "triggered_rules": list(advisory.triggered_rules),
    }
    return json.dumps(doc, separators=(",", ":"), allow_nan=False)


class WebhookSink:
    def __init__(self, config: SinkConfig, sleep: Callable[[float], None] = time.sleep, session=None):
        self.config = config.check()
        self.sleep = sleep
        self.session = session or requests  # module-level post: no shared pool across threads
        self.name = f"webhook:{config.url}"

    def deliver(self, payload: str) -> SinkResult:
        cfg = self.config
        headers = {"Content-Type": "application/json", SCHEMA_HEADER: str(SCHEMA_VERSION)}
        reason = None
        for attempt in range(1, cfg.retries + 2):
            try:
                r = self.session.post(cfg.url, data=payload.encode("utf-8"), headers=headers, timeout=cfg.timeout)
                if 200 <= r.status_code < 300:
                    return SinkResult(self.name, True, attempt)
                reason = f"HTTP {r.status_code}"
            except requests.RequestException as exc:
                reason = f"{type(exc).__name__}: {exc}"
            log.warning("webhook attempt %d/%d failed: %s", attempt, cfg.retries + 1, reason)
            if attempt <= cfg.retries:
                self.sleep(cfg.backoff * 2 ** (attempt - 1))
        return SinkResult(self.name, False, cfg.retries + 1, reason)


class StdoutSink:
    _lock = threading.Lock()

    def __init__(self, config: SinkConfig = SinkConfig("stdout"), stream=None):
        self.stream = stream
        self.name = "stdout"

    def deliver(self, payload: str) -> SinkResult:
        out = self.stream or sys.stdout
        with self._lock:
            out.write(payload + "\n")
            out.flush()
        return SinkResult(self.name, True, 1)


class FileSink:
    def __init__(self, config: SinkConfig):
        self.config = config.check()
        self.path = config.path
        self.name = f"file:{config.path}"
        self._lock = threading.Lock()

    def deliver(self, payload: str) -> SinkResult:
        data = (payload + "\n").encode("utf-8")
        with self._lock:
            fd = os.open(self.path, os.O_WRONLY | os.O_APPEND | os.O_CREAT, 0o644)
            try:
                os.write(fd, data)  # one write call: whole line or nothing
            finally:
                os.close(fd)
        return SinkResult(self.name, True, 1)


def build_sink(config: SinkConfig, **kwargs):
    config.check()
    if config.kind == "webhook":
        return WebhookSink(config, **kwargs)
    if config.kind == "stdout":
        return StdoutSink(config, **kwargs)
    return FileSink(config)


def dispatch(advisory: Advisory, sinks) -> DeliveryReport:
    """Deliver to every sink; failures are recorded, never raised."""
    if not sinks:
        raise SinkConfigError("no sinks configured")
    payload = format_payload(advisory)
    report = DeliveryReport()
    for sink in sinks:
        try:
            result = sink.deliver(payload)
        except Exception as exc:  # a broken sink must not stop the others
            log.exception("sink %s raised", getattr(sink, "name", sink))
            result = SinkResult(getattr(sink, "name", repr(sink)), False, 1, f"{type(exc).__name__}: {exc}")
        report.results.append(result)
    return report
