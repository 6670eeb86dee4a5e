"""TCP ingestion service: frames in, predictions persisted, advisories routed."""
from __future__ import annotations

import json
import logging
import os
import socket
import socketserver
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Union

from . import notify
from .datamodel import DoClass, FlocError, SensorFrame, Severity, U64_MAX, WaterSample
from .decision import RuleConfig, evaluate
from .nn import ModelError, load_model, predict
from .protocol import ProtocolError, encode_frame, parse_frame
from .simulator import parse_target

log = logging.getLogger(__name__)

CONFIG_ENV = "FLOC_CONFIG"

# widest frame with plausible readings; max_line may not go below this
LONGEST_FRAME = len(encode_frame(SensorFrame(
    "X" * 32, U64_MAX, U64_MAX, WaterSample(59.9, 14.0, 99999.9, 99999.99),
))) - 1


class ConfigError(FlocError, ValueError):
    pass


@dataclass(frozen=True)
class ServiceConfig:
    model: str
    store: str
    listen: str = "127.0.0.1:9750"
    sinks: tuple = (notify.SinkConfig("stdout"),)
    rules: RuleConfig = field(default_factory=RuleConfig)
    cooldown: float = 300.0
    max_line: int = 512

    def check(self) -> "ServiceConfig":
        if self.cooldown < 0:
            raise ConfigError("cooldown must be >= 0")
        if self.max_line < LONGEST_FRAME:
            raise ConfigError(f"max_line {self.max_line} is shorter than a legal frame ({LONGEST_FRAME})")
        try:
            parse_target(self.listen)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not self.sinks:
            raise ConfigError("at least one sink is required")
        for s in self.sinks:
            s.check()
        self.rules.check()
        return self

    @classmethod
    def from_dict(cls, doc: dict, base: Optional[Path] = None) -> "ServiceConfig":
        """Relative ``model``/``store``/file-sink paths resolve against ``base``."""
        doc = dict(doc)
        known = {"listen", "model", "store", "sinks", "rules", "cooldown", "max_line"}
        extra = set(doc) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        for key in ("model", "store"):
            if key not in doc:
                raise ConfigError(f"config needs {key!r}")

        def resolve(p):
            p = Path(p)
            return str(p if p.is_absolute() or base is None else base / p)

        sinks = []
        for s in doc.get("sinks", [{"kind": "stdout"}]):
            s = dict(s)
            if s.get("path"):
                s["path"] = resolve(s["path"])
            sinks.append(notify.SinkConfig.from_dict(s))
        kwargs = dict(
            model=resolve(doc["model"]),
            store=resolve(doc["store"]),
            sinks=tuple(sinks),
            rules=RuleConfig.from_dict(doc.get("rules", {})),
        )
        if "listen" in doc:
            kwargs["listen"] = str(doc["listen"])
        if "cooldown" in doc:
            kwargs["cooldown"] = float(doc["cooldown"])
        if "max_line" in doc:
            kwargs["max_line"] = int(doc["max_line"])
        return cls(**kwargs).check()

    @classmethod
    def load(cls, path=None) -> "ServiceConfig":
        path = path or os.environ.get(CONFIG_ENV)
        if not path:
            raise ConfigError(f"no config file given and ${CONFIG_ENV} is unset")
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(doc, path.parent)


@dataclass(frozen=True)
class ReadingRecord:
    received_at: float
    frame: SensorFrame
    predicted_class: DoClass
    probabilities: tuple
    severity: Severity
    alert_sent: bool

    def to_json(self) -> str:
        f, s = self.frame, self.frame.sample
        return json.dumps({
            "received_at": self.received_at,
            "device_id": f.device_id,
            "seq": f.seq,
            "timestamp": f.timestamp,
            "temp": s.temp,
            "ph": s.ph,
            "tds": s.tds,
            "floc": s.floc,
            "predicted_class": int(self.predicted_class),
            "class_label": self.predicted_class.label,
            "probabilities": list(self.probabilities),
            "severity": self.severity.label,
            "alert_sent": self.alert_sent,
        }, separators=(",", ":"))


@dataclass(frozen=True)
class Rejected:
    reason: str
    detail: str = ""


class ReadingStore:
    """Append-only JSONL file; each record goes out in a single write."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fd = os.open(self.path, os.O_WRONLY | os.O_APPEND | os.O_CREAT, 0o644)
        self._lock = threading.Lock()

    def append(self, record: ReadingRecord) -> None:
        data = (record.to_json() + "\n").encode("utf-8")
        with self._lock:
            if self._fd is None:
                raise OSError("store is closed")
            os.write(self._fd, data)

    def close(self) -> None:
        with self._lock:
            if self._fd is not None:
                os.fsync(self._fd)
                os.close(self._fd)
                self._fd = None


class Cooldown:
    """Per-(device, class) alert debounce."""

    def __init__(self, seconds: float):
        self.seconds = seconds
        self._last = {}
        self._lock = threading.Lock()

    def should_alert(self, device_id: str, cls, now: float) -> bool:
        key = (device_id, int(cls))
        with self._lock:
            last = self._last.get(key)
            if last is not None and now - last < self.seconds:
                return False
            self._last[key] = now
            return True


class Service:
    """Frame pipeline plus a threaded TCP front end.

    Cooldowns run on the frames' own timestamps, so replayed or simulated
    streams debounce the same way as live ones.
    """

    def __init__(self, config: ServiceConfig, model=None, sinks=None, clock: Callable[[], float] = time.time):
        self.config = config.check()
        self.model = model if model is not None else load_model(config.model)
        self.sinks = sinks if sinks is not None else [notify.build_sink(s) for s in config.sinks]
        self.store = ReadingStore(config.store)
        self.cooldown = Cooldown(config.cooldown)
        self.clock = clock
        self.accepted = 0
        self.alerts = 0
        self.rejected = Counter()
        self._stats_lock = threading.Lock()
        self._server = None
        self._thread = None
        self._conns = set()
        self._conns_lock = threading.Lock()

    def should_alert(self, device_id: str, cls, now: float) -> bool:
        return self.cooldown.should_alert(device_id, cls, now)

    def reject(self, reason: str, detail: str = "") -> Rejected:
        with self._stats_lock:
            self.rejected[reason] += 1
        log.info("rejected line (%s): %s", reason, detail)
        return Rejected(reason, detail)

    def handle_line(self, line: Union[str, bytes]) -> Union[ReadingRecord, Rejected]:
        try:
            frame = parse_frame(line)
        except ProtocolError as exc:
            return self.reject(exc.reason, str(exc))
        try:
            cls, probs = predict(self.model, frame.sample)
        except ModelError as exc:
            return self.reject("model_error", str(exc))
        advisory = evaluate(frame, cls, probs, self.config.rules)
        alert = advisory.severity >= Severity.WARNING and self.should_alert(frame.device_id, cls, frame.timestamp)
        record = ReadingRecord(self.clock(), frame, cls, advisory.probabilities, advisory.severity, alert)
        try:
            self.store.append(record)
        except OSError as exc:
            log.error("store write failed: %s", exc)
            return self.reject("store_error", str(exc))
        with self._stats_lock:
            self.accepted += 1
            self.alerts += alert
        if alert:
            report = notify.dispatch(advisory, self.sinks)
            for r in report.results:
                if not r.delivered:
                    log.warning("alert for %s not delivered to %s: %s", frame.device_id, r.sink, r.reason)
        return record

    def stats(self) -> dict:
        with self._stats_lock:
            return {"accepted": self.accepted, "alerts": self.alerts, "rejected": dict(self.rejected)}

    # -- networking ---------------------------------------------------------

    def _serve_connection(self, sock: socket.socket) -> None:
        limit = self.config.max_line
        with self._conns_lock:
            self._conns.add(sock)
        try:
            rfile = sock.makefile("rb")
            while True:
                line = rfile.readline(limit + 1)
                if not line:
                    break
                if len(line) > limit and not line.endswith(b"\n"):
                    while True:
                        rest = rfile.readline(limit + 1)
                        if not rest or rest.endswith(b"\n"):
                            break
                    self.reject("line_too_long", f"line exceeds {limit} bytes")
                    continue
                if not line.strip():
                    continue
                self.handle_line(line)
        except OSError as exc:
            log.debug("connection ended: %s", exc)
        finally:
            with self._conns_lock:
                self._conns.discard(sock)

    def start(self):
        """Bind and serve in a background thread; returns the bound (host, port)."""
        service = self

        class Handler(socketserver.BaseRequestHandler):
            def handle(self):
                service._serve_connection(self.request)

        host, port = parse_target(self.config.listen)
        server = socketserver.ThreadingTCPServer((host, port), Handler, bind_and_activate=False)
        server.allow_reuse_address = True
        server.daemon_threads = False
        server.block_on_close = True
        server.server_bind()
        server.server_activate()
        self._server = server
        self._thread = threading.Thread(target=server.serve_forever, kwargs={"poll_interval": 0.1}, daemon=True)
        self._thread.start()
        log.info("listening on %s:%d", *server.server_address[:2])
        return server.server_address[:2]

    def shutdown(self) -> None:
        """Stop accepting, end open connections, flush the store."""
        if self._server is not None:
            self._server.shutdown()
            with self._conns_lock:
                conns = list(self._conns)
            for c in conns:
                try:
                    c.shutdown(socket.SHUT_RDWR)
                except OSError:
                    pass
            self._server.server_close()  # joins handler threads
            self._server = None
        self.store.close()

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc):
        self.shutdown()
