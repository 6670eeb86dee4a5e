"""Device simulator: frame streams with scenarios and fault injection, plus a
synthetic labeled dataset used to certify that the classifier can learn."""
from __future__ import annotations

import logging
import math
import socket
import threading
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .datamodel import DoClass, SensorFrame, WaterSample
from .dataset import LabeledDataset, bin_do
from .protocol import encode_frame

log = logging.getLogger(__name__)

SCENARIOS = ("normal", "do_crash", "ph_drift")
DEFAULT_START_TIME = 1602998400  # 2020-10-18T00:00:00Z

# (temp, ph, tds, floc); centers of the synthetic classes, index = DoClass
CLUSTER_CENTERS = np.array([
    [33.0, 6.2, 7.0, 170.0],  # shallow
    [31.0, 6.7, 4.5, 110.0],  # low
    [29.0, 7.2, 2.5, 50.0],   # average
    [26.5, 7.7, 1.2, 15.0],   # high
])
CLUSTER_SPREAD = np.array([0.5, 0.08, 0.3, 8.0])
CLUSTER_DO_RANGES = ((1.0, 3.0), (3.0, 5.0), (5.0, 7.0), (7.0, 9.0))

# Normal operation: a bounded random walk around a typical tank reading.
BASELINE = np.array([29.0, 7.0, 1.5, 12.0])
WALK_STEP = np.array([0.1, 0.02, 0.02, 1.0])
BAND_LO = np.array([27.0, 6.6, 1.2, 5.0])
BAND_HI = np.array([31.0, 7.4, 1.9, 25.0])
PH_DRIFT_PER_FRAME = 0.02

# Replacement bytes for corruption: printable ASCII other than the field separator.
_FLIP_ALPHABET = bytes(b for b in range(0x21, 0x7F) if b != ord(","))


def gen_labeled(n: int, seed: int = 0) -> LabeledDataset:
    """``n`` samples in four Gaussian clusters, one per DO class, classes balanced to +-1."""
    if n < 8:
        raise ValueError("need n >= 8")
    rng = np.random.Generator(np.random.PCG64([seed, 17]))
    classes = np.arange(n) % 4
    rng.shuffle(classes)
    samples = []
    for c in classes:
        x = CLUSTER_CENTERS[c] + rng.normal(size=4) * CLUSTER_SPREAD
        lo, hi = CLUSTER_DO_RANGES[c]
        do = float(rng.uniform(lo, hi))
        samples.append(WaterSample(float(x[0]), float(x[1]), float(max(x[2], 0.0)), float(max(x[3], 0.0)), do))
    ds = LabeledDataset.from_samples(samples)
    assert all(bin_do(s.do_mg_l) == c for s, c in zip(ds.samples, classes))
    return ds


def centroid_class(features) -> DoClass:
    """Nearest documented cluster center, distances scaled by the cluster spread."""
    d = np.linalg.norm((np.asarray(features, dtype=np.float64) - CLUSTER_CENTERS) / CLUSTER_SPREAD, axis=1)
    return DoClass(int(np.argmin(d)))


def in_shallow_region(sample: WaterSample) -> bool:
    return centroid_class(sample.features()) == DoClass.SHALLOW


@dataclass(frozen=True)
class Scenario:
    kind: str = "normal"
    devices: int = 1
    rate: float = 1.0  # frames per second per device
    duration: float = 60.0  # seconds
    corrupt_prob: float = 0.0
    seed: int = 0
    start_time: int = DEFAULT_START_TIME
    crash_fraction: float = 0.25  # do_crash reaches the shallow center at this fraction of the run

    def __post_init__(self):
        if self.kind not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.kind!r}; choose from {SCENARIOS}")
        if not self.rate > 0 or not self.duration > 0 or self.devices < 1:
            raise ValueError("rate, duration and devices must be positive")
        if not 0 <= self.corrupt_prob <= 1:
            raise ValueError("corrupt_prob must be in [0, 1]")
        if not 0 < self.crash_fraction <= 1:
            raise ValueError("crash_fraction must be in (0, 1]")

    @property
    def frames_per_device(self) -> int:
        return max(1, round(self.rate * self.duration))


class DeviceStream:
    """Frame generator for one simulated device."""

    def __init__(self, scenario: Scenario, index: int = 0):
        self.scenario = scenario
        self.device_id = f"SIM-{index:02d}"
        self.rng = np.random.Generator(np.random.PCG64([scenario.seed, index]))
        self.state = BASELINE.copy()
        self.seq = 0
        self.last_sample: Optional[WaterSample] = None

    def _advance(self, i: int) -> np.ndarray:
        sc = self.scenario
        if sc.kind == "do_crash":
            ramp = max(1, round(sc.crash_fraction * sc.frames_per_device))
            f = min(1.0, i / ramp)
            return BASELINE + f * (CLUSTER_CENTERS[DoClass.SHALLOW] - BASELINE)
        step = self.rng.uniform(-WALK_STEP, WALK_STEP)
        x = self.state + step
        # reflect at band edges
        x = np.where(x > BAND_HI, 2 * BAND_HI - x, x)
        x = np.where(x < BAND_LO, 2 * BAND_LO - x, x)
        self.state = np.clip(x, BAND_LO, BAND_HI)
        x = self.state.copy()
        if sc.kind == "ph_drift":
            x[1] = min(14.0, BASELINE[1] + PH_DRIFT_PER_FRAME * i)
        return x

    def next_frame(self) -> str:
        sc = self.scenario
        i = self.seq
        self.seq += 1
        x = self._advance(i) if i else BASELINE.copy()
        x = np.round(x, 1) + 0.0
        sample = WaterSample(float(x[0]), float(x[1]), float(x[2]), float(x[3]))
        self.last_sample = sample
        frame = SensorFrame(self.device_id, self.seq, sc.start_time + math.floor(i / sc.rate), sample)
        line = encode_frame(frame)
        # drawn every frame so corrupt_prob does not perturb the readings
        u, pos_u, byte_u = self.rng.random(3)
        if u < sc.corrupt_prob:
            line = corrupt(line, pos_u, byte_u)
        return line


def corrupt(line: str, pos_u: float, byte_u: float) -> str:
    """Replace one non-separator payload byte by a different printable, non-comma byte.

    The field layout survives, so the frame fails on its checksum.
    """
    raw = bytearray(line.encode("ascii"))
    payload_len = raw.rstrip(b"\n").rfind(b",")
    positions = [i for i in range(payload_len) if raw[i] != ord(",")]
    pos = positions[min(int(pos_u * len(positions)), len(positions) - 1)]
    choices = _FLIP_ALPHABET.replace(bytes([raw[pos]]), b"")
    raw[pos] = choices[min(int(byte_u * len(choices)), len(choices) - 1)]
    return raw.decode("ascii")


def generate(scenario: Scenario) -> dict:
    """All lines of a scenario, keyed by device id, without any networking."""
    out = {}
    for d in range(scenario.devices):
        dev = DeviceStream(scenario, d)
        out[dev.device_id] = [dev.next_frame() for _ in range(scenario.frames_per_device)]
    return out


def parse_target(target: str):
    host, _, port = target.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"target must be host:port, got {target!r}")
    return host.strip("[]"), int(port)


def stream(scenario: Scenario, target: str, paced: bool = True, on_frame=None) -> int:
    """Send every device's frames to ``target`` over one TCP connection each.

    With ``paced`` frames go out at ``scenario.rate`` per second per device.
    Returns the number of lines sent.
    """
    host, port = parse_target(target)
    sent = [0] * scenario.devices
    errors = []

    def run(index: int):
        dev = DeviceStream(scenario, index)
        period = 1.0 / scenario.rate
        try:
            with socket.create_connection((host, port), timeout=10) as sock:
                t0 = time.monotonic()
                for k in range(scenario.frames_per_device):
                    if paced:
                        delay = t0 + k * period - time.monotonic()
                        if delay > 0:
                            time.sleep(delay)
                    line = dev.next_frame()
                    sock.sendall(line.encode("ascii"))
                    sent[index] += 1
                    if on_frame is not None:
                        on_frame(dev, line)
                sock.shutdown(socket.SHUT_WR)
                # wait for the server to close so every line is processed
                while sock.recv(4096):
                    pass
        except OSError as exc:
            log.error("device %s: %s", dev.device_id, exc)
            errors.append(exc)

    threads = [threading.Thread(target=run, args=(d,), daemon=True) for d in range(scenario.devices)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        raise errors[0]
    return sum(sent)
