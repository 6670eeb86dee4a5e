"""Rule table turning a classified reading into an Advisory."""
from __future__ import annotations

from dataclasses import dataclass, field

from .datamodel import Advisory, DoClass, FlocError, SensorFrame, Severity

NO_ACTION = "no action required"

DEFAULT_ACTIONS = {
    "do_low": "increase aeration",
    "floc_high": "filter out excess bioflocs",
    "ph_low": "raise pH with baking soda in a safe amount",
    "ph_high": "partial water exchange; move fish before adjusting pH",
    "temp_range": "adjust tank temperature",
}

DEFAULT_CLASS_SEVERITY = {
    DoClass.SHALLOW: Severity.CRITICAL,
    DoClass.LOW: Severity.WARNING,
    DoClass.AVERAGE: Severity.INFO,
    DoClass.HIGH: Severity.INFO,
}


class InvalidConfig(FlocError, ValueError):
    pass


@dataclass(frozen=True)
class RuleConfig:
    ph_range: tuple = (6.5, 8.5)
    temp_range: tuple = (25.0, 32.0)
    floc_max: float = 100.0
    class_severity: dict = field(default_factory=lambda: dict(DEFAULT_CLASS_SEVERITY))
    actions: dict = field(default_factory=lambda: dict(DEFAULT_ACTIONS))

    def check(self) -> "RuleConfig":
        for name in ("ph_range", "temp_range"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise InvalidConfig(f"{name}: min {lo} must be < max {hi}")
        if not self.floc_max >= 0:
            raise InvalidConfig("floc_max must be >= 0")
        missing = [c for c in DoClass if c not in self.class_severity]
        if missing:
            raise InvalidConfig(f"no severity for classes {[c.label for c in missing]}")
        sev = [self.class_severity[c] for c in DoClass]
        if any(a < b for a, b in zip(sev, sev[1:])):
            raise InvalidConfig("class severities must not increase with DO class")
        unknown = set(DEFAULT_ACTIONS) - set(self.actions)
        if unknown:
            raise InvalidConfig(f"no action text for rules {sorted(unknown)}")
        return self

    @classmethod
    def from_dict(cls, doc: dict) -> "RuleConfig":
        """Build from the ``rules`` section of a service config file."""
        doc = dict(doc or {})
        known = {"ph_range", "temp_range", "floc_max", "class_severity", "actions"}
        extra = set(doc) - known
        if extra:
            raise InvalidConfig(f"unknown rule keys {sorted(extra)}")
        kwargs = {}
        try:
            for key in ("ph_range", "temp_range"):
                if key in doc:
                    lo, hi = doc[key]
                    kwargs[key] = (float(lo), float(hi))
            if "floc_max" in doc:
                kwargs["floc_max"] = float(doc["floc_max"])
            if "class_severity" in doc:
                sev = dict(DEFAULT_CLASS_SEVERITY)
                for k, v in doc["class_severity"].items():
                    sev[DoClass(int(k))] = Severity.parse(v)
                kwargs["class_severity"] = sev
            if "actions" in doc:
                kwargs["actions"] = {**DEFAULT_ACTIONS, **doc["actions"]}
        except (TypeError, ValueError) as exc:
            raise InvalidConfig(str(exc)) from None
        return cls(**kwargs).check()


def evaluate(frame: SensorFrame, predicted: DoClass, probabilities, config: RuleConfig = RuleConfig()) -> Advisory:
    config.check()
    predicted = DoClass(predicted)
    s = frame.sample
    fired = []
    if predicted in (DoClass.SHALLOW, DoClass.LOW):
        fired.append("do_low")
    if s.floc > config.floc_max:
        fired.append("floc_high")
    if s.ph < config.ph_range[0]:
        fired.append("ph_low")
    elif s.ph > config.ph_range[1]:
        fired.append("ph_high")
    if not config.temp_range[0] <= s.temp <= config.temp_range[1]:
        fired.append("temp_range")

    severity = config.class_severity[predicted]
    if any(r != "do_low" for r in fired):
        severity = max(severity, Severity.WARNING)
    actions = tuple(config.actions[r] for r in fired) or (NO_ACTION,)
    return Advisory(
        device_id=frame.device_id,
        timestamp=frame.timestamp,
        predicted_class=predicted,
        probabilities=tuple(float(p) for p in probabilities),
        severity=severity,
        actions=actions,
        triggered_rules=tuple(fired),
    ).validate()
