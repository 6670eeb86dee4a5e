"""Biofloc water-quality pipeline: wire protocol, DO classifier, advisories, alerts."""
from .datamodel import Advisory, DoClass, ModelParams, SensorFrame, Severity, WaterSample

__all__ = ["Advisory", "DoClass", "ModelParams", "SensorFrame", "Severity", "WaterSample"]
__version__ = "0.1.0"
