"""Cleanup public-goods game platform: environment, agents, human sessions, metrics."""

__version__ = "0.1.0"

SCHEMA_VERSION = 1
