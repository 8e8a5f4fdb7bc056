"""Deterministic rendezvous of two agents on labeled lines, paths, and cycles."""

__version__ = "0.1.0"
