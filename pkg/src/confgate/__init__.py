"""Confidence-gated inference-time defenses against decision-based black-box attacks."""

__version__ = "0.1.0"
