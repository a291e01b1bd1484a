"""Federated deep Q-learning for RIS-assisted multi-robot NOMA downlink."""

__version__ = "0.1.0"
