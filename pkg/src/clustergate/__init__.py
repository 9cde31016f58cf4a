"""Cluster security policy engine: network policies, admission constraints, secrets vault."""

__version__ = "0.1.0"
