"""Deterministic simulator for decentralized federated averaging over
complex network topologies."""

__version__ = "0.1.0"
