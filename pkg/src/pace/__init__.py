"""Architect-builder simulator in which a symbolic program library grows by
MDL-ranked abstractions and a bandit decides which abstractions the agents keep."""

__version__ = "0.1.0"
