"""Rendezvous-aware multi-robot task allocation and epistemic online replanning."""

__version__ = "0.1.0"
