"""Uplink scheduling simulator for dense user-centric cell-free massive MIMO."""

__version__ = "0.1.0"
