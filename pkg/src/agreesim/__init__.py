"""Discrete-event simulation of agreement handshakes on an interfered 802.15.4 channel."""

__version__ = "0.1.0"
