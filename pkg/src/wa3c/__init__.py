"""Weighted actor-critic job scheduling on a discrete-tick cloud simulator."""

__version__ = "0.1.0"
