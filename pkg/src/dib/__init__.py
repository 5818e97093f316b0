"""Distributed information bottleneck: compress each input feature through
its own noisy channel, anneal the cost of transmitted bits, and read off
which features matter, how much, and in what ways."""

__version__ = "0.1.0"
