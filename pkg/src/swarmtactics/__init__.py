"""Swarm tactics learning stack: map abstraction, mission simulator, trainers."""

__version__ = "0.1.0"
