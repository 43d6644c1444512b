"""Chain-of-Abstraction runtime."""

__version__ = "0.1.0"
