"""Tag importance measurement, prediction and importance-aware retrieval."""

__version__ = "0.1.0"
