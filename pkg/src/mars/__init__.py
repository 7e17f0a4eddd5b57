"""Budget-aware tree search with modular repositories and a shared lesson memory."""

__version__ = "0.1.0"
