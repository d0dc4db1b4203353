"""Two-view geometry estimation lab."""

__version__ = "0.1.0"
