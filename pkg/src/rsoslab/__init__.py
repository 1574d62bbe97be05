"""Event-driven surface growth simulator and verification lab."""

__version__ = "0.1.0"
