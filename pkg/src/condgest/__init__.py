"""Music-driven conducting gesture generation and retrieval-space evaluation."""

__version__ = "0.1.0"
