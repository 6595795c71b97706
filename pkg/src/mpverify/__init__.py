"""Multi-passage reading comprehension with cross-passage answer verification."""

__version__ = "0.1.0"
