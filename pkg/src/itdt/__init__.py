"""Defense pipeline for word-substitution attacks on a text classifier."""

__version__ = "0.1.0"
