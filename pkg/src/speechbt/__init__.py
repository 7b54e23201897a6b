"""speechbt: quality-gated synthetic-speech training-data pipeline."""

__version__ = "0.1.0"
