"""speechbt_adapter: a worker speaking the speechbt.backend.v1 wire protocol."""

__version__ = "0.1.0"
