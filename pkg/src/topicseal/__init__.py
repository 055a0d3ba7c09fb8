"""Many-to-many end-to-end encryption for publish/subscribe topic streams."""

__version__ = "0.1.0"
