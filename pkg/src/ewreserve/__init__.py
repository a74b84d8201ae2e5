"""Online network resource reservation with long-term constraints."""

__version__ = "0.1.0"
