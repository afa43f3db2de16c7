"""Band-scheduled cascade hashing image matching for large aerial collections."""

__version__ = "0.1.0"
