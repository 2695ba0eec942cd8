"""Rain detection in surveillance video from streak orientation statistics."""

__version__ = "0.1.0"
