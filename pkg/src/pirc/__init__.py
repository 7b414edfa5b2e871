"""Model reference controllers and their parameter-independent realizations."""

__version__ = "0.1.0"
