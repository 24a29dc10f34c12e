"""Random walks in random environments on the strip Z x {1..m}."""

__version__ = "0.1.0"
