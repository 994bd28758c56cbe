"""Small-signal stability of grids with droop-controlled grid-forming storage."""

__version__ = "0.1.0"
