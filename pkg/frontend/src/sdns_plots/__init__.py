"""Figure generation for sdns experiment CSVs; derived artifacts only."""

__version__ = "0.1.0"
