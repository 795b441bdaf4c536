"""Cross-or-wait, initiation time and duration prediction for pedestrians at unsignalized crossings."""
__version__ = "0.1.0"
