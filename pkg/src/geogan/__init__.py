"""Satellite-to-map translation lab"""

__version__ = "0.1.0"
