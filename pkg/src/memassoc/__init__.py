"""Associative memories with adaptive learning rules on emulated memristor crossbars."""

__version__ = "0.1.0"
