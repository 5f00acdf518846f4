"""Tractography fiber classification with a stacked bidirectional LSTM."""

__version__ = "0.1.0"
