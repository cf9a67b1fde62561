"""Hybrid LSTM and variational-circuit sketch recognition at desk scale."""

__version__ = "0.1.0"
