"""Bounded Bayesian optimisation of linear translation-model weights."""

__version__ = "0.1.0"
