"""Bayesian disorder detection for networks of Markov-observing sensors with vote fusion."""

__version__ = "0.1.0"
