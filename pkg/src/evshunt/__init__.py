"""Dual-station EV charging simulator with price-based shunting and multi-agent Q-learning."""

__version__ = "0.1.0"
