"""Thin adapter between exported poisoned datasets and a real detector toolkit."""

__version__ = "0.1.0"

from .bridge import build_commands, convert_predictions, train_and_predict
from .config import BridgeConfig, BridgeError, default_epochs
