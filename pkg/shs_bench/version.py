"""Version information for shs-adversarial-bench."""

__version__ = "0.1.0"
