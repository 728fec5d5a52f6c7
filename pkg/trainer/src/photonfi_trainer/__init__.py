"""Training side of the simulator: produces SLWA weight archives."""

__version__ = "0.1.0"
