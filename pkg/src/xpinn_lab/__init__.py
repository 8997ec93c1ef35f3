"""PINN / XPINN training with posterior generalization-bound auditing."""
__version__ = "0.1.0"
