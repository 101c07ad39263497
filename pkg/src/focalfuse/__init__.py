"""Scheduled focal-loss training, late fusion and prevalence-weighted evaluation."""

__version__ = "0.1.0"
