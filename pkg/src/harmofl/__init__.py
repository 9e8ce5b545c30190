"""Federated learning with amplitude normalization and weight perturbation."""

__version__ = "0.1.0"
