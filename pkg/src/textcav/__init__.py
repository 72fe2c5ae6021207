"""Concept-based sensitivity analysis and Degree-of-Explicitness scoring for text classifiers."""

__version__ = "0.1.0"
