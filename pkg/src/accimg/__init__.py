"""Accessibility-constrained image generation toolkit.

Turns sentence-level text simplifications into constraint-checked image
prompts, batches them against pluggable generation backends, scores
text-image alignment, ranks prompt templates, and computes the full set of
expert-annotation statistics.
"""

__version__ = "0.1.0"
