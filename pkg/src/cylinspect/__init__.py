"""Defect-detection toolkit for 3D-printed cylinder images.

Preprocessing variants (ROI selection, histogram equalization, detail
enhancement), a from-scratch CNN with a trainable two-class head,
training/evaluation with confusion-matrix metrics, complexity accounting,
and Grad-CAM / LIME explanations, all runnable at desk scale against a
built-in synthetic dataset generator.
"""

__version__ = "0.1.0"
