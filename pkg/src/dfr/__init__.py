"""Disguised face recognition from the geometry of 20 facial keypoints.

A small numpy CNN regresses keypoints, distance ratios and inter-line
angles between them form a feature vector, and a one-vs-one SVM names the
subject. Synthetic data, evaluation reports and a CLI are included.
"""
__version__ = "0.1.0"
