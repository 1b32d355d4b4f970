"""Offline decoding of grasp type from EEG epochs.

Two feature pipelines (CSP + wavelet log-variance, and Riemannian tangent
space / minimum distance to mean), six binary classifiers, cross-validated
evaluation with electrode ablation, rank statistics, a synthetic session
generator and a prosthesis command encoder.
"""
from .data import EpochSet, Label, SessionMeta, load_epochs, save_epochs

__version__ = "0.1.0"

__all__ = ["EpochSet", "Label", "SessionMeta", "load_epochs", "save_epochs", "__version__"]
