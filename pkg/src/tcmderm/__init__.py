"""Staged multimodal inference pipeline and evaluation framework for TCM dermatology."""

__version__ = "0.1.0"
