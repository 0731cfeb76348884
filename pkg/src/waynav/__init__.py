"""Training-free language -> vision -> robot-action navigation engine on synthetic worlds."""

__version__ = "0.1.0"
