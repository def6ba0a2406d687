"""Two-stream differential transformer for cross-domain EEG/EOG sleep staging."""

__version__ = "0.1.0"
