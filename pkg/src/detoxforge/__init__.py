"""detoxforge: cross-platform text detoxification pipeline and evaluation harness."""

__version__ = "0.1.0"
