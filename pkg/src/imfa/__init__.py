"""Index-modulated fluid-antenna (IM-FA) link simulator and analytical bounds."""

__version__ = "0.1.0"
