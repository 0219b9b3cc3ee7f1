"""Align subtitles to continuous sign-language video."""

__version__ = "0.1.0"
