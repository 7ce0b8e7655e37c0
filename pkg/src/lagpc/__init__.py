"""Design and simulation toolkit for precoded cognitive links over Rician fading."""

__version__ = "0.1.0"
