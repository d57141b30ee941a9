"""Very singular solutions for heat equations with position-dependent absorption."""
__version__ = "0.1.0"
