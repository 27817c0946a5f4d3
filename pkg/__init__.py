"""
fracfpe - fractional-derivative reduction and exact solutions of the
linear Fokker-Planck equation for Brownian particles
"""

__version__ = "1.0.0"
