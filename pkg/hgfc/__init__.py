"""
Online scheduling for generalized fractional completion time
"""

__version__ = "0.1.0"
