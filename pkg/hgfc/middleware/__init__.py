"""
Run context helpers
"""
