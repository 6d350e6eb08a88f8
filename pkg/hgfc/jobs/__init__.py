"""
Trial pool package for experiment runs
"""
