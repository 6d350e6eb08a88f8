"""
CLI subcommands
"""
