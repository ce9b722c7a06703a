"""
Architecture test package initialization.
"""
