"""
Integration test package initialization.

This __init__.py file marks the integration tests directory as a Python package.
"""
