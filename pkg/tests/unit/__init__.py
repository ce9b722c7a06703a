"""
Unit test package initialization.

This __init__.py file marks the unit tests directory as a Python package.
"""
