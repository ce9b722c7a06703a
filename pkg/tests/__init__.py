"""
Test suite for caddot.
"""
