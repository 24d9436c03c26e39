"""
Unit tests for the zohfl package.
"""
