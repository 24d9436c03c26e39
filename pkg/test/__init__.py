"""
Test package for zohfl.

Unit tests live in test/unit; end-to-end and long convergence checks in test/functional.
"""
