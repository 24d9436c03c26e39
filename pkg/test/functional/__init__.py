"""
Functional tests: CLI subprocess runs, determinism and slow convergence checks.
"""
