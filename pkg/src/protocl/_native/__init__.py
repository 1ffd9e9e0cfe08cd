"""Compiled kernel extension; absence is tolerated (NumPy fallback)."""
