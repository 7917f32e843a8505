"""Incremental-stability LPV control toolkit."""
