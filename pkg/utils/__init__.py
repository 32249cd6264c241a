"""Utility functions for hybrid-advection reports."""
