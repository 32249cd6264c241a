"""Test suite for hybrid-advection."""
