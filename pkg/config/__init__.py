"""Configuration module for hybrid-advection."""
