"""Quadtree level-set advection with a learned semi-Lagrangian correction."""
