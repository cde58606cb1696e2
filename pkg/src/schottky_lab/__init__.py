"""Numerical laboratory for a free-group ping-pong action on the sphere.

Implements the model action of F2 by two loxodromic Mobius maps in Schottky
position, its Cantor minimal set, group-indexed pseudotrajectories with
shadowing-point search, orbit-realizing perturbations, and the constructive
semiconjugacy that witnesses C0-stability.
"""

__version__ = "0.1.0"
