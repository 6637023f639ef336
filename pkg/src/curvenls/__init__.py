"""Concentrated NLS profiles along closed curves in flat space.

Library + CLI that constructs the approximate concentrated solutions of
the semiclassical nonlinear Schrödinger equation along closed loops and
verifies every checkable identity in the construction: transverse ground
state and its scaling identities, profile relations and phase
quantization, the Euler and nondegeneracy conditions of the reduced curve
energy, the first-order corrections, and the eps-scaling of the exact
equation residual.
"""

__version__ = "0.1.0"
