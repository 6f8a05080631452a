"""Collision-avoidance model for rigid bodies in a fluid.

Narrow-band fast-marching distance fields on simplicial meshes, collision
detection for spherical, complex and articulated bodies, repulsive
lubrication forces and torques, and Newton-Euler rigid-body dynamics.
"""

__version__ = "0.1.0"
