"""Dissipative preparation of injective tensor-network states.

Builds parent Hamiltonians, parent Lindbladians, and discrete-time Kraus
channels for injective PEPS/MPS on bounded-degree graphs, evolves density
matrices under both protocols, and verifies fixed-point uniqueness, spectral
gaps, and mixing-time scaling on dense desk-scale instances.
"""

__version__ = "0.1.0"
