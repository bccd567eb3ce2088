"""Multiscale analysis of the bilayer honeycomb tight-binding model.

Submodules: ``model`` (lattice, hopping matrix, symmetries), ``linalg4``
(structured 4x4 algebra), ``fermi`` (Fermi points and their interaction
shift), ``regimes`` (regime classification and dominant propagators),
``multiscale`` (cutoffs, single-scale propagators, recursion), ``grassmann``
(finite Grassmann algebra oracle), ``trees`` (tree expansion and power
counting) and ``cli``.
"""
from .model import HoppingParams, Momentum3

__all__ = ["HoppingParams", "Momentum3"]
__version__ = "0.1.0"
