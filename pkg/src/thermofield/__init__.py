"""Thermofield: finite-dimensional models of a small quantum system coupled to a
bosonic heat bath, in the glued (thermofield double) representation.

Modules: ``model`` (couplings, thermal weights), ``fock`` (truncated Fock
space), ``liouvillian`` (L0, I, N), ``kms`` (equilibrium vectors),
``spectral`` (level shift, virial, positive commutators), ``dynamics``
(real-time evolution), ``dyson`` (finite-volume Wick/Dyson bounds),
``cli`` (experiment driver).
"""
__version__ = "0.1.0"
