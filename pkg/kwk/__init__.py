# KWK - Galerkin simulator for nonlinear absorbing acoustics
__version__ = "0.1.0"
