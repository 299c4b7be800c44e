"""Desk-scale numerics for the 2d directed polymer in random environment
on the intermediate disorder scale, and for the critical 2d stochastic
heat flow that emerges in the critical window.

Subpackages
-----------
walk        2d random walk kernel, n-step marginals, replica overlap
disorder    disorder laws, chaos variance, window selection, i.i.d. field
polymer     exact transfer-matrix partition functions for a fixed field
moments     renewal-representation second moments (deterministic)
dickman     Dickman subordinator density, Green's function, sampler
kernels     continuum covariance kernels and scaling identities
experiments Monte Carlo reproductions of the limit theorems
cli         command-line orchestration and file output
"""

__version__ = "0.1.0"
