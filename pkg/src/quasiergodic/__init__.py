"""Quasi-stationary and quasi-ergodic distributions of killed one-dimensional diffusions.

Submodules
----------
coeffs        scale function, speed measure and improper-integral verdicts
boundary      exit/entrance classification of 0 and infinity
spectral      finite-volume eigen-solver for the killed generator
distributions the measures nu_1 (quasi-ergodic) and nu_2 (quasi-stationary)
iu            ultracontractivity criterion in x and natural-scale coordinates
mc            killed-SDE Monte Carlo with counter-based random streams
verification  Monte Carlo versus spectral comparison suite
cli           command-line front end
"""
__version__ = "0.1.0"
