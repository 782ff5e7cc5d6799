"""Monte Carlo laboratory for EPR-B polarization experiments.

Contrasts the factorized (Bell-Ansatz) expectation with Bayes-conditional
analysis of simulated trial logs, and bundles the supporting pieces:
Malus-law detection, screening off, rotational invariance, a
continuous-variable variance criterion and a degenerate-perturbation toy.
"""

__version__ = "0.1.0"
