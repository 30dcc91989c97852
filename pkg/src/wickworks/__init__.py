"""wickworks: exact Wiener-chaos algebra and perturbative phi^4 expansions.

Modules
-------
polyalg     exact rational polynomials and the Hermite calculus
cumulants   convolution algebra, moment/cumulant maps, Wick map, Bell polynomials
pairings    matching enumeration and Isserlis-theorem oracles
chaos       finite-dimensional Fock space and chaos arithmetic
torusfield  spectral Gaussian fields on the torus and exact lattice sums
feynman     diagram enumeration, valuation, power counting, BPHZ
phi4        partition-function expansions, counterterms, Monte Carlo checks
cli         command-line interface
"""

__version__ = "0.1.0"
