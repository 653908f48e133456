"""Desk-scale fermionic stochastic calculus.

Exact Clifford-algebra arithmetic, discrete fermion Brownian motion with
Ito integrals, forward and backward quantum stochastic differential
equations, and Pontryagin-type optimality checks with a brute-force
oracle. See the README for a tour.
"""

from .algebra import (
    CliffordElement,
    MatrixRep,
    adjoint,
    cond_expect,
    even_part,
    generator,
    grading,
    identity,
    jw_rep,
    lp_norm,
    mul,
    norm2,
    odd_part,
    pairing,
    random_element,
    vacuum,
    zero,
)

__version__ = "0.1.0"
