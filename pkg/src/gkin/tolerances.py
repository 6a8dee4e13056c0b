"""Numerical tolerance constants used across the package.

Kept in one table so that every module (and every test) agrees on what
"exact" means in double precision.
"""

# Identities that are exact algebra up to rounding over ~10 flops
# (momentum conservation, energy identity, unit-norm checks).
EXACT_ALGEBRA_TOL = 1e-12

# Inverse-collision round trips chain two collision transformations and a
# division by alpha; allow an extra two digits.
ROUND_TRIP_TOL = 1e-10

# Angular kernel normalization and other deterministic quadratures.
QUADRATURE_TOL = 1e-8

# Floating-point slack when asserting analytic inequalities on random inputs.
INEQUALITY_SLACK = 1e-9
