from __future__ import annotations

import math

# Genus of the model surface and its Euler characteristic
GENUS = 2
EULER_CHAR = 2 - 2 * GENUS

# Total hyperbolic area, -2*pi*chi
SURFACE_AREA = -2.0 * math.pi * EULER_CHAR

# Regular octagon with interior angle pi/4
OCTAGON_INRADIUS = math.acosh(1.0 / math.tan(math.pi / 8))
OCTAGON_CIRCUMRADIUS = math.acosh(1.0 / math.tan(math.pi / 8) ** 2)

# Points closer than this to the unit circle are rejected
DISK_MARGIN = 1e-12

# Projective matrix comparison (relative to entry scale)
MATRIX_TOL = 1e-10

# |trace| at or below this is elliptic/parabolic
TRACE_CUTOFF = 2.0 + 1e-12

# Generator alphabet: lower case = generator, upper case = inverse
ALPHABET = "abcdABCD"
RELATION_WORD = "bCdaBcDA"

# Poincare-series exponents backing the three basis coefficients
BASIS_EXPONENTS = (0, 2, 4)

# Taylor representation of the truncated series
TAYLOR_RADIUS = 0.93
TAYLOR_TERMS = 1024
TAYLOR_VALID = 0.9

# Newton / PDE
NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 50
NU_FLOOR = 1e-300

# Mesh quality floor, degrees
MIN_ANGLE_DEG = 5.0
DET_FLOOR = 1e-14

# Foliation measures
BRANCH_FLOOR = 1e-12
GAUSS_POINTS = 8

# Second fundamental form denominator floor
II_DENOM_FLOOR = 1e-8

# Standard curve list: generators, two-letter products, commutators
STANDARD_CURVES = ("a", "b", "c", "d", "ab", "bc", "cd", "dB", "abAB", "bcBC", "cdCD", "daDA")

# Sup-norm comparisons avoid flat disks of this radius around zeros
ZERO_EXCLUSION = 0.2

# Energy identity actually used, and the stated variants it corrects
ENERGY_IDENTITY_NOTE = (
    "energy identity: stated as E = H + 4*pi*chi, derived in its proof as "
    "E = 2H + 4*pi*chi; rederivation from int J dA = -2*pi*chi gives "
    "E = 2H + 2*pi*chi (checked at Phi = 0: 4*pi = 8*pi - 4*pi). "
    "The corrected form E = 2H + 2*pi*chi is implemented and tested."
)
