"""Spectral analysis of Independence-of-Rankings social aggregators.

Library layout:

- perms: permutations, fixing subgroups, cosets, rank profiles
- basis: change of basis, the standard representation, projections
- aggregators: coset-valued rules, encodings, consistency
- laplacian: constraint operators, quadratic forms, spectra
- metrics: exact IR values, zero-locus census, manipulation power
- rounding: kernel distance, nearest-dictator recovery, diagnostics
- moments: exact moment calculus and hypercontractivity sweeps
- cli: JSON report front-end (`irlap spectra|census|analyze|moments`)
"""

__version__ = "0.1.0"
