"""Constraint operators on rankings and their spectra.

For each alternative j, X^j connects rankings that agree on j's rank
(X^j[x, y] = 1 iff x^-1(j) = y^-1(j)), Y^j = (m-1)! I - X^j is the
graph Laplacian of that relation, and D^j = C_j^T C_j localizes the
value side to alternative j.  Three quadratic forms measure violated
rank-independence constraints:

    L'  = sum_j X^j (x) complement(X^j)     (indicator encoding F)
    L'' = sum_j Y^j (x) X^j                 (indicator encoding F)
    L   = sum_j Y^j (x) D^j                 (matrix encoding G)

and the n-voter operator applies the one-voter form per voter
coordinate.

Normalization.  The canonical IR value is the ordered-pair expectation

    IR(f) = sum_{i,j} E_{x^-i, x_i, y_i}
            [x_i^-1(j) = y_i^-1(j)] * || Delta j-profile ||_2^2

Raw form values convert to it by a constant fixed per variant:

    IR = 2 * raw(L) / m!^(n+1) = 2 * raw(L'') / m!^(n+1)
    IR = 2 * (raw(L') - offset) / m!^(n+1),
    offset = n * m!^n * (m-1)! * (m - #blocks(H))

The factor 2 converts the Laplacian's unordered edge sum into the
ordered-pair expectation.  The L' offset is the rank-disagreement mass
between members of one coset; it vanishes only when cosets are
singletons.  These constants are asserted against the exhaustive
rational oracle on random aggregators (calibrate_kappa), never
assumed.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import factorial

import numpy as np

from ._util import FeasibilityError
from .aggregators import Aggregator, GEncoding, encode_g
from .basis import Basis, Rho1Table, build_basis, rho1_table
from .perms import enumerate_group, perm_index, rank_of

DENSE_LIMIT = 5000
LN_BUDGET = 2 * 10**8  # bound on n * m * (m!)^(n+1)
QF_BUDGET = 5 * 10**9  # bound on n * m * (m!)^(n+2)
PSD_TOL = 1e-9
CLUSTER_TOL = 1e-7


@dataclass
class LaplacianBundle:
    """Dense one-voter operators; memory is about m * (m!)^2 bytes, so
    construction refuses m > 7."""

    m: int
    basis: Basis
    X: np.ndarray  # (m, m!, m!) uint8
    Y: np.ndarray  # (m, m!, m!) int64
    D: np.ndarray  # (m, m-1, m-1)
    rank_classes: list  # rank_classes[j-1][r-1] = perm indices with x^-1(j) = r

    def check(self) -> None:
        m = self.m
        for j in range(m):
            Xj = self.X[j]
            assert (Xj == Xj.T).all()
            assert (Xj.sum(axis=1) == factorial(m - 1)).all()
            assert (np.diag(Xj) == 1).all()
        assert np.abs(self.D.sum(axis=0) - np.eye(m - 1)).max() < 1e-12
        for j in range(m):
            eig = np.linalg.eigvalsh(self.Y[j].astype(float))
            assert eig.min() > -PSD_TOL


def build_one_voter(m: int, basis: Basis | None = None) -> LaplacianBundle:
    if m > 7:
        raise FeasibilityError(
            f"dense one-voter bundle for m={m} needs ~{m * factorial(m)**2 / 1e9:.1f} GB",
            estimate=f"{m}*({m}!)^2 bytes",
        )
    basis = basis if basis is not None else build_basis(m)
    perms = enumerate_group(m)
    fact = len(perms)
    X = np.empty((m, fact, fact), dtype=np.uint8)
    rank_classes = []
    for j in range(1, m + 1):
        ranks = np.array([rank_of(x, j) for x in perms])
        X[j - 1] = (ranks[:, None] == ranks[None, :]).astype(np.uint8)
        rank_classes.append([np.nonzero(ranks == r)[0] for r in range(1, m + 1)])
    Y = factorial(m - 1) * np.eye(fact, dtype=np.int64)[None, :, :] - X.astype(np.int64)
    D = np.einsum("jk,jl->jkl", basis.C, basis.C)
    return LaplacianBundle(m, basis, X, Y, D, rank_classes)


@dataclass
class HatL1System:
    """The rho1-isotypic block of the one-voter operator, with its
    three exact eigenspaces {0, 1/(m(m-1)), 1/m} of dimensions
    {1, m-1, (m-1)^2 - m}."""

    m: int
    matrix: np.ndarray
    eigenvalues: np.ndarray
    clusters: list  # [(value, multiplicity)]
    U0: np.ndarray
    U1: np.ndarray
    U2: np.ndarray
    E: np.ndarray
    EEt_residual: float


def cluster_eigenvalues(eigvals: np.ndarray, tol: float = CLUSTER_TOL) -> list:
    clusters: list[list[float]] = []
    for v in np.sort(eigvals):
        if clusters and abs(v - clusters[-1][-1]) <= tol:
            clusters[-1].append(v)
        else:
            clusters.append([v])
    return [(float(np.mean(c)), len(c)) for c in clusters]


def hat_l1(m: int, basis: Basis | None = None) -> HatL1System:
    if m < 3:
        raise ValueError("hat_l1 requires m >= 3 (the m=2 block is degenerate)")
    basis = basis if basis is not None else build_basis(m)
    d = m - 1
    E = np.array([np.kron(basis.C[j], basis.C[j]) for j in range(m)])  # m x d^2
    EEt = E @ E.T
    target = ((m - 2) / m) * np.eye(m) + np.full((m, m), 1.0 / m**2)
    eet_residual = float(np.abs(EEt - target).max())
    hat = (((d / m) * np.eye(d * d)) - E.T @ E) / d
    eigvals, eigvecs = np.linalg.eigh(hat)
    clusters = cluster_eigenvalues(eigvals)
    if [mult for _, mult in clusters] != [1, m - 1, d * d - m]:
        raise AssertionError(f"unexpected hat-L(1) multiplicities: {clusters}")
    U1 = eigvecs[:, 1:m]
    U2 = eigvecs[:, m:]
    # scale U0 so that, read as a (m-1)x(m-1) matrix, it is the identity
    v0 = eigvecs[:, 0]
    scale = float(np.eye(d).reshape(-1) @ v0)
    U0 = v0 * (d / scale)
    return HatL1System(m, hat, eigvals, clusters, U0, U1, U2, E, eet_residual)


# ---------------------------------------------------------------------------
# Quadratic forms


def _voter_slabs(table: np.ndarray, i: int, n: int, fact: int) -> np.ndarray:
    """View a per-profile array as (m!^(n-1), m!) with voter i
    (1-based) as the fast axis."""
    shaped = table.reshape((fact,) * n)
    return np.moveaxis(shaped, i - 1, -1).reshape(-1, fact)


def kappa(variant: str, m: int, n: int) -> Fraction:
    if variant not in ("L", "L1", "L2"):
        raise ValueError(f"unknown variant {variant!r}")
    return Fraction(2, factorial(m) ** (n + 1))


def lprime_offset(m: int, n: int, H) -> Fraction:
    """Constant rank-disagreement mass inside single cosets, present in
    the L' form even for IR functions."""
    return Fraction(n * factorial(m) ** n * factorial(m - 1) * (m - H.block_count))


@dataclass
class QuadraticFormValue:
    variant: str
    raw: Fraction | float
    canonical: Fraction | float


def _membership_matrix(H) -> np.ndarray:
    Mem = np.zeros((len(H.cosets), factorial(H.m)), dtype=np.int64)
    for c, coset in enumerate(H.cosets):
        for y in coset.members:
            Mem[c, perm_index(y)] = 1
    return Mem


def apply_quadratic_form(agg: Aggregator, bundle: LaplacianBundle, variant: str,
                         table: Rho1Table | None = None) -> QuadraticFormValue:
    """Evaluate one of the three forms on an aggregator, summed over
    single-voter switches.  "L1" (X (x) complement X) and "L2"
    (Y (x) X) run on the coset-indicator encoding in exact integer
    arithmetic; "L" (Y (x) D) runs on the matrix encoding in floats.
    """
    m, n, H = agg.m, agg.n, agg.H
    fact = factorial(m)
    if n * m * fact ** (n + 2) > QF_BUDGET:
        raise FeasibilityError(
            f"dense quadratic form infeasible for m={m}, n={n}",
            estimate=f"{n}*{m}*({fact})^{n + 2} operations",
        )

    if variant == "L":
        enc = encode_g(agg, table if table is not None else rho1_table(m))
        raw = 0.0
        for i in range(1, n + 1):
            slabs = _voter_slabs(np.arange(fact**n), i, n, fact)
            for j in range(m):
                Yj = bundle.Y[j].astype(float)
                Dj = bundle.D[j]
                for row in slabs:
                    G = enc.g[row]  # (m!, d, d)
                    W = np.einsum("xkl,lt->xkt", G, Dj)
                    raw += float(np.einsum("xkt,xy,ykt->", W, Yj, G))
        return QuadraticFormValue("L", raw, float(kappa("L", m, n)) * raw)

    h = H.order
    ncos = len(H.cosets)
    Mem = _membership_matrix(H)
    total = 0
    for j in range(m):
        Xj = bundle.X[j].astype(np.int64)
        agree = Mem @ Xj @ Mem.T  # same-rank member pairs between cosets
        pair = h * h - agree if variant == "L1" else agree
        pair_diag = np.diag(pair).copy()
        for i in range(1, n + 1):
            slabs = _voter_slabs(agg.table, i, n, fact)
            for row in slabs:
                if variant == "L1":
                    for cls in bundle.rank_classes[j]:
                        cc = np.bincount(row[cls], minlength=ncos)
                        total += int(cc @ pair @ cc)
                else:
                    counts = np.bincount(row, minlength=ncos)
                    total += factorial(m - 1) * int(counts @ pair_diag)
                    for cls in bundle.rank_classes[j]:
                        cc = np.bincount(row[cls], minlength=ncos)
                        total -= int(cc @ pair @ cc)
    raw = Fraction(total, h * h)
    if variant == "L1":
        canonical = kappa("L1", m, n) * (raw - lprime_offset(m, n, H))
    else:
        canonical = kappa("L2", m, n) * raw
    return QuadraticFormValue(variant, raw, canonical)


def _class_sum_form(values: np.ndarray, m: int, n: int, C: np.ndarray) -> float:
    """tr(G L^n G^T) for a matrix- or row-valued encoding, via the
    per-class identity: the Y (x) D form on one rank class equals
    (m-1)! sum_a ||v_a||^2 - ||sum_a v_a||^2 with v_a = C_j g(a)^T."""
    fact = factorial(m)
    perms = enumerate_group(m)
    ranks = np.array([[rank_of(x, j) for x in perms] for j in range(1, m + 1)])
    v = np.einsum("jl,xkl->jxk", C, values)
    norms = np.einsum("jxk,jxk->jx", v, v)
    raw = 0.0
    for i in range(1, n + 1):
        slab_index = _voter_slabs(np.arange(fact**n, dtype=np.int64), i, n, fact)
        for j in range(m):
            for r in range(1, m + 1):
                cls = np.nonzero(ranks[j] == r)[0]
                rows = slab_index[:, cls]  # (slabs, (m-1)!)
                vals = v[j][rows]
                k = rows.shape[1]
                sums = vals.sum(axis=1)
                raw += float(k * norms[j][rows].sum() - np.einsum("sk,sk->", sums, sums))
    return raw


def apply_Ln(enc: GEncoding, basis: Basis | None = None,
             budget: int = LN_BUDGET) -> float:
    """Canonical IR value from the matrix encoding, matrix-free: the
    n-voter operator is never materialized."""
    m, n = enc.m, enc.n
    fact = factorial(m)
    cost = n * m * fact ** (n + 1)
    if cost > budget:
        raise FeasibilityError(
            f"apply_Ln budget exceeded: n*m*(m!)^(n+1) = {cost:.2e} > {budget:.0e}",
            estimate=f"{cost:.2e}",
        )
    basis = basis if basis is not None else build_basis(m)
    raw = _class_sum_form(enc.g, m, n, basis.C)
    return float(2 * raw / fact ** (n + 1))


def calibrate_kappa(variant: str, m: int, n: int, H, bundle: LaplacianBundle,
                    trials: int = 5, seed: int = 0) -> list:
    """Measure canonical-IR / raw-form ratios on random aggregators.
    All ratios must equal kappa(variant) (after the L' offset); tests
    assert exactly that."""
    from .aggregators import random_aggregator
    from .metrics import ir_combinatorial

    rng = np.random.default_rng(seed)
    ratios = []
    for _ in range(trials):
        agg = random_aggregator(m, n, H, rng)
        oracle = ir_combinatorial(agg, with_quadratic=False).profile_distance
        qf = apply_quadratic_form(agg, bundle, variant)
        raw = qf.raw - lprime_offset(m, n, H) if variant == "L1" else qf.raw
        if raw == 0:
            continue
        ratios.append(oracle / raw if isinstance(raw, Fraction) else float(oracle) / raw)
    return ratios


# ---------------------------------------------------------------------------
# Spectra


@dataclass
class SpectralReport:
    m: int
    n: int
    normalization: str
    dim: int
    exhaustive: bool
    gap: float
    min_eigenvalue: float
    clusters: list | None  # [(value, multiplicity)] on the dense path
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "n": self.n,
            "normalization": self.normalization,
            "dim": self.dim,
            "exhaustive": self.exhaustive,
            "gap": self.gap,
            "min_eigenvalue": self.min_eigenvalue,
            "eigenvalues": [[v, k] for v, k in self.clusters] if self.clusters else None,
            "note": self.note,
        }


def build_Ln_dense(m: int, n: int, basis: Basis | None = None) -> np.ndarray:
    """The n-voter operator divided by m!, on profile (x) value space
    with voter 1 most significant and the value index fastest."""
    bundle = build_one_voter(m, basis)
    fact = factorial(m)
    dim = fact**n * (m - 1)
    out = np.zeros((dim, dim))
    for i in range(1, n + 1):
        for j in range(m):
            term = np.kron(np.eye(fact ** (i - 1)), bundle.Y[j].astype(float))
            term = np.kron(term, np.eye(fact ** (n - i)))
            term = np.kron(term, bundle.D[j])
            out += term
    return out / fact


def lin_space_basis(m: int, n: int, table: Rho1Table) -> np.ndarray:
    """Orthonormal basis of the kernel of the n-voter operator on the
    row-function space R^(m!^n * (m-1)): constants plus single-voter
    rho1 rows; dimension (n+1)(m-1)."""
    fact = factorial(m)
    d = m - 1
    cols = []
    for l in range(d):
        vec = np.zeros((fact**n, d))
        vec[:, l] = 1.0
        cols.append(vec.reshape(-1))
    for i in range(1, n + 1):
        for t in range(d):
            per_vote = table.R[:, t, :]  # (m!, d)
            inner = fact ** (n - i)
            outer = fact ** (i - 1)
            vec = np.tile(np.repeat(per_vote, inner, axis=0), (outer, 1))
            cols.append(vec.reshape(-1))
    Q, _ = np.linalg.qr(np.column_stack(cols))
    return Q


def spectral_gap(m: int, n: int, dense_limit: int = DENSE_LIMIT,
                 basis: Basis | None = None, samples: int = 64,
                 seed: int = 0) -> SpectralReport:
    """Spectral gap of L^n / m!.  Dense symmetric eigensolve when the
    dimension fits under dense_limit; otherwise seeded Rayleigh
    sampling orthogonal to the known kernel, flagged non-exhaustive
    (an upper bound on the gap, not a certificate)."""
    fact = factorial(m)
    dim = fact**n * (m - 1)
    if dim <= dense_limit:
        Ln = build_Ln_dense(m, n, basis)
        eigvals = np.linalg.eigvalsh(Ln)
        clusters = cluster_eigenvalues(eigvals)
        gap = float(eigvals[eigvals > PSD_TOL].min())
        return SpectralReport(m, n, "L^n / m!", dim, True, gap,
                              float(eigvals.min()), clusters)
    table = Rho1Table(m, basis) if basis is not None else rho1_table(m)
    kernel = lin_space_basis(m, n, table)
    rng = np.random.default_rng(seed)
    best = np.inf
    for _ in range(samples):
        vec = rng.standard_normal(dim)
        vec -= kernel @ (kernel.T @ vec)
        vec /= np.linalg.norm(vec)
        rows = vec.reshape(fact**n, 1, m - 1)
        quad = _class_sum_form(rows, m, n, table.basis.C) / fact
        best = min(best, quad)
    return SpectralReport(m, n, "L^n / m!", dim, False, float(best), 0.0, None,
                          "Rayleigh sampling only: reported gap is an upper bound")


def gap_bracket(m: int, n: int) -> tuple[Fraction, Fraction]:
    """[(m-2)/(m(m-1)^2), 1/(m(m-1))]: the two-coordinate block lower
    bound and the single-coordinate smallest nonzero eigenvalue."""
    return Fraction(m - 2, m * (m - 1) ** 2), Fraction(1, m * (m - 1))
