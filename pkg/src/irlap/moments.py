"""Moment calculus for functions f(x) = tr(A P(x)) whose transform is
supported on the trivial and standard components.

Everything exact runs in rational arithmetic: the 15x15 Gram matrix of
trivial-isotypic vectors in the fourth tensor power, its determinant
and inverse, the fourth-moment contraction, and the noise-operator
moment transfer.  The fourth moment is

    E_x f(x)^4 = tr( E (A (x) A (x) A (x) A) E^T  *  C15^-1 )

where the rows of E are the 15 invariant delta/ones patterns indexed
by partitions of the four tensor positions, and C15 = E E^T with
C15[p, q] = m^(blocks of join(p, q)).

Moment operators on A:
    M1 = sum A_ij        M2 = sum A_ij^2     M3, M4 likewise
    Mr = sum_i (row sq sum)^2     Mc = sum_j (col sq sum)^2
    Mq = tr(A A^T A A^T)

Coefficient matrices coming from the supported band have all row sums
and all column sums equal (to M1/m); the closed-form transfer rules
for Mr, Mc, Mq under the noise operator rely on that invariant and the
operations below enforce it.
"""

from __future__ import annotations

import itertools
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
import numpy as np

from .perms import enumerate_group

# The 15 invariant patterns: partitions of the four tensor positions,
# in the appendix layout (singletons; pairs; pair-pairs; triples; all).
PARTITIONS: list[tuple[tuple[int, ...], ...]] = (
    [((0,), (1,), (2,), (3,))]
    + [tuple(sorted([pair] + [(t,) for t in range(4) if t not in pair]))
       for pair in [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]]
    + [((0, 1), (2, 3)), ((0, 2), (1, 3)), ((0, 3), (1, 2))]
    + [tuple(sorted([triple] + [(t,) for t in range(4) if t not in triple]))
       for triple in [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)]]
    + [((0, 1, 2, 3),)]
)
IDX_E3 = (7, 8, 9)
IDX_E5 = 14


def _block_of(partition) -> tuple[int, int, int, int]:
    out = [0] * 4
    for b, block in enumerate(partition):
        for t in block:
            out[t] = b
    return tuple(out)


def _join_block_count(p, q) -> int:
    parent = list(range(4))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for part in (p, q):
        for block in part:
            for t in block[1:]:
                parent[find(block[0])] = find(t)
    return len({find(t) for t in range(4)})


def gram_c15(m: int) -> list[list[Fraction]]:
    return [
        [Fraction(m ** _join_block_count(p, q)) for q in PARTITIONS]
        for p in PARTITIONS
    ]


def frac_det(M) -> Fraction:
    """Exact determinant by fraction Gaussian elimination."""
    M = [row[:] for row in M]
    n = len(M)
    det = Fraction(1)
    for col in range(n):
        pivot = next((r for r in range(col, n) if M[r][col] != 0), None)
        if pivot is None:
            return Fraction(0)
        if pivot != col:
            M[col], M[pivot] = M[pivot], M[col]
            det = -det
        det *= M[col][col]
        inv = Fraction(1) / M[col][col]
        for r in range(col + 1, n):
            factor = M[r][col] * inv
            if factor:
                M[r] = [a - factor * b for a, b in zip(M[r], M[col])]
    return det


def frac_inv(M) -> list[list[Fraction]]:
    """Exact inverse by Gauss-Jordan elimination."""
    n = len(M)
    aug = [[Fraction(v) for v in row] + [Fraction(int(i == j)) for j in range(n)]
           for i, row in enumerate(M)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if aug[r][col] != 0), None)
        if pivot is None:
            raise ZeroDivisionError("matrix is singular")
        aug[col], aug[pivot] = aug[pivot], aug[col]
        scale = Fraction(1) / aug[col][col]
        aug[col] = [v * scale for v in aug[col]]
        for r in range(n):
            if r != col and aug[r][col]:
                factor = aug[r][col]
                aug[r] = [a - factor * b for a, b in zip(aug[r], aug[col])]
    return [row[n:] for row in aug]


def det_formula(m: int) -> int:
    return m**15 * (m - 1) ** 14 * (m - 2) ** 7 * (m - 3)


@dataclass
class AppendixTables:
    m: int
    C15: list
    C15_inv: list
    det: Fraction


def build_appendix(m: int) -> AppendixTables:
    if m <= 3:
        raise ValueError(
            f"the 15x15 Gram matrix is singular for m={m}: its determinant "
            f"carries a factor (m-3)"
        )
    C = gram_c15(m)
    return AppendixTables(m, C, frac_inv(C), frac_det(C))


# ---------------------------------------------------------------------------
# Moment operators


@dataclass
class MomentVector:
    M1: Fraction | float
    M2: Fraction | float
    M3: Fraction | float
    M4: Fraction | float
    Mr: Fraction | float
    Mc: Fraction | float
    Mq: Fraction | float

    def as_tuple(self):
        return (self.M1, self.M2, self.M3, self.M4, self.Mr, self.Mc, self.Mq)


def moments(A) -> MomentVector:
    if isinstance(A, np.ndarray) and A.dtype != object:
        AA = A @ A.T
        return MomentVector(
            float(A.sum()), float((A**2).sum()), float((A**3).sum()),
            float((A**4).sum()),
            float(((A**2).sum(axis=1) ** 2).sum()),
            float(((A**2).sum(axis=0) ** 2).sum()),
            float((AA * AA).sum()),
        )
    rows = [list(r) for r in A]
    n = len(rows)
    m1 = sum(v for r in rows for v in r)
    m2 = sum(v**2 for r in rows for v in r)
    m3 = sum(v**3 for r in rows for v in r)
    m4 = sum(v**4 for r in rows for v in r)
    mr = sum(sum(v**2 for v in r) ** 2 for r in rows)
    mc = sum(sum(rows[i][j] ** 2 for i in range(n)) ** 2 for j in range(n))
    mq = 0
    for i in range(n):
        for j in range(n):
            s = sum(rows[i][k] * rows[j][k] for k in range(n))
            mq += s * s
    return MomentVector(m1, m2, m3, m4, mr, mc, mq)


def margin_value(A):
    """Common row/column sum; raises if rows or columns disagree.
    Exact comparison for rational entries, small relative tolerance for
    floats (scaling makes float margins inexact at the last ulp)."""
    rows = [list(r) for r in A]
    n = len(rows)
    rsums = [sum(r) for r in rows]
    csums = [sum(rows[i][j] for i in range(n)) for j in range(n)]
    sums = rsums + csums
    if any(isinstance(v, float) for row in rows for v in row):
        scale = max(abs(v) for row in rows for v in row) * n or 1.0
        equal = max(sums) - min(sums) <= 1e-9 * scale
    else:
        equal = len(set(sums)) == 1
    if not equal:
        raise ValueError(
            f"matrix is outside the supported band: row sums {rsums}, "
            f"column sums {csums} must all be equal"
        )
    return rsums[0]


def mean_value(A, m: int):
    """E_x f = M1(A)/m."""
    m1 = moments(A).M1
    return m1 / m if isinstance(m1, float) else Fraction(m1, m)


def norm2_value(A, m: int):
    """E_x f^2 = (M2 + (m-2) M1^2 / m^2) / (m-1).  The coefficient
    placement follows the two-tensor Gram computation and is certified
    against the exhaustive oracle in the tests; it requires the
    equal-margin invariant."""
    margin_value(A)
    mv = moments(A)
    if isinstance(mv.M1, float):
        return (mv.M2 + (m - 2) * mv.M1**2 / m**2) / (m - 1)
    return (mv.M2 + Fraction((m - 2), m**2) * mv.M1**2) / (m - 1)


# ---------------------------------------------------------------------------
# Exact fourth-moment contraction


def _powmat(A, power: int):
    return [[v**power for v in row] for row in A]


def _contract_component(nodes, edges, m: int, A) -> int:
    """Sum over labelings of one connected piece of the contraction
    graph.  edges: {(rnode, cnode): multiplicity}.  Leaf nodes are
    absorbed into neighbor weight vectors first; whatever remains
    (cycles) is brute-forced, at most m^4 terms."""
    pow_cache: dict[int, list] = {}

    def pmat(p):
        if p not in pow_cache:
            pow_cache[p] = _powmat(A, p)
        return pow_cache[p]

    edges = dict(edges)
    vecs: dict = {}
    active = set(nodes)
    while True:
        degree = defaultdict(list)
        for key in edges:
            degree[key[0]].append(key)
            degree[key[1]].append(key)
        leaf = next(
            (nd for nd in active if len(degree[nd]) == 1 and len(active) > 1), None
        )
        if leaf is None:
            break
        key = degree[leaf][0]
        rnode, cnode = key
        mat = pmat(edges.pop(key))
        other = cnode if leaf == rnode else rnode
        lvec = vecs.pop(leaf, [1] * m)
        if leaf == rnode:
            w = [sum(lvec[r] * mat[r][c] for r in range(m)) for c in range(m)]
        else:
            w = [sum(mat[r][c] * lvec[c] for c in range(m)) for r in range(m)]
        if other in vecs:
            vecs[other] = [a * b for a, b in zip(vecs[other], w)]
        else:
            vecs[other] = w
        active.discard(leaf)
    order = sorted(active)
    total = 0
    for assignment in itertools.product(range(m), repeat=len(order)):
        val = {nd: v for nd, v in zip(order, assignment)}
        term = 1
        for (rn, cn), p in edges.items():
            term *= pmat(p)[val[rn]][val[cn]]
        for nd, vec in vecs.items():
            term *= vec[val[nd]]
        total += term
    return total


def _contract(pi: int, pj: int, A, m: int) -> int:
    """E-row(pi) . (A tensor^4) . E-row(pj), for integer A."""
    bi = _block_of(PARTITIONS[pi])
    bj = _block_of(PARTITIONS[pj])
    edges: dict = defaultdict(int)
    for t in range(4):
        edges[(("r", bi[t]), ("c", bj[t]))] += 1
    parent: dict = {}

    def find(x):
        parent.setdefault(x, x)
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for rn, cn in edges:
        parent.setdefault(rn, rn)
        parent.setdefault(cn, cn)
        parent[find(rn)] = find(cn)
    comps = defaultdict(lambda: (set(), {}))
    for key, power in edges.items():
        root = find(key[0])
        comps[root][0].update(key)
        comps[root][1][key] = power
    total = 1
    for nodes, comp_edges in comps.values():
        total *= _contract_component(nodes, comp_edges, m, A)
    return total


def _to_int_matrix(A) -> tuple[list[list[int]], int]:
    """Clear denominators: returns (integer matrix, common denominator)."""
    from math import gcd

    rows = [list(r) for r in A]
    fracs = [[Fraction(v) for v in row] for row in rows]
    den = 1
    for row in fracs:
        for v in row:
            den = den * v.denominator // gcd(den, v.denominator)
    ints = [[int(v * den) for v in row] for row in fracs]
    return ints, den


def blocks_direct(A) -> list[list[Fraction]]:
    """The full 15x15 matrix E (A tensor^4) E^T by exact contraction of
    the invariant patterns; independent of any transcribed table."""
    ints, den = _to_int_matrix(A)
    m = len(ints)
    scale = Fraction(1, den**4)
    return [
        [scale * _contract(pi, pj, ints, m) for pj in range(15)] for pi in range(15)
    ]


def blocks_transcribed(mv: MomentVector, m: int) -> list[list[Fraction]]:
    """The appendix table exactly as printed (including its symmetry
    rule for unlisted blocks).  Kept verbatim as the audit subject; the
    computational path uses blocks_direct."""
    M1, M2, M3, M4, Mr, Mc, Mq = (Fraction(v) for v in mv.as_tuple())
    a1, a13, a112, a22 = M1**4, M1 * M3, M1**2 * M2, M2**2
    B = [[None] * 15 for _ in range(15)]

    def put(block, rows, cols, scale=Fraction(1)):
        for i, r in enumerate(rows):
            for j, c in enumerate(cols):
                B[r][c] = scale * block[i][j]

    E1, E2, E3, E4, E5 = [0], [1, 2, 3, 4, 5, 6], [7, 8, 9], [10, 11, 12, 13], [14]
    put([[a1]], E1, E1)
    put([[a1] * 6], E1, E2, Fraction(1, m))
    put([[a1] * 3], E1, E3, Fraction(m))
    put([[a1] * 4], E1, E4, Fraction(m))
    put([[a1]], E1, E5, Fraction(1, m**2))
    put([[a112 if i == j else a1 * m for j in range(6)] for i in range(6)],
        E2, E2, Fraction(1, m**2))
    e23_rows = [(1, 0, 0), (0, 1, 0), (0, 0, 1), (0, 0, 1), (0, 1, 0), (1, 0, 0)]
    put([[a112 if flag else a1 * Fraction(1, m**2) for flag in row] for row in e23_rows],
        E2, E3, Fraction(1, m))
    e24_rows = [(1, 1, 0, 0), (1, 0, 1, 0), (0, 1, 1, 0), (1, 0, 0, 1),
                (0, 1, 0, 1), (0, 0, 1, 1)]
    put([[a112 if flag else a1 * Fraction(1, m**2) for flag in row] for row in e24_rows],
        E2, E4, Fraction(1, m))
    put([[a112]] * 6, E2, E5, Fraction(1, m**2))
    put([[a22 if i == j else Mq for j in range(3)] for i in range(3)], E3, E3)
    put([[a112] * 4 for _ in range(3)], E3, E4, Fraction(1, m**2))
    put([[Mc]] * 3, E3, E5)
    put([[a13 * Fraction(1, m) if i == j else a112 for j in range(4)] for i in range(4)],
        E4, E4, Fraction(1, m**2))
    put([[a13]] * 4, E4, E5, Fraction(1, m))
    put([[Mc] * 3], E5, E3)
    put([[M4]], E5, E5)
    for i in range(15):
        for j in range(15):
            if B[i][j] is None:
                B[i][j] = B[j][i]
    return B


def audit_blocks(m: int, trials: int = 3, seed: int = 0) -> dict:
    """Compare the printed table against the direct contraction on
    random equal-margin rational matrices.  Positions that disagree on
    any trial are reported; the direct value is the repaired one."""
    rng = np.random.default_rng(seed)
    bad: set[tuple[int, int]] = set()
    example = {}
    for _ in range(trials):
        A = random_equal_margin(m, rng)
        direct = blocks_direct(A)
        printed = blocks_transcribed(moments(A), m)
        for i in range(15):
            for j in range(15):
                if direct[i][j] != printed[i][j]:
                    bad.add((i, j))
                    example.setdefault(
                        (i, j), (str(printed[i][j]), str(direct[i][j]))
                    )
    return {
        "m": m,
        "trials": trials,
        "positions_checked": 225,
        "positions_repaired": sorted(bad),
        "repair_count": len(bad),
        "examples": {f"{i},{j}": v for (i, j), v in sorted(example.items())[:10]},
    }


def norm4_exact(A, m: int, tables: AppendixTables | None = None) -> Fraction:
    """E_x f^4 = tr(E (A tensor^4) E^T * C15^-1), exact.  Requires the
    equal-margin invariant and m >= 4."""
    margin_value(A)
    tables = tables if tables is not None else build_appendix(m)
    B = blocks_direct(A)
    Cinv = tables.C15_inv
    return sum(B[p][q] * Cinv[q][p] for p in range(15) for q in range(15))


def exhaustive_moment(A, m: int, k: int) -> Fraction:
    """E_x f(x)^k by summation over all of S_m (f(x) = tr(A P(x)) =
    sum_r A[r, x(r)])."""
    rows = [list(r) for r in A]
    total = Fraction(0)
    perms = enumerate_group(m)
    for x in perms:
        val = sum(rows[r][x[r] - 1] for r in range(m))
        total += Fraction(val) ** k
    return total / len(perms)


# ---------------------------------------------------------------------------
# Noise operator


def apply_Tt(A, sigma):
    """A' = sigma A + (1 - sigma) (M1/m^2) J: the coefficient matrix of
    the noise-smoothed function."""
    rows = [[Fraction(v) for v in r] for r in A]
    m = len(rows)
    m1 = sum(v for r in rows for v in r)
    shift = (1 - Fraction(sigma)) * m1 / m**2
    return [[Fraction(sigma) * v + shift for v in row] for row in rows]


def moments_after_Tt(mv: MomentVector, sigma, m: int) -> MomentVector:
    """Closed-form transfer of all seven moments under the noise
    operator, with tau = (1 - sigma)/m^2.  The M2 rule carries the
    factor m^2 on its tau^2 term (forced by expanding sum (sigma A_ij
    + tau M1)^2; the printed rule omits it and fails the dual-path
    check at sigma = 0).  The Mr, Mc, Mq rules use the equal-margin
    invariant."""
    s = Fraction(sigma)
    t = (1 - s) / m**2
    M1, M2, M3, M4, Mr, Mc, Mq = (Fraction(v) for v in mv.as_tuple())
    return MomentVector(
        M1,
        s**2 * M2 + 2 * s * t * M1**2 + t**2 * M1**2 * m**2,
        s**3 * M3 + 3 * s**2 * t * M1 * M2 + 3 * s * t**2 * M1**3 + t**3 * M1**3 * m**2,
        s**4 * M4 + 4 * s**3 * t * M1 * M3 + 6 * s**2 * t**2 * M1**2 * M2
        + 4 * s * t**3 * M1**4 + t**4 * M1**4 * m**2,
        s**4 * Mr + 4 * s**3 * t * M1**2 * M2 / m + 2 * s**2 * t**2 * M1**2 * M2 * m
        + 4 * s**2 * t**2 * M1**4 / m + 4 * s * t**3 * M1**4 * m + t**4 * M1**4 * m**3,
        s**4 * Mc + 4 * s**3 * t * M1**2 * M2 / m + 2 * s**2 * t**2 * M1**2 * M2 * m
        + 4 * s**2 * t**2 * M1**4 / m + 4 * s * t**3 * M1**4 * m + t**4 * M1**4 * m**3,
        s**4 * Mq + 4 * s**3 * t * M1**4 / m**2 + 6 * s**2 * t**2 * M1**4
        + 4 * s * t**3 * M1**4 * m**2 + t**4 * M1**4 * m**4,
    )


# ---------------------------------------------------------------------------
# Sampling and hypercontractivity


def random_equal_margin(m: int, rng, spread: int = 9) -> list[list[int]]:
    """Integer matrix with all row sums and all column sums equal:
    m^2 D - m R - m C + total, plus a random multiple of J."""
    D = rng.integers(-spread, spread + 1, size=(m, m))
    R = D.sum(axis=1)
    Ccol = D.sum(axis=0)
    total = int(D.sum())
    shift = int(rng.integers(-spread, spread + 1))
    out = [
        [int(m * m * D[i, j] - m * R[i] - m * Ccol[j] + total + shift)
         for j in range(m)]
        for i in range(m)
    ]
    return out


def zero_margin_sample(m: int, rng, spread: int = 9) -> np.ndarray:
    """Float matrix with exactly zero margins (so E f = 0), rescaled to
    E f^2 = 1."""
    while True:
        D = rng.integers(-spread, spread + 1, size=(m, m)).astype(float)
        A0 = m * m * D - m * D.sum(axis=1, keepdims=True) \
            - m * D.sum(axis=0, keepdims=True) + D.sum()
        m2 = float((A0**2).sum())
        if m2 > 0:
            return A0 * np.sqrt((m - 1) / m2)


def _c15_inv_float(m: int) -> np.ndarray:
    tables = build_appendix(m)
    return np.array([[float(v) for v in row] for row in tables.C15_inv])


def norm4_zero_margin(mv: MomentVector, c15_inv: np.ndarray) -> float:
    """E f^4 for zero-margin A: only the pair-pair and all-equal
    patterns survive (every other pattern has a singleton position
    whose free sum is a margin)."""
    idx = list(IDX_E3) + [IDX_E5]
    B = np.empty((4, 4))
    for a in range(3):
        for b in range(3):
            B[a, b] = mv.M2**2 if a == b else mv.Mq
    for a in range(3):
        B[a, 3] = mv.Mc
        B[3, a] = mv.Mr
    B[3, 3] = mv.M4
    sub = c15_inv[np.ix_(idx, idx)]
    return float((B * sub.T).sum())


def moment_bounds_ok(mv: MomentVector, m: int, tol: float = 1e-9) -> dict:
    """Normalized-function moment bounds: |M1| <= m sqrt((m-1)/(m-2)),
    M2 <= m-1, Mq <= M2^2 (for E f^2 = 1)."""
    m1_bound = m * np.sqrt((m - 1) / (m - 2))
    return {
        "M1": abs(mv.M1) <= m1_bound * (1 + tol),
        "M2": mv.M2 <= (m - 1) * (1 + tol),
        "Mq": mv.Mq <= mv.M2**2 * (1 + tol),
    }


def hypercontractivity_check(m: int, sigma: float | None = None,
                             samples: int = 1000, seed: int = 0) -> dict:
    """Sample zero-mean unit-variance band functions, apply the noise
    operator at sigma (default m^-1/2), and record ||T f||_4^4.  The
    contraction claim ||T f||_4 <= ||f||_2 is recorded, not asserted:
    it is an asymptotic statement and the report tracks the empirical
    onset."""
    if m < 4:
        raise ValueError("hypercontractivity check needs m >= 4")
    sigma = float(sigma) if sigma is not None else m**-0.5
    rng = np.random.default_rng(seed)
    c15_inv = _c15_inv_float(m)
    violations = 0
    max_t4 = 0.0
    bounds_failures = 0
    for _ in range(samples):
        A = zero_margin_sample(m, rng)
        mv = moments(A)
        f4 = norm4_zero_margin(mv, c15_inv)
        t4 = sigma**4 * f4  # T_t f has coefficient sigma*A when M1 = 0
        max_t4 = max(max_t4, t4)
        if t4 > 1 + 1e-9:
            violations += 1
        ok = moment_bounds_ok(mv, m)
        if not all(ok.values()):
            bounds_failures += 1
    return {
        "m": m,
        "sigma": sigma,
        "samples": samples,
        "violations": violations,
        "max_T4_norm4": max_t4,
        "moment_bound_failures": bounds_failures,
    }


def empirical_m0(m_values=range(4, 13), samples: int = 1000, seed: int = 0,
                 threads: int = 1) -> dict:
    """Sweep m at sigma = m^-1/2 and report the least m from which no
    sampled violation occurs.  Each m draws from its own seed stream,
    so the result is independent of the worker-pool size."""
    from ._util import blocked_pmap

    rows = blocked_pmap(
        lambda m: hypercontractivity_check(m, None, samples, seed + m),
        list(m_values), threads)
    m0 = None
    for row in rows:
        if row["violations"] == 0:
            if m0 is None:
                m0 = row["m"]
        else:
            m0 = None
    return {"rows": rows, "empirical_m0": m0}


def degree2_product_check(m: int, samples: int = 50, seed: int = 0) -> dict:
    """Degree-2 norm growth: a product of two independent normalized
    band functions h(x1, x2) = f1(x1) f2(x2) must satisfy
    ||h||_4^4 <= sigma^-8 at a certified (m, sigma = m^-1/2)."""
    rng = np.random.default_rng(seed)
    c15_inv = _c15_inv_float(m)
    sigma = m**-0.5
    bound = sigma**-8.0
    worst = 0.0
    for _ in range(samples):
        f1 = norm4_zero_margin(moments(zero_margin_sample(m, rng)), c15_inv)
        f2 = norm4_zero_margin(moments(zero_margin_sample(m, rng)), c15_inv)
        worst = max(worst, f1 * f2)
    return {"m": m, "sigma": sigma, "bound": bound, "max_h4": worst,
            "holds": worst <= bound * (1 + 1e-9)}
