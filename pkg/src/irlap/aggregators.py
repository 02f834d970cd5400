"""Social aggregators over S_m^n with coset-valued outputs, their
matrix encodings, and the consistency invariant g(x) g(x)^T = M_H.

A profile (x_1, ..., x_n) is addressed by its mixed-radix rank with
voter 1 most significant:

    index = sum_i perm_index(x_i) * (m!)^(n-1-i)

Aggregator tables map that index to a coset index of H (cosets ordered
by their lexicographically least representative).
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction
from math import factorial

import numpy as np

from .basis import Rho1Table, rho1_table
from .perms import (
    Coset,
    FixingSubgroup,
    build_fixing_subgroup,
    compose,
    enumerate_group,
    format_perm,
    j_profile_counts,
    parse_perm,
    perm_index,
    rank_of,
    trivial_subgroup,
    winner_subgroup,
)


@dataclass(frozen=True, eq=False)
class Aggregator:
    """Total function S_m^n -> S_m/H stored as a coset-index table."""

    m: int
    n: int
    H: FixingSubgroup
    table: np.ndarray  # shape (m!^n,), values in [0, #cosets)
    kind: str = "table"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        fact = factorial(self.m)
        if self.table.shape != (fact**self.n,):
            raise ValueError(
                f"table must cover all {fact**self.n} profiles, got {self.table.shape}"
            )

    def profile_index(self, profile) -> int:
        fact = factorial(self.m)
        if len(profile) != self.n:
            raise ValueError(f"expected {self.n} votes, got {len(profile)}")
        idx = 0
        for x in profile:
            if len(x) != self.m:
                raise ValueError("vote has wrong alternative count")
            idx = idx * fact + perm_index(x)
        return idx

    def evaluate(self, profile) -> Coset:
        return self.H.cosets[int(self.table[self.profile_index(profile)])]


class ProfileTables:
    """Exact per-(m, H) lookup tables used by all rational metrics.

    prof[c, j-1, r-1] is the number of members of coset c ranking
    alternative j at r (entries per (c, j) sum to |H|).  pid[c, j-1]
    is the index of that integer profile in a per-j catalog sorted
    lexicographically; dist2[j-1] and dot[j-1] are catalog-level
    pairwise tables of squared distance and inner product.
    """

    def __init__(self, H: FixingSubgroup):
        self.H = H
        m = H.m
        ncos = len(H.cosets)
        self.prof = np.zeros((ncos, m, m), dtype=np.int64)
        for c, coset in enumerate(H.cosets):
            for j in range(1, m + 1):
                self.prof[c, j - 1] = j_profile_counts(coset, j, m)
        self.catalogs = []  # per j: list of integer profile tuples
        self.pid = np.zeros((ncos, m), dtype=np.int64)
        for j in range(m):
            cat = sorted({tuple(self.prof[c, j]) for c in range(ncos)})
            lookup = {p: i for i, p in enumerate(cat)}
            self.catalogs.append(cat)
            for c in range(ncos):
                self.pid[c, j] = lookup[tuple(self.prof[c, j])]
        self.dist2 = []  # per j: (P, P) integer matrix of sum_r (n1-n2)^2
        self.dot = []  # per j: (P, P) integer matrix of sum_r n1*n2
        for j in range(m):
            cat = np.array(self.catalogs[j], dtype=np.int64)
            dots = cat @ cat.T
            norms = np.diag(dots)
            self.dist2.append(norms[:, None] + norms[None, :] - 2 * dots)
            self.dot.append(dots)
        # rank of alternative j under each permutation, lex order
        perms = enumerate_group(m)
        self.rank = np.zeros((m, len(perms)), dtype=np.int64)
        for i, x in enumerate(perms):
            for j in range(1, m + 1):
                self.rank[j - 1, i] = rank_of(x, j)

    @property
    def max_pair_dist2(self) -> Fraction:
        """The constant c = max over j and coset pairs of the squared
        j-profile distance; m/(m-1) for winner-take-all H."""
        h = self.H.order
        worst = max(int(self.dist2[j].max()) for j in range(self.H.m))
        return Fraction(worst, h * h)


_PROFILE_TABLES: dict[int, ProfileTables] = {}


def profile_tables(H: FixingSubgroup) -> ProfileTables:
    key = id(H)
    if key not in _PROFILE_TABLES:
        _PROFILE_TABLES[key] = ProfileTables(H)
    return _PROFILE_TABLES[key]


def _broadcast_vote_map(per_vote: np.ndarray, i: int, n: int, fact: int) -> np.ndarray:
    """Expand a per-vote array to a per-profile table where the value
    depends only on voter i (1-based)."""
    inner = fact ** (n - i)
    outer = fact ** (i - 1)
    return np.tile(np.repeat(per_vote, inner), outer)


def make_dictator(i: int, sigma, H: FixingSubgroup, n: int) -> Aggregator:
    """f(x) = coset of compose(x_i, sigma): voter i's ranking with a
    fixed rank relabeling.  These are exactly the nonconstant members
    of the IR kernel."""
    if not 1 <= i <= n:
        raise ValueError(f"voter {i} out of range 1..{n}")
    m = H.m
    sigma = tuple(sigma)
    per_vote = np.array(
        [H.coset_index[compose(v, sigma)] for v in enumerate_group(m)], dtype=np.int64
    )
    table = _broadcast_vote_map(per_vote, i, n, factorial(m))
    return Aggregator(m, n, H, table, "dictator", {"i": i, "sigma": format_perm(sigma)})


def make_constant(coset_id: int, H: FixingSubgroup, n: int) -> Aggregator:
    table = np.full(factorial(H.m) ** n, coset_id, dtype=np.int64)
    rep = format_perm(H.cosets[coset_id].representative)
    return Aggregator(H.m, n, H, table, "constant", {"output": rep})


def make_plurality(m: int, n: int) -> Aggregator:
    """Winner = alternative with the most rank-1 votes, ties broken
    lexicographically by name.  Output space is the winner partition."""
    H = winner_subgroup(m)
    winner_coset = {}
    for w in range(1, m + 1):
        rep = tuple([w] + sorted(v for v in range(1, m + 1) if v != w))
        winner_coset[w] = H.coset_index[rep]
    fact = factorial(m)
    perms = enumerate_group(m)
    table = np.empty(fact**n, dtype=np.int64)
    for idx, profile in enumerate(itertools.product(perms, repeat=n)):
        counts = [0] * (m + 1)
        for x in profile:
            counts[x[0]] += 1
        winner = max(range(1, m + 1), key=lambda w: (counts[w], -w))
        table[idx] = winner_coset[winner]
    return Aggregator(m, n, H, table, "plurality", {})


def make_borda(m: int, n: int) -> Aggregator:
    """Full ranking by total Borda score (rank r contributes m - r),
    ties broken lexicographically by name."""
    H = trivial_subgroup(m)
    fact = factorial(m)
    perms = enumerate_group(m)
    table = np.empty(fact**n, dtype=np.int64)
    for idx, profile in enumerate(itertools.product(perms, repeat=n)):
        score = [0] * (m + 1)
        for x in profile:
            for r, name in enumerate(x, start=1):
                score[name] += m - r
        ranking = tuple(sorted(range(1, m + 1), key=lambda v: (-score[v], v)))
        table[idx] = H.coset_index[ranking]
    return Aggregator(m, n, H, table, "borda", {})


def random_aggregator(m: int, n: int, H: FixingSubgroup, rng) -> Aggregator:
    table = rng.integers(0, len(H.cosets), size=factorial(m) ** n).astype(np.int64)
    return Aggregator(m, n, H, table, "table", {})


def corrupt_aggregator(agg: Aggregator, entries: int, rng) -> Aggregator:
    """Copy with `entries` distinct table positions rewritten to a
    uniformly random different coset."""
    table = agg.table.copy()
    ncos = len(agg.H.cosets)
    positions = rng.choice(table.shape[0], size=entries, replace=False)
    for pos in positions:
        shift = rng.integers(1, ncos)
        table[pos] = (table[pos] + shift) % ncos
    return Aggregator(agg.m, agg.n, agg.H, table, "table", {"corrupted_from": agg.kind})


@dataclass
class GEncoding:
    """g(x) = mean of rho1(y) over y in f(x); the matrix payload of all
    spectral computations.  g_coset[c] = M_H @ rho1(representative)."""

    m: int
    n: int
    H: FixingSubgroup
    g: np.ndarray  # (m!^n, m-1, m-1)
    g_coset: np.ndarray  # (#cosets, m-1, m-1)
    table: np.ndarray  # coset ids, shared with the aggregator


def coset_means(H: FixingSubgroup, table: Rho1Table) -> np.ndarray:
    ncos = len(H.cosets)
    d = H.m - 1
    out = np.empty((ncos, d, d))
    for c, coset in enumerate(H.cosets):
        idx = [table.index[y] for y in coset.members]
        out[c] = table.R[idx].mean(axis=0)
    return out


def encode_g(agg: Aggregator, table: Rho1Table | None = None) -> GEncoding:
    table = table if table is not None else rho1_table(agg.m)
    gc = coset_means(agg.H, table)
    return GEncoding(agg.m, agg.n, agg.H, gc[agg.table], gc, agg.table)


@dataclass
class ConsistencyReport:
    M_H: np.ndarray
    max_deviation: float
    idempotency_deviation: float
    fixing: bool


def consistency_check(agg: Aggregator, table: Rho1Table | None = None) -> ConsistencyReport:
    """Verify g(x) g(x)^T = M_H for all x, where M_H is the mean of
    rho1 over H.  M_H = 0 flags a non-fixing subgroup (then g == 0 and
    the whole spectral pipeline is vacuous)."""
    table = table if table is not None else rho1_table(agg.m)
    MH = np.mean([table.of(h) for h in agg.H.members], axis=0)
    enc = encode_g(agg, table)
    prods = np.einsum("xkl,xtl->xkt", enc.g, enc.g)
    max_dev = float(np.abs(prods - MH).max())
    idem = float(np.abs(MH @ MH - MH).max())
    fixing = bool(np.abs(MH).max() > 1e-9)
    return ConsistencyReport(MH, max_dev, idem, fixing)


# ---------------------------------------------------------------------------
# JSON round trip


def partition_to_text(partition) -> str:
    return "|".join(",".join(str(v) for v in block) for block in partition)


def partition_from_text(text: str, m: int):
    blocks = [[int(v) for v in part.split(",")] for part in text.split("|")]
    return blocks


def to_json(agg: Aggregator) -> dict:
    doc = {
        "m": agg.m,
        "n": agg.n,
        "partition": [list(b) for b in agg.H.partition],
        "type": agg.kind,
        "params": dict(agg.params),
    }
    if agg.kind == "table":
        perms = enumerate_group(agg.m)
        entries = []
        for idx, profile in enumerate(itertools.product(perms, repeat=agg.n)):
            rep = agg.H.cosets[int(agg.table[idx])].representative
            entries.append(
                {
                    "profile": [format_perm(x) for x in profile],
                    "output": format_perm(rep),
                }
            )
        doc["entries"] = entries
    return doc


def from_json(doc: dict) -> Aggregator:
    m, n = int(doc["m"]), int(doc["n"])
    H = build_fixing_subgroup(m, doc["partition"])
    kind = doc.get("type", "table")
    params = doc.get("params", {})
    if kind == "dictator":
        return make_dictator(int(params["i"]), parse_perm(params["sigma"], m), H, n)
    if kind == "constant":
        rep = parse_perm(params["output"], m)
        return make_constant(H.coset_index[rep], H, n)
    if kind == "plurality":
        return make_plurality(m, n)
    if kind == "borda":
        return make_borda(m, n)
    if kind != "table":
        raise ValueError(f"unknown aggregator type {kind!r}")
    fact = factorial(m)
    table = np.full(fact**n, -1, dtype=np.int64)
    for entry in doc["entries"]:
        profile = [parse_perm(t, m) for t in entry["profile"]]
        if len(profile) != n:
            raise ValueError("entry profile has wrong voter count")
        idx = 0
        for x in profile:
            idx = idx * fact + perm_index(x)
        table[idx] = H.coset_index[parse_perm(entry["output"], m)]
    if (table < 0).any():
        missing = int((table < 0).sum())
        raise ValueError(f"table not total: {missing} profiles missing")
    return Aggregator(m, n, H, table, "table", {})


def save_json(agg: Aggregator, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(to_json(agg), fh, indent=2, sort_keys=True)


def load_json(path: str) -> Aggregator:
    with open(path) as fh:
        return from_json(json.load(fh))
