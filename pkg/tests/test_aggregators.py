"""Aggregator rules, encodings, consistency, and serialization."""

import numpy as np
import pytest

from irlap.aggregators import (
    consistency_check,
    encode_g,
    from_json,
    make_borda,
    make_constant,
    make_dictator,
    make_plurality,
    profile_tables,
    random_aggregator,
    to_json,
)
from irlap.basis import rho1_table
from irlap.perms import (
    enumerate_group,
    is_even,
    parse_perm,
    subgroup_from_members,
    trivial_subgroup,
    winner_subgroup,
)


def test_dictator_identity_sigma():
    H = trivial_subgroup(3)
    d = make_dictator(1, (1, 2, 3), H, 2)
    x = (parse_perm("231", 3), parse_perm("123", 3))
    assert d.evaluate(x).representative == parse_perm("231", 3)


def test_dictator_scf_returns_top_choice():
    H = winner_subgroup(3)
    d = make_dictator(1, (1, 2, 3), H, 2)
    x = (parse_perm("231", 3), parse_perm("123", 3))
    # winner = voter 1's rank-1 name = 2
    assert d.evaluate(x) == H.coset_of(parse_perm("231", 3))


def test_dictator_voter_out_of_range():
    with pytest.raises(ValueError):
        make_dictator(3, (1, 2, 3), trivial_subgroup(3), 2)


def test_constant():
    H = winner_subgroup(3)
    c = make_constant(2, H, 2)
    for profile in [(parse_perm("123", 3), parse_perm("321", 3))]:
        assert c.evaluate(profile) is H.cosets[2]


def test_plurality_unanimity():
    p = make_plurality(3, 3)
    profile = tuple(parse_perm("123", 3) for _ in range(3))
    assert p.evaluate(profile).representative[0] == 1


def test_plurality_tie_break_lexicographic():
    p = make_plurality(3, 2)
    profile = (parse_perm("123", 3), parse_perm("231", 3))  # one vote each for 1, 2
    assert p.evaluate(profile).representative[0] == 1


def test_borda_example():
    b = make_borda(3, 2)
    profile = (parse_perm("123", 3), parse_perm("231", 3))
    # scores: 1 -> 2, 2 -> 3, 3 -> 1
    assert b.evaluate(profile).representative == parse_perm("213", 3)


def test_evaluate_rejects_wrong_size():
    p = make_plurality(3, 2)
    with pytest.raises(ValueError):
        p.evaluate((parse_perm("123", 3),))


def test_swf_dictator_encoding_is_orthogonal():
    H = trivial_subgroup(3)
    enc = encode_g(make_dictator(1, parse_perm("213", 3), H, 1))
    for g in enc.g:
        assert np.abs(g @ g.T - np.eye(2)).max() <= 1e-10


def test_m_h_traces():
    swf = consistency_check(make_constant(0, trivial_subgroup(3), 1))
    assert np.abs(swf.M_H - np.eye(2)).max() <= 1e-12  # trace m-1
    scf = consistency_check(make_constant(0, winner_subgroup(3), 1))
    assert abs(np.trace(scf.M_H) - 1.0) <= 1e-10
    assert np.abs(scf.M_H).max() > 1e-9


def test_consistency_invariant_random():
    rng = np.random.default_rng(2)
    for H in (trivial_subgroup(3), winner_subgroup(3)):
        for n in (1, 2):
            rep = consistency_check(random_aggregator(3, n, H, rng))
            assert rep.max_deviation <= 1e-9
            assert rep.idempotency_deviation <= 1e-9
            assert rep.fixing


def test_alternating_subgroup_flagged_nonfixing():
    alt = subgroup_from_members(3, [x for x in enumerate_group(3) if is_even(x)])
    rep = consistency_check(make_constant(0, alt, 1))
    assert not rep.fixing
    assert np.abs(rep.M_H).max() <= 1e-12


def test_m_h_two_ways_agree():
    table = rho1_table(3)
    H = winner_subgroup(3)
    enc = encode_g(make_constant(1, H, 1), table)
    MH_from_members = np.mean([table.of(h) for h in H.members], axis=0)
    MH_from_g = enc.g[0] @ enc.g[0].T
    assert np.abs(MH_from_members - MH_from_g).max() <= 1e-10


@pytest.mark.parametrize("scf", [False, True])
def test_json_round_trip(scf):
    H = winner_subgroup(3) if scf else trivial_subgroup(3)
    rng = np.random.default_rng(4)
    agg = random_aggregator(3, 2, H, rng)
    doc = to_json(agg)
    back = from_json(doc)
    assert np.array_equal(agg.table, back.table)
    assert back.H.partition == H.partition


def test_json_named_rules():
    doc = to_json(make_dictator(2, parse_perm("213", 3), trivial_subgroup(3), 2))
    back = from_json(doc)
    assert back.kind == "dictator"
    assert np.array_equal(
        back.table, make_dictator(2, parse_perm("213", 3), trivial_subgroup(3), 2).table
    )


def test_json_rejects_partial_table():
    H = trivial_subgroup(3)
    agg = random_aggregator(3, 1, H, np.random.default_rng(0))
    doc = to_json(agg)
    doc["entries"] = doc["entries"][:-1]
    with pytest.raises(ValueError):
        from_json(doc)


def test_profile_tables_constants():
    swf = profile_tables(trivial_subgroup(3))
    assert swf.max_pair_dist2 == 2
    scf = profile_tables(winner_subgroup(3))
    from fractions import Fraction

    assert scf.max_pair_dist2 == Fraction(3, 2)
