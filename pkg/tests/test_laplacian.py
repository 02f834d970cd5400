"""Constraint operators, quadratic-form equivalences, and spectra."""

from math import factorial

import numpy as np
import pytest

from irlap._util import FeasibilityError
from irlap.aggregators import encode_g, make_constant, make_dictator, random_aggregator
from irlap.basis import project_to_lin, rho1_table
from irlap.laplacian import (
    apply_Ln,
    apply_quadratic_form,
    build_Ln_dense,
    build_one_voter,
    calibrate_kappa,
    cluster_eigenvalues,
    gap_bracket,
    hat_l1,
    kappa,
    lin_space_basis,
    lprime_offset,
    spectral_gap,
)
from irlap.metrics import ir_combinatorial
from irlap.perms import parse_perm, trivial_subgroup, winner_subgroup


@pytest.fixture(scope="module")
def bundle3():
    bundle = build_one_voter(3)
    bundle.check()
    return bundle


@pytest.fixture(scope="module")
def bundle4():
    bundle = build_one_voter(4)
    bundle.check()
    return bundle


def test_bundle_row_sums(bundle3):
    for j in range(3):
        assert (bundle3.X[j].sum(axis=1) == 2).all()  # (m-1)! = 2


def test_d_matrices_sum_to_identity(bundle3):
    assert np.abs(bundle3.D.sum(axis=0) - np.eye(2)).max() <= 1e-12


def test_y_eigenvalues_m4(bundle4):
    for j in range(4):
        eig = np.linalg.eigvalsh(bundle4.Y[j].astype(float))
        assert eig.min() >= -1e-9
        for v in eig:
            assert min(abs(v), abs(v - 6)) <= 1e-9  # {0, (m-1)!}


def test_hat_l1_m3():
    system = hat_l1(3)
    vals = [(round(v, 9), k) for v, k in system.clusters]
    assert vals == [(0.0, 1), (round(1 / 6, 9), 2), (round(1 / 3, 9), 1)]
    assert system.EEt_residual <= 1e-12


def test_hat_l1_m5_middle_eigenvalue():
    system = hat_l1(5)
    assert any(abs(v - 1 / 20) <= 1e-9 and k == 4 for v, k in system.clusters)


def test_hat_l1_u0_is_identity():
    for m in (3, 4, 5):
        U0 = hat_l1(m).U0.reshape(m - 1, m - 1)
        assert np.abs(U0 - np.eye(m - 1)).max() <= 1e-9


def test_eet_eigenvalues_m3():
    system = hat_l1(3)
    eig = np.linalg.eigvalsh(system.E @ system.E.T)
    assert np.allclose(sorted(eig), [1 / 3, 1 / 3, 2 / 3], atol=1e-12)


def test_hat_l1_rejects_m2():
    with pytest.raises(ValueError):
        hat_l1(2)


def test_one_voter_dense_spectrum_m3():
    # Eigenvalues of L/m! come in three plateaus: the kernel, the
    # rho1-block value 1/(m(m-1)), and 1/m (rho1 remainder plus all
    # higher components).
    L = build_Ln_dense(3, 1)
    clusters = cluster_eigenvalues(np.linalg.eigvalsh(L))
    assert [(round(v, 9), k) for v, k in clusters] == [
        (0.0, 4), (round(1 / 6, 9), 4), (round(1 / 3, 9), 4)]


@pytest.mark.parametrize("m,n", [(3, 1), (3, 2), (4, 1), (4, 2)])
def test_kernel_is_lin_space(m, n):
    table = rho1_table(m)
    L = build_Ln_dense(m, n)
    eigvals, eigvecs = np.linalg.eigh(L)
    kernel_dim = int((eigvals < 1e-9).sum())
    assert kernel_dim == (n + 1) * (m - 1)
    fact = factorial(m)
    for idx in range(kernel_dim):
        vec = eigvecs[:, idx].reshape(fact**n, 1, m - 1)
        rows = np.zeros((fact**n, m - 1, m - 1))
        rows[:, 0, :] = vec[:, 0, :]
        _, residual = project_to_lin(rows, n, table)
        assert residual <= 1e-16
    # conversely the lin space lies in the numerical kernel
    Q = lin_space_basis(m, n, table)
    assert np.abs(L @ Q).max() <= 1e-8


def test_higher_components_pinned_at_inverse_m():
    # On the orthocomplement of all degree <= 1 functions the
    # normalized one-voter operator acts as exactly 1/m.
    for m in (3, 4):
        table = rho1_table(m)
        fact = factorial(m)
        L = build_Ln_dense(m, 1)
        d = m - 1
        cols = [np.ones(fact)]
        cols += [table.R[:, a, b] for a in range(d) for b in range(d)]
        Qx, _ = np.linalg.qr(np.column_stack(cols))
        P = np.eye(fact) - Qx @ Qx.T
        proj = np.kron(P, np.eye(d))
        restricted = proj @ L @ proj
        eig = np.linalg.eigvalsh(restricted)
        outside = eig[eig > 1e-9]
        assert outside.min() >= 1 / m - 1e-9


def test_quadratic_forms_zero_on_dictators(bundle3):
    H = trivial_subgroup(3)
    d = make_dictator(1, parse_perm("213", 3), H, 1)
    for variant in ("L1", "L2", "L"):
        qf = apply_quadratic_form(d, bundle3, variant)
        assert abs(float(qf.canonical)) <= 1e-9
    c = make_constant(0, H, 1)
    for variant in ("L1", "L2", "L"):
        assert abs(float(apply_quadratic_form(c, bundle3, variant).canonical)) <= 1e-9


@pytest.mark.parametrize("m,n,scf", [(3, 1, False), (3, 2, False),
                                     (3, 1, True), (3, 2, True),
                                     (4, 1, False), (4, 1, True)])
def test_equivalence_chain(m, n, scf, bundle3, bundle4):
    bundle = bundle3 if m == 3 else bundle4
    H = winner_subgroup(m) if scf else trivial_subgroup(m)
    rng = np.random.default_rng(17)
    for _ in range(20):
        agg = random_aggregator(m, n, H, rng)
        oracle = ir_combinatorial(agg, with_quadratic=False).profile_distance
        assert apply_quadratic_form(agg, bundle, "L1").canonical == oracle
        assert apply_quadratic_form(agg, bundle, "L2").canonical == oracle
        assert abs(apply_quadratic_form(agg, bundle, "L").canonical - float(oracle)) <= 1e-9
        assert abs(apply_Ln(encode_g(agg)) - float(oracle)) <= 1e-9


def test_kappa_calibration(bundle3):
    for H in (trivial_subgroup(3), winner_subgroup(3)):
        for variant in ("L1", "L2"):
            ratios = calibrate_kappa(variant, 3, 1, H, bundle3, trials=5)
            assert ratios, "degenerate calibration sample"
            assert all(r == kappa(variant, 3, 1) for r in ratios)
        ratios = calibrate_kappa("L", 3, 1, H, bundle3, trials=5)
        assert all(abs(r - float(kappa("L", 3, 1))) <= 1e-9 for r in ratios)


def test_lprime_offset_matches_constant_aggregator(bundle3):
    # A constant aggregator has IR 0; the raw L' value on it is exactly
    # the structural offset.
    H = winner_subgroup(3)
    c = make_constant(1, H, 1)
    qf = apply_quadratic_form(c, bundle3, "L1")
    assert qf.raw == lprime_offset(3, 1, H)
    assert qf.canonical == 0


@pytest.mark.parametrize("m,n", [(3, 1), (3, 2), (4, 1), (4, 2)])
def test_gap_brackets(m, n):
    rep = spectral_gap(m, n)
    lo, hi = gap_bracket(m, n)
    assert rep.exhaustive
    assert float(lo) - 1e-9 <= rep.gap <= float(hi) + 1e-9
    assert rep.min_eigenvalue >= -1e-9


def test_gap_m3_n1_exact():
    assert abs(spectral_gap(3, 1).gap - 1 / 6) <= 1e-9


def test_rayleigh_fallback_is_upper_bound():
    dense = spectral_gap(3, 2)
    sampled = spectral_gap(3, 2, dense_limit=10, samples=32, seed=3)
    assert not sampled.exhaustive
    assert sampled.note
    assert sampled.gap >= dense.gap - 1e-9


def test_bundle_memory_refusal():
    with pytest.raises(FeasibilityError):
        build_one_voter(8)


def test_apply_ln_budget_refusal():
    H = trivial_subgroup(3)
    rng = np.random.default_rng(0)
    agg = random_aggregator(3, 2, H, rng)
    with pytest.raises(FeasibilityError):
        apply_Ln(encode_g(agg), budget=10)


def test_ln_matches_dense_operator():
    # tr(G L^n G^T) via the matrix-free path equals the dense operator
    # applied to the rows of a random encoding.
    m, n = 3, 2
    rng = np.random.default_rng(5)
    H = trivial_subgroup(m)
    agg = random_aggregator(m, n, H, rng)
    enc = encode_g(agg)
    Ln = build_Ln_dense(m, n) * factorial(m)  # un-normalized
    dense_raw = 0.0
    for k in range(m - 1):
        vec = enc.g[:, k, :].reshape(-1)
        dense_raw += float(vec @ Ln @ vec)
    canonical = 2 * dense_raw / factorial(m) ** (n + 1)
    assert abs(canonical - apply_Ln(enc)) <= 1e-9
