import numpy as np
import pytest

from opchain.operator_mps import (
    SchmidtSpectrum,
    TruncationPolicy,
    VectorizedMPO,
    renyi_entropy,
    svd_truncated,
)
from opchain.spin_algebra import SpinKind, local_operator, make_basis

SZ = np.diag([1.0, -1.0]).astype(complex)
SP = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)


def random_hermitian_operator(L, kind, seed):
    rng = np.random.default_rng(seed)
    n = kind.d ** L
    m = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return m + m.conj().T


def random_unitary(n, seed):
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q, r = np.linalg.qr(m)
    return q * (np.diag(r) / np.abs(np.diag(r)))


## ---------------------------------------------------------------------------
## construction

def test_product_operator_bond_dims_and_entropy():
    mpo = VectorizedMPO.from_product_operator([(4, SZ)], L=8, kind=SpinKind.HALF)
    assert mpo.bond_dimensions() == [1] * 7
    for bond in range(1, 8):
        assert renyi_entropy(mpo.schmidt_spectrum(bond), 2) == pytest.approx(0.0, abs=1e-14)
    assert mpo.norm_log == pytest.approx(0.0, abs=1e-14)
    assert mpo.discarded_weight == 0.0


def test_product_operator_splus_norm():
    ## (1/2) Tr[s_plus^dag s_plus] = 1/2, so the recorded norm is 1/sqrt(2)
    mpo = VectorizedMPO.from_product_operator([(2, SP)], L=4, kind=SpinKind.HALF)
    assert mpo.norm_log == pytest.approx(np.log(1.0 / np.sqrt(2.0)), abs=1e-14)


def test_product_operator_string_is_product():
    sites = local_operator("string_z", SpinKind.HALF, site=5)
    mpo = VectorizedMPO.from_product_operator(sites, L=8, kind=SpinKind.HALF)
    assert mpo.bond_dimensions() == [1] * 7
    assert mpo.norm_log == pytest.approx(0.0, abs=1e-14)


def test_product_operator_rejects_zero_factor():
    with pytest.raises(ValueError):
        VectorizedMPO.from_product_operator([(1, np.zeros((2, 2)))], L=2, kind=SpinKind.HALF)


def test_product_operator_rejects_bad_sites():
    with pytest.raises(ValueError):
        VectorizedMPO.from_product_operator([(0, SZ)], L=4, kind=SpinKind.HALF)
    with pytest.raises(ValueError):
        VectorizedMPO.from_product_operator([(2, SZ), (2, SZ)], L=4, kind=SpinKind.HALF)


def test_dense_roundtrip_product():
    mpo = VectorizedMPO.from_product_operator([(2, SZ)], L=3, kind=SpinKind.HALF)
    eye = np.eye(2)
    expect = np.kron(np.kron(eye, SZ), eye)
    assert np.allclose(mpo.to_dense(), expect, atol=1e-12)


@pytest.mark.parametrize("kind,L", [(SpinKind.HALF, 4), (SpinKind.HALF, 6), (SpinKind.ONE, 3)])
def test_dense_roundtrip_random(kind, L):
    op = random_hermitian_operator(L, kind, seed=11)
    mpo = VectorizedMPO.from_dense(op, L=L, kind=kind)
    assert np.allclose(mpo.to_dense(), op, atol=1e-10 * np.abs(op).max())
    assert mpo.canonical_defect() < 1e-10


def test_bell_like_operator_spectrum():
    ## (1x1 + sz x sz)/sqrt(2) split in the middle of L=2 -> {0.5, 0.5}
    op = (np.eye(4) + np.kron(SZ, SZ)) / np.sqrt(2.0)
    mpo = VectorizedMPO.from_dense(op, L=2, kind=SpinKind.HALF)
    spec = mpo.schmidt_spectrum(1)
    assert np.allclose(np.sort(spec.values), [0.5, 0.5], atol=1e-12)


## ---------------------------------------------------------------------------
## Renyi entropies

def test_renyi_trivial_spectrum():
    assert renyi_entropy(np.array([1.0]), 2) == pytest.approx(0.0)


def test_renyi_maximally_mixed_pair():
    assert renyi_entropy(np.array([0.5, 0.5]), 2) == pytest.approx(1.0)


def test_renyi_derived_value():
    ## S_2({1/2, 1/4, 1/4}) = -log2(3/8)
    val = renyi_entropy(np.array([0.5, 0.25, 0.25]), 2)
    assert val == pytest.approx(-np.log2(0.375), abs=1e-12)
    assert val == pytest.approx(1.4150, abs=1e-4)


def test_renyi_alpha_one_von_neumann():
    lam = np.array([0.5, 0.3, 0.2])
    assert renyi_entropy(lam, 1) == pytest.approx(float(-np.sum(lam * np.log2(lam))), abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_renyi_monotonicity(seed):
    ## S_alpha >= S_beta for beta > alpha
    rng = np.random.default_rng(seed)
    lam = rng.random(8)
    lam /= lam.sum()
    values = [renyi_entropy(lam, a) for a in (0.5, 1.0, 2.0, 3.0)]
    for lo, hi in zip(values[1:], values[:-1]):
        assert lo <= hi + 1e-12


def test_renyi_rejects_bad_alpha():
    with pytest.raises(ValueError):
        renyi_entropy(np.array([1.0]), 0.0)
    with pytest.raises(ValueError):
        renyi_entropy(np.array([1.0]), -2)


## ---------------------------------------------------------------------------
## truncated SVD

def test_svd_truncated_exact_small():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((20, 14)) + 1j * rng.standard_normal((20, 14))
    u, s, vh, disc, warn = svd_truncated(a, TruncationPolicy(chi_max=14, cutoff=0.0))
    assert np.allclose(u @ np.diag(s) @ vh, a, atol=1e-10)
    assert disc == pytest.approx(0.0, abs=1e-12)


def test_svd_truncated_cap_and_discard():
    rng = np.random.default_rng(4)
    a = rng.standard_normal((30, 30))
    u, s, vh, disc, _ = svd_truncated(a, TruncationPolicy(chi_max=10, cutoff=0.0))
    assert s.size == 10
    total = np.linalg.norm(a) ** 2
    assert disc == pytest.approx(1.0 - np.sum(s**2) / total, abs=1e-12)


def test_svd_truncated_cutoff():
    ## spectrum with a hard gap: cutoff removes the tail
    u0 = np.linalg.qr(np.random.default_rng(5).standard_normal((12, 12)))[0]
    s0 = np.array([0.9, 0.4, 1e-9, 1e-10] + [0.0] * 8)
    a = (u0 * s0) @ u0.T
    _, s, _, disc, _ = svd_truncated(a, TruncationPolicy(chi_max=12, cutoff=1e-10))
    assert s.size == 2
    assert disc < 1e-15


def test_svd_truncated_randomized_matches_exact_head():
    rng = np.random.default_rng(6)
    n, k = 900, 40
    u0, _ = np.linalg.qr(rng.standard_normal((n, 120)) + 1j * rng.standard_normal((n, 120)))
    v0, _ = np.linalg.qr(rng.standard_normal((n, 120)) + 1j * rng.standard_normal((n, 120)))
    s0 = np.geomspace(1.0, 1e-8, 120)
    a = (u0 * s0) @ v0.conj().T
    pol_r = TruncationPolicy(chi_max=k, cutoff=0.0, svd_method="randomized")
    pol_e = TruncationPolicy(chi_max=k, cutoff=0.0, svd_method="exact")
    _, s_r, _, _, _ = svd_truncated(a, pol_r, seed=123)
    _, s_e, _, _, _ = svd_truncated(a, pol_e)
    assert np.allclose(s_r, s_e, rtol=1e-6)


def test_svd_truncated_randomized_deterministic():
    rng = np.random.default_rng(7)
    a = rng.standard_normal((800, 800)) + 1j * rng.standard_normal((800, 800))
    pol = TruncationPolicy(chi_max=30, cutoff=0.0, svd_method="randomized")
    u1, s1, v1, d1, _ = svd_truncated(a, pol, seed=99)
    u2, s2, v2, d2, _ = svd_truncated(a, pol, seed=99)
    assert np.array_equal(u1, u2) and np.array_equal(s1, s2) and np.array_equal(v1, v2)
    assert d1 == d2


def test_svd_truncated_rejects_nonfinite():
    a = np.array([[1.0, np.nan], [0.0, 1.0]])
    with pytest.raises(FloatingPointError):
        svd_truncated(a, TruncationPolicy())


## ---------------------------------------------------------------------------
## gate application

def test_identity_gate_is_noop():
    mpo = VectorizedMPO.from_dense(
        random_hermitian_operator(4, SpinKind.HALF, seed=21), L=4, kind=SpinKind.HALF
    )
    before = [mpo.schmidt_spectrum(b).values.copy() for b in range(1, 4)]
    gate = np.eye(16, dtype=complex)
    pol = TruncationPolicy(chi_max=64, cutoff=1e-14)
    for bond in (1, 2, 3):
        mpo.apply_two_site_gate(bond, gate, pol)
    after = [mpo.schmidt_spectrum(b).values for b in range(1, 4)]
    for b4, a4 in zip(before, after):
        assert np.allclose(np.sort(b4)[::-1][: a4.size], a4, atol=1e-12)
    assert mpo.discarded_weight < 1e-12
    assert mpo.canonical_defect() < 1e-10


@pytest.mark.parametrize("seed", [0, 1])
def test_random_unitary_gates_preserve_state(seed):
    ## with unbounded chi the evolved train stays normalized and canonical,
    ## and the dense reconstruction matches the gate applied densely
    kind = SpinKind.HALF
    L = 4
    op = random_hermitian_operator(L, kind, seed=31 + seed)
    mpo = VectorizedMPO.from_dense(op, L=L, kind=kind)
    dense_coeff_gate = random_unitary(16, seed=41 + seed)
    pol = TruncationPolicy(chi_max=256, cutoff=0.0)
    bond = 2
    mpo.apply_two_site_gate(bond, dense_coeff_gate, pol)
    assert mpo.discarded_weight < 1e-12
    assert mpo.canonical_defect() < 1e-10
    assert abs(mpo.unit_overlap(mpo) - 1.0) < 1e-10


def test_truncation_accumulates_discarded_weight():
    kind = SpinKind.HALF
    mpo = VectorizedMPO.from_dense(
        random_hermitian_operator(4, kind, seed=51), L=4, kind=kind
    )
    pol = TruncationPolicy(chi_max=2, cutoff=0.0)
    gate = random_unitary(16, seed=52)
    last = 0.0
    for bond in (2, 1, 3, 2):
        mpo.apply_two_site_gate(bond, gate, pol)
        assert mpo.discarded_weight >= last
        last = mpo.discarded_weight
        spec = mpo.schmidt_spectrum(bond)
        assert spec.values.sum() == pytest.approx(1.0, abs=1e-12)
        assert spec.values.size <= 2
    assert last > 0.0


## ---------------------------------------------------------------------------
## overlaps

def test_overlap_normalized_self():
    mpo = VectorizedMPO.from_product_operator([(3, SZ)], L=6, kind=SpinKind.HALF)
    assert mpo.overlap(mpo) == pytest.approx(1.0, abs=1e-12)


def test_overlap_orthogonal_sites():
    a = VectorizedMPO.from_product_operator([(2, SZ)], L=5, kind=SpinKind.HALF)
    b = VectorizedMPO.from_product_operator([(4, SZ)], L=5, kind=SpinKind.HALF)
    assert abs(a.overlap(b)) < 1e-14


def test_overlap_includes_norm_factors():
    ## (1/2^L) Tr[s_plus^dag s_plus] = 1/2 regardless of L
    a = VectorizedMPO.from_product_operator([(2, SP)], L=4, kind=SpinKind.HALF)
    assert a.overlap(a) == pytest.approx(0.5, abs=1e-12)


def test_overlap_matches_dense_trace():
    kind = SpinKind.HALF
    L = 3
    op_a = random_hermitian_operator(L, kind, seed=61)
    op_b = random_hermitian_operator(L, kind, seed=62)
    a = VectorizedMPO.from_dense(op_a, L=L, kind=kind)
    b = VectorizedMPO.from_dense(op_b, L=L, kind=kind)
    expect = np.trace(op_a.conj().T @ op_b) / 2 ** L
    assert a.overlap(b) == pytest.approx(expect, abs=1e-10)


def test_overlap_rejects_mismatched_chains():
    a = VectorizedMPO.from_product_operator([(1, SZ)], L=3, kind=SpinKind.HALF)
    b = VectorizedMPO.from_product_operator([(1, SZ)], L=4, kind=SpinKind.HALF)
    with pytest.raises(ValueError):
        a.overlap(b)


## ---------------------------------------------------------------------------
## Schmidt spectra against dense SVD

@pytest.mark.parametrize("bond", [1, 2, 3])
def test_schmidt_spectrum_matches_dense(bond):
    kind = SpinKind.HALF
    L = 4
    op = random_hermitian_operator(L, kind, seed=71)
    mpo = VectorizedMPO.from_dense(op, L=L, kind=kind)
    spec = mpo.schmidt_spectrum(bond)

    ## dense reference: coefficient matrix across the cut in the same basis
    basis = make_basis(kind)
    d, D = 2, 4
    x = op.reshape((d,) * (2 * L))
    perm = [ax for i in range(L) for ax in (i, L + i)]
    x = np.transpose(x, perm).reshape((D,) * L)
    t = np.stack([m.reshape(D) for m in basis.elements])
    for _ in range(L):
        x = np.tensordot(x, t.conj() / d, axes=(0, 1))
    lam_mat = x.reshape(D ** bond, D ** (L - bond))
    sv = np.linalg.svd(lam_mat, compute_uv=False)
    lam_ref = sv ** 2 / np.sum(sv ** 2)
    assert np.allclose(spec.values, lam_ref[: spec.values.size], atol=1e-10)


def test_schmidt_spectrum_bond_range():
    mpo = VectorizedMPO.from_product_operator([(1, SZ)], L=3, kind=SpinKind.HALF)
    with pytest.raises(ValueError):
        mpo.schmidt_spectrum(0)
    with pytest.raises(ValueError):
        mpo.schmidt_spectrum(3)


## ---------------------------------------------------------------------------
## serialization

def test_save_load_roundtrip(tmp_path):
    kind = SpinKind.HALF
    op = random_hermitian_operator(4, kind, seed=81)
    mpo = VectorizedMPO.from_dense(op, L=4, kind=kind)
    path = tmp_path / "snapshot.npz"
    mpo.save(path)
    back = VectorizedMPO.load(path)
    assert back.L == mpo.L and back.kind is mpo.kind
    assert back.norm_log == pytest.approx(mpo.norm_log)
    assert np.allclose(back.to_dense(), mpo.to_dense(), atol=1e-10)


def test_load_rejects_foreign_file(tmp_path):
    path = tmp_path / "other.npz"
    np.savez(path, meta=np.frombuffer(b'{"magic": "something-else"}', dtype=np.uint8))
    with pytest.raises(ValueError):
        VectorizedMPO.load(path)


def test_truncation_policy_validation():
    with pytest.raises(ValueError):
        TruncationPolicy(chi_max=0)
    with pytest.raises(ValueError):
        TruncationPolicy(cutoff=1.5)
    with pytest.raises(ValueError):
        TruncationPolicy(svd_method="fast")
