import numpy as np
import pytest

from etr.linalg import (
    as_symmetric,
    eig_sym,
    is_psd,
    kron_identity,
    min_eig_multiplicity,
    nullspace,
    span_rank,
    vec,
)


def random_symmetric(rng, n, scale=1.0):
    g = rng.normal(size=(n, n)) * scale
    return 0.5 * (g + g.T)


def test_as_symmetric_rejects_nonsquare_and_skew():
    with pytest.raises(ValueError):
        as_symmetric(np.ones((2, 3)))
    with pytest.raises(ValueError):
        as_symmetric([[0.0, 1.0], [-1.0, 0.0]])


def test_eig_identity():
    dec = eig_sym(np.eye(3))
    assert np.allclose(dec.eigenvalues, [1.0, 1.0, 1.0])


def test_eig_negative_identity_multiplicity():
    lam, mult, basis = min_eig_multiplicity(-np.eye(3))
    assert lam == pytest.approx(-1.0)
    assert mult == 3
    assert basis.shape == (3, 3)


def test_eig_2x2_against_quadratic_formula():
    # independent oracle: roots of the characteristic polynomial
    rng = np.random.default_rng(7)
    for _ in range(50):
        s = random_symmetric(rng, 2, scale=3.0)
        tr, det = np.trace(s), np.linalg.det(s)
        disc = np.sqrt(max(tr * tr - 4.0 * det, 0.0))
        expected = np.sort([(tr - disc) / 2.0, (tr + disc) / 2.0])
        got = eig_sym(s).eigenvalues
        assert np.allclose(got, expected, atol=1e-10)


def test_eig_reconstruction_and_orthonormality():
    rng = np.random.default_rng(0)
    for n in (1, 2, 5, 17, 40):
        s = random_symmetric(rng, n, scale=4.0)
        w, q = eig_sym(s)
        assert np.max(np.abs(q.T @ q - np.eye(n))) <= 1e-10
        resid = np.max(np.abs(q @ np.diag(w) @ q.T - s))
        assert resid <= 1e-8 * (1.0 + np.max(np.abs(s)))
        assert np.all(np.diff(w) >= -1e-12)


def test_eig_large_order_uses_lapack_path():
    rng = np.random.default_rng(3)
    s = random_symmetric(rng, 70)
    w, q = eig_sym(s)
    assert np.max(np.abs(q @ np.diag(w) @ q.T - s)) <= 1e-8 * (1 + np.max(np.abs(s)))


def test_multiplicity_distinct():
    lam, mult, _ = min_eig_multiplicity(np.diag([-1.0, 0.0, 2.0]), tol=1e-8)
    assert (lam, mult) == (-1.0, 1)


def test_multiplicity_tolerance_clustering():
    # exact eigenvalues are the diagonal; the 1e-12 split is below tol
    lam, mult, basis = min_eig_multiplicity(
        np.diag([-1.0, -1.0 + 1e-12, 5.0]), tol=1e-8
    )
    assert lam == pytest.approx(-1.0)
    assert mult == 2
    assert basis.shape == (3, 2)


def test_kron_identity_trivial():
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(kron_identity(1, m), m)
    assert np.array_equal(kron_identity(2, [[1.0]]), np.eye(2))
    with pytest.raises(ValueError):
        kron_identity(0, m)


def test_kron_trace_identity():
    # Tr(A^T B A) = vec(A)^T (I_s x B) vec(A) on random blocks
    rng = np.random.default_rng(11)
    for _ in range(100):
        p = rng.integers(1, 7)
        s = rng.integers(1, 7)
        a = rng.normal(size=(p, s))
        b = random_symmetric(rng, p)
        lhs = np.trace(a.T @ b @ a)
        va = vec(a)
        rhs = va @ kron_identity(s, b) @ va
        assert abs(lhs - rhs) <= 1e-10 * (1 + abs(lhs))


def test_vec_definition_and_identities():
    assert np.array_equal(vec([[1.0, 2.0], [3.0, 4.0]]), [1.0, 3.0, 2.0, 4.0])
    rng = np.random.default_rng(5)
    for _ in range(100):
        u = rng.normal(size=4)
        v = rng.normal(size=3)
        # elementwise-expansion oracle: vec(u v^T) = v kron u
        outer = np.array([[ui * vj for vj in v] for ui in u])
        assert np.allclose(vec(outer), np.kron(v, u), atol=1e-12)
        a = rng.normal(size=(4, 3))
        c = rng.normal(size=(4, 3))
        assert abs(np.trace(a.T @ c) - vec(a) @ vec(c)) <= 1e-10


def test_is_psd_basic():
    assert is_psd(np.eye(2), tol=0.0)
    assert not is_psd(np.diag([1.0, -1.0]), tol=1e-10)


def test_is_psd_schur_complement():
    # [[M1, M2], [M2^T, M3]] psd iff the Schur complement of M1 > 0 is psd
    rng = np.random.default_rng(13)
    for _ in range(60):
        k, r = rng.integers(1, 4), rng.integers(1, 4)
        g = rng.normal(size=(k, k))
        m1 = g @ g.T + np.eye(k)
        m2 = rng.normal(size=(k, r))
        m3 = random_symmetric(rng, r)
        big = np.block([[m1, m2], [m2.T, m3]])
        schur = m3 - m2.T @ np.linalg.solve(m1, m2)
        lam = np.linalg.eigvalsh(schur)[0]
        if abs(lam) < 1e-9:
            continue  # too close to the boundary to decide either way
        assert is_psd(big, tol=1e-10) == (lam > 0)


def test_span_rank_examples():
    assert span_rank([(1.0, 0.0, 0.0), (1.0, 1.0, 1.0)]) == 2
    assert span_rank([]) == 0
    b = np.array([2.0, -1.0, 0.5])
    assert span_rank([b, -b]) == 1
    assert span_rank([np.zeros(3), np.zeros(3)]) == 0


def test_span_rank_invariances():
    rng = np.random.default_rng(17)
    vs = [rng.normal(size=5) for _ in range(3)]
    base = span_rank(vs)
    assert span_rank(vs[::-1]) == base
    assert span_rank([3.0 * v for v in vs]) == base
    assert span_rank([0.01 * vs[0], 100.0 * vs[1], vs[2]]) == base


def test_nullspace():
    ns = nullspace(np.array([[1.0, 0.0, 0.0]]))
    assert ns.shape == (3, 2)
    assert np.allclose(ns[0], 0.0)
    full = nullspace(np.zeros((0, 4)))
    assert full.shape == (4, 4)
