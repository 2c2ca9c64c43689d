import numpy as np
import pytest
import scipy.sparse as sp

from lapspec.assembly import assemble_laplacian, assemble_stiffness
from lapspec.coefficient import (QUADRANT_HIGH, builtin, constant_field,
                                 support_intervals)
from lapspec.mesh import uniform_square
from lapspec.spectral import (CholeskyFactor, NotPositiveDefiniteError,
                              cholesky, generalized_eigs,
                              preconditioned_operator_spectrum)


def test_cholesky_examples():
    assert cholesky(np.array([[4.0]])).lower[0, 0] == 2.0
    R = cholesky(np.array([[4.0, -1.0], [-1.0, 4.0]])).lower
    assert R[0, 0] == 2.0
    assert R[1, 0] == pytest.approx(-0.5, abs=1e-15)
    assert R[1, 1] == pytest.approx(np.sqrt(3.75), abs=1e-15)
    assert R[0, 1] == 0.0


def test_cholesky_reconstruction():
    L = assemble_laplacian(uniform_square(8))
    factor = cholesky(L)
    err = np.abs(factor.reconstruct() - L.toarray()).max()
    assert err <= 1e-12 * np.abs(L.toarray()).max()
    rhs = np.arange(1.0, L.shape[0] + 1)
    x = factor.solve(rhs)
    assert np.abs(L @ x - rhs).max() < 1e-9


def test_cholesky_rejects_indefinite():
    with pytest.raises(NotPositiveDefiniteError):
        cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_constant_coefficient_spectra():
    m = uniform_square(8)
    L = assemble_laplacian(m)
    for c in (1.0, 2.0, QUADRANT_HIGH):
        A = assemble_stiffness(m, constant_field(c))
        s = generalized_eigs(A, L)
        assert np.abs(s.eigenvalues / c - 1).max() < 1e-12
        # L-orthonormal eigenvectors
        g = s.eigenvectors.T @ (L @ s.eigenvectors)
        assert np.abs(g - np.eye(m.n_free)).max() < 1e-8


def test_residual_norms_small():
    m = uniform_square(8)
    A = assemble_stiffness(m, builtin("p2"))
    L = assemble_laplacian(m)
    s = generalized_eigs(A, L)
    scale = np.abs(A.toarray()).max() + \
        s.eigenvalues.max() * np.abs(L.toarray()).max()
    assert s.residual_norms.max() <= 1e-8 * scale


def test_order_mismatch_rejected():
    A = assemble_laplacian(uniform_square(4))
    L = assemble_laplacian(uniform_square(5))
    with pytest.raises(ValueError):
        generalized_eigs(A, L)


def test_exact_preconditioner_unit_spectrum():
    m = uniform_square(6)
    A = assemble_stiffness(m, builtin("p2"))
    s = preconditioned_operator_spectrum(A, cholesky(A))
    assert np.abs(s.eigenvalues - 1).max() < 1e-12


def test_congruence_invariance():
    # generalized spectrum equals the spectrum of R^-1 A R^-T with L = R R^T
    m = uniform_square(8)
    A = assemble_stiffness(m, builtin("p3"))
    L = assemble_laplacian(m)
    s1 = generalized_eigs(A, L)
    s2 = preconditioned_operator_spectrum(A, cholesky(L))
    scale = np.abs(s1.eigenvalues).max()
    assert np.abs(s1.eigenvalues - s2.eigenvalues).max() <= 1e-10 * scale
    # transformed eigenvectors are orthonormal
    vb = s2.transformed
    assert np.abs(vb.T @ vb - np.eye(m.n_free)).max() < 1e-12


def test_trace_identity():
    # sum of eigenvalues equals trace(L^-1 A), computed by N solves
    m = uniform_square(6)
    A = assemble_stiffness(m, builtin("p2"))
    L = assemble_laplacian(m).toarray()
    s = generalized_eigs(A, sp.csr_array(L))
    Ad = A.toarray()
    trace = sum(np.linalg.solve(L, Ad[:, i])[i] for i in range(m.n_free))
    assert s.eigenvalues.sum() == pytest.approx(trace, rel=1e-8)


def test_extreme_eigenvalues_within_interval_hull():
    m = uniform_square(8)
    for name in ("p2", "p3", "quadrant"):
        corners = (-1, 1) if name == "quadrant" else (0, 1)
        mm = uniform_square(8, corners)
        field = builtin(name)
        A = assemble_stiffness(mm, field)
        L = assemble_laplacian(mm)
        s = generalized_eigs(A, L)
        ivs = support_intervals(field, mm)
        lo = min(iv.kmin for iv in ivs)
        hi = max(iv.kmax for iv in ivs)
        assert s.eigenvalues[0] >= lo - 1e-9 * max(1, abs(lo))
        assert s.eigenvalues[-1] <= hi + 1e-9 * max(1, abs(hi))


def test_quadrant_multiplicities_small():
    # 8 cells on (-1,1)^2: patches clear of the axes come 9 per quadrant,
    # so 18 eigenvalues at each constant and 13 axis-crossing ones between
    m = uniform_square(8, (-1, 1))
    A = assemble_stiffness(m, builtin("quadrant"))
    L = assemble_laplacian(m)
    s = generalized_eigs(A, L)
    w = s.eigenvalues
    at_low = int(np.sum(np.abs(w - 1.0) <= 1e-8))
    at_high = int(np.sum(np.abs(w / QUADRANT_HIGH - 1.0) <= 1e-6))
    assert at_low == 18
    assert at_high == 18
    assert len(w) - at_low - at_high == 13
    middle = w[(np.abs(w - 1.0) > 1e-8)
               & (np.abs(w / QUADRANT_HIGH - 1.0) > 1e-6)]
    assert middle.min() > 1.0 and middle.max() < QUADRANT_HIGH


def test_spectrum_csv(tmp_path):
    m = uniform_square(4)
    A = assemble_stiffness(m, constant_field(2.0))
    s = generalized_eigs(A, assemble_laplacian(m))
    path = tmp_path / "eigs.csv"
    s.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "index,lambda"
    assert len(lines) == m.n_free + 1
    assert float(lines[1].split(",")[1]) == pytest.approx(2.0, rel=1e-12)
