import numpy as np
import pytest

from blochhom.fourier import (
    CoefficientField,
    ModeSet,
    QuasiPeriodicField,
    check_theta,
    cross_matrix,
    curl_theta_matrix,
    div_theta_matrix,
    grad_theta_matrix,
    gram_projector,
    multiplication_matrix,
    p_space_generators,
    projection_n_matrix,
    projection_p_matrix,
    tensor_p_basis,
    vector_n_basis,
    vector_r_basis,
)
from blochhom.linalg import min_real_eig, smallest_singular_value

from conftest import laminate_1d


def test_mode_set_counts_and_order():
    for d, trunc in ((1, 4), (2, 3), (3, 2)):
        ms = ModeSet.build(d, 1, trunc)
        assert ms.num_modes == (2 * trunc + 1) ** d
        assert tuple(ms.modes[0]) == tuple([0] * d)
        rest = [tuple(z) for z in ms.modes[1:]]
        assert rest == sorted(rest)
        assert ms.index_of([0] * d) == 0


def test_theta_validation():
    check_theta([-np.pi, 0.0], 2)
    with pytest.raises(ValueError):
        check_theta([np.pi], 1)  # right endpoint excluded
    with pytest.raises(ValueError):
        check_theta([0.0, 0.0], 1)


def test_quasi_field_parseval():
    ms = ModeSet.build(2, 3, 2)
    rng = np.random.default_rng(0)
    coeffs = rng.standard_normal((ms.num_modes, 3)) \
        + 1j * rng.standard_normal((ms.num_modes, 3))
    field = QuasiPeriodicField(ms, coeffs)
    assert field.norm() == pytest.approx(np.linalg.norm(coeffs))
    assert np.array_equal(
        QuasiPeriodicField.from_flat(ms, field.flat()).coeffs, coeffs)


def test_grad_single_mode_multiplier():
    # d = 1, theta = pi/2, mode z = 1: coefficient picks up i (pi/2 + 2 pi)
    ms = ModeSet.build(1, 1, 2)
    grad = grad_theta_matrix(ms, [np.pi / 2])
    j = ms.index_of([1])
    vec = np.zeros(ms.num_modes, dtype=complex)
    vec[j] = 1.0
    out = grad @ vec
    assert out[j] == pytest.approx(1j * (np.pi / 2 + 2 * np.pi))
    # theta = 0, zero mode: constants are annihilated
    grad0 = grad_theta_matrix(ms, [0.0])
    e0 = np.zeros(ms.num_modes, dtype=complex)
    e0[0] = 1.0
    assert np.linalg.norm(grad0 @ e0) == 0.0


def test_grad_parseval_identity():
    ms = ModeSet.build(2, 2, 3)
    theta = np.array([0.3, -1.2])
    grad = grad_theta_matrix(ms, theta)
    rng = np.random.default_rng(1)
    c = rng.standard_normal((ms.num_modes, 2)) \
        + 1j * rng.standard_normal((ms.num_modes, 2))
    freqs = ms.frequencies(theta)
    expected = np.sum(np.linalg.norm(freqs, axis=1) ** 2
                      * np.linalg.norm(c, axis=1) ** 2)
    assert np.linalg.norm(grad @ c.reshape(-1)) ** 2 == pytest.approx(expected)


def test_div_is_negative_adjoint_of_grad():
    for d, theta in ((1, [0.7]), (2, [0.7, -np.pi]), (3, [0.1, 0.2, 0.3])):
        ms = ModeSet.build(d, 2, 2)
        grad = grad_theta_matrix(ms, theta)
        div = div_theta_matrix(ms, theta)
        assert np.max(np.abs(div + grad.conj().T)) == 0.0


def test_div_grad_is_laplacian_symbol():
    ms = ModeSet.build(2, 1, 2)
    theta = np.array([0.5, 0.25])
    lap = div_theta_matrix(ms, theta) @ grad_theta_matrix(ms, theta)
    freqs = ms.frequencies(theta)
    expected = -np.diag(np.linalg.norm(freqs, axis=1) ** 2)
    assert np.abs(lap - expected).max() < 1e-13


def test_div_kills_orthogonal_single_mode():
    ms = ModeSet.build(2, 1, 2)
    theta = np.array([0.4, -0.9])
    div = div_theta_matrix(ms, theta)
    z = ms.index_of([1, 1])
    v = ms.frequencies(theta)[z]
    perp = np.array([-v[1], v[0]])
    vec = np.zeros(ms.num_modes * 2, dtype=complex)
    vec[2 * z:2 * z + 2] = perp
    assert np.linalg.norm(div @ vec) < 1e-13


def test_curl_requires_three_dimensions():
    with pytest.raises(ValueError):
        curl_theta_matrix(ModeSet.build(2, 2, 1), [0.0, 0.0])


def test_curl_single_mode_cross_product():
    ms = ModeSet.build(3, 3, 1)
    curl = curl_theta_matrix(ms, [0.0, 0.0, 0.0])
    z = ms.index_of([1, 0, 0])
    vec = np.zeros(3 * ms.num_modes, dtype=complex)
    vec[3 * z + 1] = 1.0  # e2 coefficient at mode (1,0,0)
    out = (curl @ vec)[3 * z:3 * z + 3]
    assert np.allclose(out, [0.0, 0.0, 1j * 2 * np.pi])


def test_curl_hermitian_and_kills_gradients():
    ms = ModeSet.build(3, 3, 1)
    theta = np.array([0.3, -0.8, 1.4])
    curl = curl_theta_matrix(ms, theta)
    assert np.max(np.abs(curl - curl.conj().T)) == 0.0
    scalar_ms = ModeSet.build(3, 1, 1)
    grad = grad_theta_matrix(scalar_ms, theta)
    rng = np.random.default_rng(2)
    p = rng.standard_normal(scalar_ms.num_modes) \
        + 1j * rng.standard_normal(scalar_ms.num_modes)
    assert np.linalg.norm(curl @ (grad @ p)) < 1e-12


def test_multiplication_constant_block_diagonal():
    const = np.array([[2.0, 1j], [-1j, 3.0]])
    coef = CoefficientField.constant(const, d=2)
    ms = ModeSet.build(2, 2, 1)
    mult = multiplication_matrix(coef, ms)
    expected = np.kron(np.eye(ms.num_modes), const)
    assert np.abs(mult - expected).max() == 0.0


def test_multiplication_laminate_convolution_oracle():
    lam = laminate_1d()
    ms = ModeSet.build(1, 1, 3)
    mult = multiplication_matrix(lam, ms)
    # direct convolution oracle over mode pairs
    oracle = np.zeros_like(mult)
    for i, zi in enumerate(ms.modes):
        for j, zj in enumerate(ms.modes):
            w = tuple(zi - zj)
            if w in lam.modes:
                oracle[i, j] = lam.modes[w][0, 0]
    assert np.abs(mult - oracle).max() == 0.0
    # coupling is tridiagonal in the mode index ordering by frequency
    assert oracle[ms.index_of([2]), ms.index_of([1])] == 0.5
    assert oracle[ms.index_of([2]), ms.index_of([0])] == 0.0


def test_multiplication_inherits_coercivity():
    for seed in range(3):
        rng = np.random.default_rng(seed)
        from conftest import random_coercive_field

        coef = random_coercive_field(seed, d=2, dim=2, nu=0.7, skew=0.4)
        ms = ModeSet.build(2, 1, int(rng.integers(2, 5)))
        mult = multiplication_matrix(coef, ms)
        assert min_real_eig(mult) >= 0.7 - 1e-10


def test_projection_p_matches_gram_oracle():
    rng = np.random.default_rng(3)
    cases = []
    for _ in range(10):
        cases.append((1, 1, int(rng.integers(2, 6))))
        cases.append((2, 2, int(rng.integers(1, 3))))
    for d, n, trunc in cases:
        ms = ModeSet.build(d, n, trunc)
        theta = rng.uniform(-np.pi, np.pi * 0.999, size=d)
        proj = projection_p_matrix(ms, theta)
        oracle = gram_projector(p_space_generators(ms, theta))
        assert np.abs(proj - oracle).max() < 1e-12
        assert np.abs(proj @ proj - proj).max() < 1e-12
        basis = tensor_p_basis(ms, theta)
        assert np.abs(basis.conj().T @ basis
                      - np.eye(basis.shape[1])).max() < 1e-13
        assert np.abs(basis @ basis.conj().T - proj).max() < 1e-12


def test_projection_p_specific_vectors():
    ms = ModeSet.build(2, 1, 2)
    theta = np.array([1.1, -0.4])
    proj = projection_p_matrix(ms, theta)
    # mode-0 tensors are kept whole
    x = np.zeros(ms.num_modes * 2, dtype=complex)
    x[:2] = [1.0, 2.0]
    assert np.allclose(proj @ x, x)
    # parallel single mode kept, orthogonal single mode killed
    z = ms.index_of([1, -1])
    v = ms.frequencies(theta)[z]
    par = np.zeros_like(x)
    par[2 * z:2 * z + 2] = v
    prp = np.zeros_like(x)
    prp[2 * z:2 * z + 2] = [-v[1], v[0]]
    assert np.linalg.norm(proj @ par - par) < 1e-12
    assert np.linalg.norm(proj @ prp) < 1e-12


def test_projection_p_contains_gradients():
    ms = ModeSet.build(2, 2, 2)
    theta = np.array([-np.pi, 0.7])
    proj = projection_p_matrix(ms, theta)
    grad = grad_theta_matrix(ms, theta)
    assert np.abs(proj @ grad - grad).max() < 1e-12
    div = div_theta_matrix(ms, theta)
    eye = np.eye(proj.shape[0])
    assert np.abs(div @ (eye - proj)).max() < 1e-12


def test_projection_n_vectors_and_idempotency():
    ms = ModeSet.build(3, 3, 1)
    theta = np.array([0.9, 0.1, -1.3])
    proj = projection_n_matrix(ms, theta)
    assert np.abs(proj @ proj - proj).max() < 1e-13
    gamma = np.zeros(3 * ms.num_modes, dtype=complex)
    gamma[:3] = [1.0, -2.0, 0.5]
    assert np.allclose(proj @ gamma, gamma)
    z = ms.index_of([0, 1, 0])
    v = ms.frequencies(theta)[z]
    w = np.cross(v, [1.0, 0.4, -0.2])
    vec = np.zeros_like(gamma)
    vec[3 * z:3 * z + 3] = w
    assert np.linalg.norm(proj @ vec) < 1e-12
    n_basis = vector_n_basis(ms, theta)
    r_basis = vector_r_basis(ms, theta)
    assert np.abs(n_basis.conj().T @ n_basis
                  - np.eye(n_basis.shape[1])).max() < 1e-13
    assert np.abs(r_basis.conj().T @ r_basis
                  - np.eye(r_basis.shape[1])).max() < 1e-13
    assert np.abs(n_basis.conj().T @ r_basis).max() < 1e-13
    assert n_basis.shape[1] + r_basis.shape[1] == 3 * ms.num_modes


def test_poincare_constants_elliptic():
    # smallest singular value of grad restricted to zero-mean fields >= pi
    for d in (1, 2):
        ms = ModeSet.build(d, 1, 3)
        for theta in ([0.0] * d, [-np.pi] * d, [0.5] * d):
            grad = grad_theta_matrix(ms, theta)
            restricted = grad[:, 1:]
            smin = smallest_singular_value(restricted)
            assert smin >= np.pi - 1e-12
            freqs = ms.frequencies(theta)
            assert smin == pytest.approx(
                np.min(np.linalg.norm(freqs[1:], axis=1)))


def test_coefficient_validation_and_reality():
    lam = laminate_1d()
    report = lam.validate()
    assert report.passed
    assert report.nu_measured == pytest.approx(1.0, abs=1e-12)
    assert report.sup_norm == pytest.approx(3.0, abs=1e-12)
    bad = CoefficientField(
        d=1, shape=(1, 1),
        modes={(0,): [[2.0]], (1,): [[0.5 + 0.2j]], (-1,): [[0.5]]},
        declared_nu=0.5, declared_real=True)
    assert not bad.validate().reality_ok


def test_cross_matrix_orientation():
    v = np.array([1.0, 2.0, 3.0])
    u = np.array([-0.3, 0.5, 0.9])
    assert np.allclose(cross_matrix(v) @ u, np.cross(v, u))
