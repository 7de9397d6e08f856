import numpy as np
import pytest

from blochhom.abstract import family_budget, validate_fibre
from blochhom.cell import mean_matrix
from blochhom.elliptic import (
    EllipticWorkspace,
    build_block_fibre,
    build_hom_block_fibre,
    certify_elliptic_rate,
    certify_flux,
    fibre_hom_resolvent,
    hom_first_order_u_block,
    macro_block_identity_gap,
    second_order_equivalence_gap,
)
from blochhom.fourier import CoefficientField, ModeSet
from blochhom.linalg import operator_norm
from blochhom.config import theta_grid

from conftest import laminate_1d, random_coercive_field, unit_s, varying_s_1d


@pytest.fixture(scope="module")
def lam_setup():
    return laminate_1d(), varying_s_1d(), ModeSet.build(1, 1, 16)


def test_identity_coefficients_give_identity_m_block():
    ms = ModeSet.build(1, 1, 6)
    one = CoefficientField.constant([[1.0]], d=1)
    for theta in ([0.0], [1.2], [-np.pi]):
        fib = build_block_fibre(one, one, ms, theta)
        assert np.abs(fib.m_block - np.eye(fib.dim)).max() < 1e-12


def test_block_fibre_structural_conditions(lam_setup):
    a, s, ms = lam_setup
    rng = np.random.default_rng(0)
    for theta in rng.uniform(-np.pi, np.pi * 0.999, size=10):
        fib = build_block_fibre(a, s, ms, [theta])
        rep = validate_fibre(fib.to_abstract())
        assert rep.passed
        assert rep.c_r_fibre <= 1.0 / np.pi + 1e-9
        assert np.abs(fib.a_block + fib.a_block.conj().T).max() < 1e-12
        report_nu = 0.5  # declared nu of the varying zero-order coefficient
        sup_a = 3.0
        assert rep.c_lower >= report_nu / (sup_a ** 2 + 1.0) - 1e-10


def test_second_order_equivalence(lam_setup):
    a, s, ms = lam_setup
    for theta, eps in (([0.6], 0.3), ([-np.pi], 0.05), ([0.0], 1.0)):
        ws = EllipticWorkspace(a, s, ms, theta)
        assert second_order_equivalence_gap(ws, eps, seed=3) < 1e-9


def test_macro_block_identity(lam_setup):
    a, s, ms = lam_setup
    for theta in ([0.0], [2.2], [-1.0]):
        ws = EllipticWorkspace(a, s, ms, theta)
        fib = build_block_fibre(a, s, ms, theta, ws=ws)
        assert macro_block_identity_gap(ws, fib) < 1e-9
        hom_fib = build_hom_block_fibre(ws)
        assert macro_block_identity_gap(ws, hom_fib) < 1e-9
        # the two block families share the distinguished compression exactly
        idx = fib.macro_idx
        gap = np.abs(fib.m_block[np.ix_(idx, idx)]
                     - hom_fib.m_block[np.ix_(idx, idx)]).max()
        assert gap < 1e-11


def test_hom_resolvent_constant_coefficients():
    ms = ModeSet.build(1, 1, 8)
    const_a = CoefficientField.constant([[2.5]], d=1)
    const_s = CoefficientField.constant([[1.5]], d=1)
    ws = EllipticWorkspace(const_a, const_s, ms, [0.9])
    for eps in (0.5, 0.05):
        exact = ws.second_order_exact(eps)
        hom = fibre_hom_resolvent(const_a, const_s, ms, [0.9], eps, ws=ws)
        assert operator_norm(exact - hom) < 1e-12


def test_hom_resolvent_first_order_route(lam_setup):
    a, s, ms = lam_setup
    ws = EllipticWorkspace(a, s, ms, [1.7])
    for eps in (0.2, 0.02):
        t_second = ws.second_order_hom(eps)
        t_first = hom_first_order_u_block(ws, eps)
        assert (operator_norm(t_second - t_first)
                / operator_norm(t_second)) < 1e-9


def test_large_eps_zero_mode_limit():
    # at theta = 0 and eps -> infinity the resolvent concentrates on the
    # zero-mode block where it inverts the mean of s
    ms = ModeSet.build(1, 1, 8)
    a = laminate_1d()
    s = varying_s_1d()
    ws = EllipticWorkspace(a, s, ms, [0.0])
    eps = 1e6
    hom = ws.second_order_hom(eps)
    m_s = mean_matrix(s)[0, 0]
    assert abs(hom[0, 0] - 1.0 / m_s) < 1e-9


def test_hom2_freedom_on_residual_block(lam_setup):
    # perturbing M only on R leaves the compression alone; resolvents stay
    # within the summed budgets
    a, s, ms = lam_setup
    ws = EllipticWorkspace(a, s, ms, [0.8])
    fib = build_block_fibre(a, s, ms, [0.8], ws=ws)
    abstract = fib.to_abstract()
    rng = np.random.default_rng(1)
    rb = abstract.residual_basis
    q = rb.shape[1]
    g = rng.standard_normal((q, q)) + 1j * rng.standard_normal((q, q))
    perturb = rb @ (g @ g.conj().T / q + 0.1 * (g - g.conj().T)) @ rb.conj().T
    m2 = abstract.m_op + perturb
    from blochhom.abstract import OperatorFamilyFibre, resolvent

    tilde = OperatorFamilyFibre(m_op=m2, a_op=abstract.a_op,
                                macro_basis=abstract.macro_basis)
    k1 = family_budget([abstract]).kappa
    k2 = family_budget([tilde]).kappa
    for eps in (1e-2, 1e-3):
        gap = operator_norm(resolvent(abstract, eps) - resolvent(tilde, eps))
        assert gap <= (k1 + k2) * eps


def test_certify_constant_coefficients_zero_error():
    ms = ModeSet.build(1, 1, 6)
    const_a = CoefficientField.constant([[2.0]], d=1)
    const_s = CoefficientField.constant([[1.0]], d=1)
    cert = certify_elliptic_rate(const_a, const_s, ms, theta_grid([3]),
                                 [0.1, 0.01], doubling_check=False)
    assert all(r.err < 1e-11 for r in cert.rows)
    assert cert.slope is None  # exact zeros carry no rate information
    flux = certify_flux(const_a, const_s, ms, theta_grid([3]), [0.1, 0.01])
    assert all(r.err < 1e-11 for r in flux.rows)


def test_certify_laminate_rate(lam_setup):
    a, s, ms = lam_setup
    eps_list = np.geomspace(0.3, 3e-4, 7)
    cert = certify_elliptic_rate(a, s, ms, theta_grid([5]), eps_list)
    assert cert.all_pass
    assert cert.monotone
    assert 0.85 <= cert.slope <= 1.3
    assert not cert.truncation_flag
    assert cert.extras["macro_variant_max_ratio"] <= 1.0


def test_certify_flux_laminate(lam_setup):
    a, s, ms = lam_setup
    eps_list = np.geomspace(0.3, 3e-4, 7)
    flux = certify_flux(a, s, ms, theta_grid([5]), eps_list)
    assert flux.all_pass
    assert 0.85 <= flux.slope <= 1.3


def test_grid_only_sweep_underestimates_rate(lam_setup):
    # without the crossover probes the fixed grid shows the quadratic decay
    # of individual fibres; this is the discretisation artefact the probes
    # remove
    a, s, ms = lam_setup
    eps_list = np.geomspace(0.1, 1e-3, 5)
    cert = certify_elliptic_rate(a, s, ms, theta_grid([5]), eps_list,
                                 doubling_check=False, macro_variant=False,
                                 include_crossover=False)
    assert cert.slope > 1.7
    assert cert.all_pass


def test_random_field_bound_holds():
    a = random_coercive_field(23, d=1, dim=1, nu=0.8, skew=0.4)
    s = unit_s(1)
    ms = ModeSet.build(1, 1, 10)
    cert = certify_elliptic_rate(a, s, ms, theta_grid([3]),
                                 np.geomspace(0.1, 1e-3, 5),
                                 doubling_check=False)
    assert cert.all_pass
