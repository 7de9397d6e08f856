"""Quasi-periodic cell problems and the theta-dependent homogenised tensor.

For a periodic tensor coefficient a and quasi-momentum theta, the corrector
for the unit tensor E_rs solves the Galerkin system over gradients of the
z != 0 modes:

    <a (grad N + e^{i theta.} E_rs), grad phi> = 0   for all test modes phi,

and the homogenised tensor collects the mode-0 coefficients of
a (grad N + e^{i theta.} E_rs).  Two independent routes are always evaluated:
the corrector assembly above and the compression of the inverse of the
P(theta)-restricted multiplication operator to the constant-tensor block.
Their mandatory agreement is the primary correctness oracle.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .fourier import (
    CoefficientField,
    ModeSet,
    check_theta,
    grad_theta_matrix,
    multiplication_matrix,
    tensor_p_basis,
)
from .linalg import min_real_eig, operator_norm

ROUTE_AGREEMENT_RTOL = 1e-10
CONDITION_WARN = 1e12


def coefficient_validation(coef: CoefficientField):
    """Cached coercivity validation (sampled nu, sup norms) for a coefficient."""
    report = getattr(coef, "_validation_cache", None)
    if report is None:
        report = coef.validate()
        coef._validation_cache = report
    return report


def mean_matrix(s: CoefficientField) -> np.ndarray:
    """Cell average of a coefficient: its zero Fourier mode."""
    if s.shape[0] != s.shape[1]:
        raise ValueError("mean_matrix expects a square coefficient")
    zero = tuple([0] * s.d)
    block = s.modes.get(zero)
    if block is None:
        return np.zeros(s.shape, dtype=complex)
    return block.copy()


class CellWorkspace:
    """Per-(coefficient, mode set, theta) matrix cache shared by the routes."""

    def __init__(self, a: CoefficientField, ms: ModeSet, theta):
        n, d = ms.n_comp, ms.d
        if a.shape != (n * d, n * d):
            raise ValueError(
                f"coefficient acts on C^({n}x{d}); expected shape "
                f"{(n * d, n * d)}, got {a.shape}")
        if ms.trunc < a.bandwidth:
            raise ValueError("mode truncation does not cover the coefficient "
                             "bandwidth")
        self.a = a
        self.ms = ms
        self.theta = check_theta(theta, ms.d)

    @cached_property
    def a_mult(self) -> np.ndarray:
        return multiplication_matrix(self.a, self.ms)

    @cached_property
    def grad(self) -> np.ndarray:
        return grad_theta_matrix(self.ms, self.theta)

    @cached_property
    def grad0(self) -> np.ndarray:
        # Columns for the z != 0 coefficient directions only (mode 0 removed).
        return self.grad[:, self.ms.n_comp:]

    @cached_property
    def p_basis(self) -> np.ndarray:
        return tensor_p_basis(self.ms, self.theta)

    @cached_property
    def a_p(self) -> np.ndarray:
        return self.p_basis.conj().T @ self.a_mult @ self.p_basis


@dataclass
class CorrectorSolution:
    theta: np.ndarray
    rs_index: tuple
    coeffs: np.ndarray  # (num_modes - 1, n): zero mode excluded
    residual_norm: float
    grad_norm: float
    cond: float


@dataclass
class HomogenisedTensor:
    """Constant tensor a^hom(theta) on C^{n x d} with its measured invariants."""

    theta: np.ndarray
    entries: np.ndarray  # (n d) x (n d)
    nu_measured: float
    norm: float
    re_norm: float
    route_gap: float
    corrector_residual: float
    cond: float

    def as_coefficient(self, d: int, label: str = "hom") -> CoefficientField:
        return CoefficientField.constant(self.entries, d=d, label=label)


def _corrector_system(ws: CellWorkspace):
    n, d = ws.ms.n_comp, ws.ms.d
    lhs = ws.grad0.conj().T @ ws.a_mult @ ws.grad0
    rhs = -ws.grad0.conj().T @ ws.a_mult[:, :n * d]
    return lhs, rhs


def solve_all_correctors(ws: CellWorkspace):
    """Correctors for all n*d unit tensors through one factorisation.

    Returns (coeff matrix, relative residual, condition number); column rs is
    the stacked z != 0 coefficient vector of the corrector for E_rs.
    """
    lhs, rhs = _corrector_system(ws)
    x = np.linalg.solve(lhs, rhs)
    resid = lhs @ x - rhs
    scale = max(np.linalg.norm(rhs), 1e-300)
    rel = float(np.linalg.norm(resid) / scale)
    cond = float(np.linalg.cond(lhs))
    if cond > CONDITION_WARN:
        warnings.warn(f"cell system condition number {cond:.3e} exceeds "
                      f"{CONDITION_WARN:.0e}", RuntimeWarning, stacklevel=2)
    return x, rel, cond


def solve_cell(a: CoefficientField, ms: ModeSet, theta, r: int, s: int,
               ws: CellWorkspace = None) -> CorrectorSolution:
    """Corrector for the unit tensor E_rs at quasi-momentum theta."""
    n, d = ms.n_comp, ms.d
    if not (0 <= r < n and 0 <= s < d):
        raise ValueError(f"component index ({r}, {s}) out of range for "
                         f"n = {n}, d = {d}")
    report = coefficient_validation(a)
    if not report.passed:
        raise ValueError(
            f"coefficient fails coercivity validation: measured nu "
            f"{report.nu_measured:.3e} at {report.worst_point}")
    if ws is None:
        ws = CellWorkspace(a, ms, theta)
    x, rel, cond = solve_all_correctors(ws)
    col = x[:, r * d + s]
    grad_norm = float(np.linalg.norm(ws.grad0 @ col))
    # Energy estimate: nu |grad N|^2 <= |a e_rs| |grad N|, with the declared
    # coercivity as the guaranteed lower bound.
    bound = float(np.linalg.norm(ws.a_mult[:, r * d + s])) / a.declared_nu
    if grad_norm > bound * (1.0 + 1e-8):
        raise ValueError(f"corrector gradient norm {grad_norm:.6e} exceeds "
                         f"the a-priori bound {bound:.6e}")
    return CorrectorSolution(
        theta=ws.theta, rs_index=(r, s),
        coeffs=col.reshape(ms.num_modes - 1, n),
        residual_norm=rel, grad_norm=grad_norm, cond=cond)


def assemble_hom_tensor(a: CoefficientField, ms: ModeSet, theta,
                        ws: CellWorkspace = None) -> HomogenisedTensor:
    """Homogenised tensor via correctors, cross-checked sesquilinearly.

    Route one reads the mode-0 coefficients of a acting on the corrected
    fields; route two evaluates the energy pairings of corrected fields
    against each other.  Algebraically both coincide; their measured gap is
    the solver residual and must stay below the route tolerance.
    """
    report = coefficient_validation(a)
    if not report.passed:
        raise ValueError(
            f"coefficient fails coercivity validation: measured nu "
            f"{report.nu_measured:.3e} at {report.worst_point}")
    if ws is None:
        ws = CellWorkspace(a, ms, theta)
    n, d = ms.n_comp, ms.d
    nd = n * d
    x, rel, cond = solve_all_correctors(ws)
    fields = ws.grad0 @ x
    fields[:nd, :] += np.eye(nd)
    a_fields = ws.a_mult @ fields
    entries = a_fields[:nd, :].copy()
    entries_pairing = fields.conj().T @ a_fields
    scale = max(operator_norm(entries), 1e-300)
    route_gap = operator_norm(entries - entries_pairing) / scale
    if route_gap > ROUTE_AGREEMENT_RTOL:
        raise ValueError(f"corrector and pairing assemblies disagree: "
                         f"relative gap {route_gap:.3e}")
    nu_meas = min_real_eig(entries)
    norm = operator_norm(entries)
    re_norm = operator_norm(0.5 * (entries + entries.conj().T))
    tol = 1e-8 * max(1.0, norm)
    if nu_meas < a.declared_nu - tol:
        raise ValueError(f"homogenised tensor lost coercivity: "
                         f"{nu_meas:.6e} < declared {a.declared_nu:.6e}")
    # For pointwise Hermitian coefficients the corrector minimises the energy,
    # so the Hermitian part is dominated by the Hermitian part of the exact
    # cell average.  The variational argument needs that symmetry; strongly
    # skew coefficients can genuinely violate the comparison.
    if a.is_pointwise_hermitian():
        re_mean = operator_norm(
            0.5 * (mean_matrix(a) + mean_matrix(a).conj().T))
        if re_norm > re_mean + tol:
            raise ValueError(
                "homogenised Hermitian part exceeds the cell average's")
    if norm > report.sup_norm ** 2 / a.declared_nu + tol:
        raise ValueError("homogenised tensor norm exceeds |a|^2 / nu")
    return HomogenisedTensor(
        theta=ws.theta, entries=entries, nu_measured=float(nu_meas),
        norm=float(norm), re_norm=float(re_norm), route_gap=float(route_gap),
        corrector_residual=rel, cond=cond)


def hom_inverse_via_projection(a: CoefficientField, ms: ModeSet, theta,
                               ws: CellWorkspace = None) -> np.ndarray:
    """Inverse homogenised tensor: constant-block compression of the inverse
    of the P(theta)-restricted multiplication operator.  Corrector-free."""
    if ws is None:
        ws = CellWorkspace(a, ms, theta)
    nd = ms.n_comp * ms.d
    a_p = ws.a_p
    margin = min_real_eig(a_p)
    if margin <= 0:
        raise ValueError(f"restricted multiplication operator lost "
                         f"accretivity (margin {margin:.3e})")
    inv = np.linalg.inv(a_p)
    return inv[:nd, :nd].copy()


def minimisation_check(ws: CellWorkspace, entries: np.ndarray,
                       seed: int = 0, trials: int = 20):
    """Variational characterisation of the homogenised energy.

    For random tensors X and random admissible competitors W the corrected
    energy Re <a^hom X, X> never exceeds the competitor energy, and the
    corrector itself attains it.  Returns (max bound violation, max
    attainment gap), both as absolute values on unit tensors.
    """
    n, d = ws.ms.n_comp, ws.ms.d
    nd = n * d
    rng = np.random.default_rng(seed)
    x_all, _, _ = solve_all_correctors(ws)
    max_violation, max_eq_gap = 0.0, 0.0
    for _ in range(trials):
        x = rng.standard_normal(nd) + 1j * rng.standard_normal(nd)
        x /= np.linalg.norm(x)
        hom_energy = float(np.real(np.vdot(x, entries @ x)))

        def energy(corr_coeffs):
            f = ws.grad0 @ corr_coeffs
            f[:nd] += x
            return float(np.real(np.vdot(f, ws.a_mult @ f)))

        w = rng.standard_normal(ws.grad0.shape[1]) \
            + 1j * rng.standard_normal(ws.grad0.shape[1])
        max_violation = max(max_violation, hom_energy - energy(w))
        max_eq_gap = max(max_eq_gap, abs(hom_energy - energy(x_all @ x)))
    return max_violation, max_eq_gap


@dataclass
class ThetaComparisonRow:
    theta: np.ndarray
    gap: float          # |a^hom(theta) - a^hom(0)|
    theta_norm: float
    ratio: float        # gap / |theta| (0 at theta = 0)


def lipschitz_sweep(a: CoefficientField, ms: ModeSet, theta_grid):
    """Tabulate |a^hom(theta) - a^hom(0)| and its ratio to |theta|.

    The Lipschitz constant is reported, not asserted: only its existence is
    guaranteed.  Returns (rows, base tensor, max ratio).
    """
    zero = np.zeros(ms.d)
    base = assemble_hom_tensor(a, ms, zero)
    rows = []
    for theta in theta_grid:
        t = check_theta(theta, ms.d)
        hom = base if not np.any(t) else assemble_hom_tensor(a, ms, t)
        gap = operator_norm(hom.entries - base.entries)
        tn = float(np.linalg.norm(t))
        rows.append(ThetaComparisonRow(
            theta=t, gap=float(gap), theta_norm=tn,
            ratio=float(gap / tn) if tn > 0 else 0.0))
    max_ratio = max((r.ratio for r in rows), default=0.0)
    return rows, base, max_ratio


@dataclass
class ClassicalLimitRow:
    theta: np.ndarray
    eps: float
    gap: float  # |beta_theta - beta_0| / |f|


def classical_limit_check(a: CoefficientField, s: CoefficientField,
                          ms: ModeSet, theta_grid, eps_list,
                          seed: int = 0, num_rhs: int = 5):
    """Macroscopic solves with a^hom(theta) against a^hom(0).

    On the distinguished block the fibre system reduces to
    eps^{-2} T (beta x theta) theta + m(s) beta = f with T the homogenised
    tensor; the theta-frozen and theta-zero tensors must give solutions
    O(eps) apart, uniformly over the grid.  Returns (rows, max gap / eps).
    """
    n, d = ms.n_comp, ms.d
    m_s = mean_matrix(s)
    zero = np.zeros(d)
    base = assemble_hom_tensor(a, ms, zero).entries
    rng = np.random.default_rng(seed)
    rhs = rng.standard_normal((n, num_rhs)) + 1j * rng.standard_normal((n, num_rhs))
    rhs /= np.linalg.norm(rhs, axis=0, keepdims=True)

    def reduced_operator(tensor: np.ndarray, theta: np.ndarray, eps: float):
        lift = np.kron(np.eye(n), theta[:, None])  # beta -> beta x theta
        return lift.T @ tensor @ lift / eps**2 + m_s

    rows = []
    for theta in theta_grid:
        t = check_theta(theta, d)
        hom_t = base if not np.any(t) else assemble_hom_tensor(a, ms, t).entries
        for eps in sorted(eps_list, reverse=True):
            op_t = reduced_operator(hom_t, t, eps)
            op_0 = reduced_operator(base, t, eps)
            beta_t = np.linalg.solve(op_t, rhs)
            beta_0 = np.linalg.solve(op_0, rhs)
            gap = float(np.max(np.linalg.norm(beta_t - beta_0, axis=0)))
            rows.append(ClassicalLimitRow(theta=t, eps=float(eps), gap=gap))
    max_rate = max((r.gap / r.eps for r in rows), default=0.0)
    return rows, max_rate
