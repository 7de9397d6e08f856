"""Truncated Fourier representation of quasi-periodic fields on the unit cell.

A field u with quasi-momentum theta in [-pi, pi)^d is expanded over the
orthonormal basis exp(i<theta + 2 pi z, y>) for integer lattice points z.  The
truncation keeps all z with max-norm at most ``trunc``; the zero mode sits at
index 0 and the remaining modes follow in lexicographic order, so the
distinguished mode-0 block is always the leading block of every assembled
matrix.

All operators are assembled as dense matrices acting on mode-major flattened
coefficient vectors: a field with c components is the vector with entry
(mode * c + component).  n-by-d tensor fields use component index i*d + j.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .linalg import min_real_eig, operator_norm

TWO_PI = 2.0 * np.pi


def check_theta(theta, d: int) -> np.ndarray:
    """Validate a quasi-momentum vector: d real components in [-pi, pi)."""
    t = np.asarray(theta, dtype=float).reshape(-1)
    if t.shape != (d,):
        raise ValueError(f"theta must have {d} components, got shape {t.shape}")
    if np.any(t < -np.pi) or np.any(t >= np.pi):
        raise ValueError(f"theta components must lie in [-pi, pi): {t}")
    return t


@dataclass(frozen=True)
class ModeSet:
    """Truncated lattice of Fourier exponents for fields with n_comp components."""

    d: int
    n_comp: int
    trunc: int
    modes: np.ndarray = field(repr=False)
    _index: dict = field(repr=False)

    @classmethod
    def build(cls, d: int, n_comp: int, trunc: int) -> "ModeSet":
        if d not in (1, 2, 3):
            raise ValueError("spatial dimension must be 1, 2 or 3")
        if trunc < 1:
            raise ValueError("trunc must be a positive integer")
        rng = range(-trunc, trunc + 1)
        lattice = [z for z in itertools.product(rng, repeat=d)]
        zero = tuple([0] * d)
        ordered = [zero] + [z for z in lattice if z != zero]
        modes = np.array(ordered, dtype=int)
        index = {z: i for i, z in enumerate(ordered)}
        return cls(d=d, n_comp=n_comp, trunc=trunc, modes=modes, _index=index)

    @property
    def num_modes(self) -> int:
        return self.modes.shape[0]

    def index_of(self, z) -> int:
        return self._index.get(tuple(int(c) for c in z), -1)

    def frequencies(self, theta) -> np.ndarray:
        """theta + 2 pi z for every mode; rows follow the mode ordering."""
        t = check_theta(theta, self.d)
        return t[None, :] + TWO_PI * self.modes


@dataclass
class QuasiPeriodicField:
    """Coefficient array (mode, component) of a truncated quasi-periodic field."""

    mode_set: ModeSet
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        expected = (self.mode_set.num_modes, self.mode_set.n_comp)
        if self.coeffs.shape != expected:
            raise ValueError(f"coefficient shape {self.coeffs.shape} != {expected}")

    def norm(self) -> float:
        # Parseval: the L2 norm is the Euclidean norm of the coefficients.
        return float(np.linalg.norm(self.coeffs))

    def flat(self) -> np.ndarray:
        return self.coeffs.reshape(-1)

    @classmethod
    def from_flat(cls, mode_set: ModeSet, vec: np.ndarray) -> "QuasiPeriodicField":
        return cls(mode_set, np.asarray(vec, dtype=complex).reshape(
            mode_set.num_modes, mode_set.n_comp))


@dataclass
class CoercivityReport:
    nu_declared: float
    nu_measured: float
    sup_norm: float
    re_sup_norm: float
    reality_ok: bool
    grid_points: int
    worst_point: tuple

    @property
    def passed(self) -> bool:
        return self.nu_measured >= self.nu_declared - 1e-12 and self.reality_ok


@dataclass
class CoefficientField:
    """Periodic matrix coefficient given by finitely many Fourier modes.

    ``modes[w]`` is the (c_out, c_in) block of exp(2 pi i <w, y>); the field is
    a(y) = sum_w modes[w] exp(2 pi i <w, y>).  ``declared_nu`` is the claimed
    pointwise lower bound on the Hermitian part.
    """

    d: int
    shape: tuple
    modes: dict
    declared_nu: float
    declared_real: bool = False
    label: str = ""

    def __post_init__(self):
        clean = {}
        for w, block in self.modes.items():
            key = tuple(int(c) for c in np.atleast_1d(w))
            if len(key) != self.d:
                raise ValueError(f"mode {key} does not match dimension {self.d}")
            b = np.asarray(block, dtype=complex)
            if b.shape != tuple(self.shape):
                raise ValueError(f"block for mode {key} has shape {b.shape}, "
                                 f"expected {tuple(self.shape)}")
            clean[key] = b
        self.modes = clean
        self.shape = tuple(self.shape)
        if self.declared_nu <= 0:
            raise ValueError("declared_nu must be positive")

    @classmethod
    def constant(cls, matrix, d: int, nu: float = None, label: str = "") -> "CoefficientField":
        m = np.asarray(matrix, dtype=complex)
        if nu is None:
            nu = min_real_eig(m)
        zero = tuple([0] * d)
        return cls(d=d, shape=m.shape, modes={zero: m}, declared_nu=float(nu),
                   label=label)

    @property
    def bandwidth(self) -> int:
        return max((max(abs(c) for c in w) for w in self.modes), default=0)

    def is_constant(self) -> bool:
        zero = tuple([0] * self.d)
        return all(w == zero for w in self.modes)

    def is_pointwise_hermitian(self) -> bool:
        """True when a(y) = a(y)^H for all y, i.e. mode blocks pair adjointly."""
        for w, block in self.modes.items():
            neg = tuple(-c for c in w)
            partner = self.modes.get(neg)
            if partner is None or not np.allclose(
                    partner, block.conj().T, atol=1e-13, rtol=0.0):
                return False
        return True

    def at(self, y) -> np.ndarray:
        """Pointwise value a(y); the sampling oracle for coercivity checks."""
        y = np.asarray(y, dtype=float).reshape(self.d)
        out = np.zeros(self.shape, dtype=complex)
        for w, block in self.modes.items():
            out += block * np.exp(TWO_PI * 1j * float(np.dot(w, y)))
        return out

    def sample_grid(self, points_per_axis: int = None) -> np.ndarray:
        if points_per_axis is None:
            # 4x oversampling beyond the bandwidth pins down trig polynomials.
            points_per_axis = 4 * self.bandwidth + 4
        axes = [np.arange(points_per_axis) / points_per_axis] * self.d
        return np.array(list(itertools.product(*axes)))

    def validate(self, points_per_axis: int = None) -> CoercivityReport:
        pts = self.sample_grid(points_per_axis)
        nu_min, sup, re_sup = np.inf, 0.0, 0.0
        worst = tuple(pts[0])
        for y in pts:
            val = self.at(y)
            lo = min_real_eig(val)
            if lo < nu_min:
                nu_min, worst = lo, tuple(y)
            sup = max(sup, operator_norm(val))
            re_sup = max(re_sup, operator_norm(0.5 * (val + val.conj().T)))
        reality_ok = True
        if self.declared_real:
            for w, block in self.modes.items():
                neg = tuple(-c for c in w)
                partner = self.modes.get(neg)
                if partner is None or not np.allclose(
                        partner, block.conj(), atol=1e-12, rtol=0.0):
                    reality_ok = False
                    break
        return CoercivityReport(
            nu_declared=self.declared_nu, nu_measured=float(nu_min),
            sup_norm=float(sup), re_sup_norm=float(re_sup),
            reality_ok=reality_ok, grid_points=len(pts), worst_point=worst)


def grad_theta_matrix(ms: ModeSet, theta) -> np.ndarray:
    """Gradient on truncated fields: (modes x n) -> (modes x n x d).

    Block-diagonal over modes; the mode-z block multiplies each component by
    i(theta + 2 pi z).
    """
    n, d, m = ms.n_comp, ms.d, ms.num_modes
    freqs = ms.frequencies(theta)
    out = np.zeros((m * n * d, m * n), dtype=complex)
    eye_n = np.eye(n)
    for k in range(m):
        block = np.kron(eye_n, 1j * freqs[k][:, None])  # (n*d, n)
        out[k * n * d:(k + 1) * n * d, k * n:(k + 1) * n] = block
    return out


def div_theta_matrix(ms: ModeSet, theta) -> np.ndarray:
    """Divergence on truncated tensor fields, assembled from its own symbol.

    Mode-z block maps Q to (sum_j i(theta + 2 pi z)_j Q_ij)_i; by construction
    it equals minus the conjugate transpose of the gradient matrix.
    """
    n, d, m = ms.n_comp, ms.d, ms.num_modes
    freqs = ms.frequencies(theta)
    out = np.zeros((m * n, m * n * d), dtype=complex)
    eye_n = np.eye(n)
    for k in range(m):
        block = np.kron(eye_n, 1j * freqs[k][None, :])  # (n, n*d)
        out[k * n:(k + 1) * n, k * n * d:(k + 1) * n * d] = block
    return out


def cross_matrix(v: np.ndarray) -> np.ndarray:
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def curl_theta_matrix(ms: ModeSet, theta) -> np.ndarray:
    """Curl on truncated 3-vector fields; Hermitian by the i * skew structure."""
    if ms.d != 3 or ms.n_comp != 3:
        raise ValueError("curl requires d = 3 and 3-component fields")
    freqs = ms.frequencies(theta)
    m = ms.num_modes
    out = np.zeros((3 * m, 3 * m), dtype=complex)
    for k in range(m):
        out[3 * k:3 * k + 3, 3 * k:3 * k + 3] = 1j * cross_matrix(freqs[k])
    return out


def multiplication_matrix(coef: CoefficientField, ms: ModeSet) -> np.ndarray:
    """Galerkin truncation of pointwise multiplication by the coefficient.

    The entry coupling input mode w to output mode z is the coefficient block
    at z - w; output modes outside the truncation are dropped, i.e. this is
    the compression P a P to the truncated space.
    """
    if coef.d != ms.d:
        raise ValueError("coefficient and mode set dimensions differ")
    c_out, c_in = coef.shape
    m = ms.num_modes
    out = np.zeros((m * c_out, m * c_in), dtype=complex)
    for w, block in coef.modes.items():
        shifted = ms.modes + np.array(w, dtype=int)
        for j in range(m):
            i = ms.index_of(shifted[j])
            if i >= 0:
                out[i * c_out:(i + 1) * c_out, j * c_in:(j + 1) * c_in] += block
    return out


def tensor_p_basis(ms: ModeSet, theta) -> np.ndarray:
    """Orthonormal basis of the compatible tensor subspace P(theta).

    Columns: the n*d unit tensors at mode 0, then for each mode z != 0 and each
    component k the normalised rank-one tensor e_k (theta + 2 pi z)^T / |.|.
    The leading n*d columns are exactly the mode-0 coordinate directions, so
    the constant-tensor block stays at the front.
    """
    n, d, m = ms.n_comp, ms.d, ms.num_modes
    freqs = ms.frequencies(theta)
    cols = n * d + (m - 1) * n
    out = np.zeros((m * n * d, cols), dtype=complex)
    out[:n * d, :n * d] = np.eye(n * d)
    col = n * d
    for z in range(1, m):
        v = freqs[z]
        vhat = v / np.linalg.norm(v)
        base = z * n * d
        for k in range(n):
            out[base + k * d:base + (k + 1) * d, col] = vhat
            col += 1
    return out


def projection_p_matrix(ms: ModeSet, theta) -> np.ndarray:
    """Orthogonal projector onto P(theta) for n x d tensor fields.

    Mode 0 keeps everything; mode z != 0 projects each row of the tensor onto
    the direction theta + 2 pi z.
    """
    n, d, m = ms.n_comp, ms.d, ms.num_modes
    freqs = ms.frequencies(theta)
    out = np.zeros((m * n * d, m * n * d), dtype=complex)
    out[:n * d, :n * d] = np.eye(n * d)
    eye_n = np.eye(n)
    for z in range(1, m):
        v = freqs[z]
        rank1 = np.outer(v, v) / float(np.dot(v, v))
        block = np.kron(eye_n, rank1)
        out[z * n * d:(z + 1) * n * d, z * n * d:(z + 1) * n * d] = block
    return out


def gram_projector(generators: np.ndarray) -> np.ndarray:
    """Projector onto the span of (not necessarily orthonormal) columns."""
    g = generators
    gram = g.conj().T @ g
    return g @ np.linalg.solve(gram, g.conj().T)


def p_space_generators(ms: ModeSet, theta) -> np.ndarray:
    """Unnormalised generators of P(theta): mode-0 unit tensors plus gradients
    of the z != 0 scalar modes.  Used as the independent Gram oracle."""
    n, d = ms.n_comp, ms.d
    grad = grad_theta_matrix(ms, theta)
    gradients = grad[:, n:]  # gradients of all z != 0 coefficient directions
    const = np.zeros((ms.num_modes * n * d, n * d), dtype=complex)
    const[:n * d, :] = np.eye(n * d)
    return np.hstack([const, gradients])


def vector_n_basis(ms: ModeSet, theta) -> np.ndarray:
    """Orthonormal basis of n(theta) for 3-vector fields (d = 3).

    Mode 0 contributes the three coordinate directions; every z != 0
    contributes the normalised direction theta + 2 pi z (the gradient line).
    """
    if ms.d != 3 or ms.n_comp != 3:
        raise ValueError("n(theta) basis requires d = 3 vector fields")
    m = ms.num_modes
    freqs = ms.frequencies(theta)
    out = np.zeros((3 * m, 3 + (m - 1)), dtype=complex)
    out[:3, :3] = np.eye(3)
    for z in range(1, m):
        v = freqs[z]
        out[3 * z:3 * z + 3, 3 + (z - 1)] = v / np.linalg.norm(v)
    return out


def vector_r_basis(ms: ModeSet, theta) -> np.ndarray:
    """Orthonormal basis of r(theta) = n(theta)-perp: per mode z != 0 the two
    directions orthogonal to theta + 2 pi z; nothing at mode 0."""
    if ms.d != 3 or ms.n_comp != 3:
        raise ValueError("r(theta) basis requires d = 3 vector fields")
    m = ms.num_modes
    freqs = ms.frequencies(theta)
    out = np.zeros((3 * m, 2 * (m - 1)), dtype=complex)
    for z in range(1, m):
        v = freqs[z]
        vhat = v / np.linalg.norm(v)
        # Householder frame containing vhat; the sign choice keeps |w| >= 1.
        pivot = int(np.argmax(np.abs(vhat)))
        sign = 1.0 if vhat[pivot] >= 0 else -1.0
        w = vhat.copy()
        w[pivot] += sign
        w = w / np.linalg.norm(w)
        frame = np.eye(3) - 2.0 * np.outer(w, w)
        # The pivot column of the frame is parallel to vhat; keep the others.
        keep = [c for c in range(3) if c != pivot]
        out[3 * z:3 * z + 3, 2 * (z - 1)] = frame[:, keep[0]]
        out[3 * z:3 * z + 3, 2 * (z - 1) + 1] = frame[:, keep[1]]
    return out


def projection_n_matrix(ms: ModeSet, theta) -> np.ndarray:
    """Orthogonal projector onto n(theta) for 3-vector fields."""
    if ms.d != 3 or ms.n_comp != 3:
        raise ValueError("n(theta) projector requires d = 3 vector fields")
    m = ms.num_modes
    freqs = ms.frequencies(theta)
    out = np.zeros((3 * m, 3 * m), dtype=complex)
    out[:3, :3] = np.eye(3)
    for z in range(1, m):
        v = freqs[z]
        out[3 * z:3 * z + 3, 3 * z:3 * z + 3] = np.outer(v, v) / float(np.dot(v, v))
    return out
