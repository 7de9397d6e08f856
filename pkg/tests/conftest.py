import numpy as np
import pytest

from blochhom.fourier import CoefficientField, ModeSet

CONFIG_DIR = "/root/pkg/configs"


def laminate_1d() -> CoefficientField:
    """a(y) = 2 + cos(2 pi y); harmonic mean sqrt(3)."""
    return CoefficientField(
        d=1, shape=(1, 1),
        modes={(0,): [[2.0]], (1,): [[0.5]], (-1,): [[0.5]]},
        declared_nu=1.0, declared_real=True, label="laminate")


def unit_s(d: int, n: int = 1) -> CoefficientField:
    return CoefficientField.constant(np.eye(n), d=d, label="unit-s")


def varying_s_1d() -> CoefficientField:
    """s(y) = 1 + 0.5 cos(2 pi y); saturates the flux estimate."""
    return CoefficientField(
        d=1, shape=(1, 1),
        modes={(0,): [[1.0]], (1,): [[0.25]], (-1,): [[0.25]]},
        declared_nu=0.5, declared_real=True, label="varying-s")


def bump_example_2d() -> CoefficientField:
    """Identity plus diag(phi(y2), 2 phi(y1)) with phi a squared raised cosine.

    Self-adjoint, columns divergence-free, so the theta-zero tensor is the
    plain cell average while other fibres genuinely differ.
    """
    phi = {0: 3 / 8, 1: 1 / 4, -1: 1 / 4, 2: 1 / 16, -2: 1 / 16}
    modes = {(0, 0): np.eye(2, dtype=complex)}
    for k, v in phi.items():
        blk = modes.setdefault((0, k), np.zeros((2, 2), dtype=complex))
        blk[0, 0] += v
        blk2 = modes.setdefault((k, 0), np.zeros((2, 2), dtype=complex))
        blk2[1, 1] += 2.0 * v
    return CoefficientField(d=2, shape=(2, 2), modes=modes, declared_nu=1.0,
                            declared_real=True, label="bump-example")


def bump_mean_2d() -> np.ndarray:
    return np.diag([1.0 + 3 / 8, 1.0 + 2 * 3 / 8]).astype(complex)


def random_coercive_field(seed: int, d: int, dim: int, bandwidth: int = 1,
                          nu: float = 1.0, skew: float = 0.0,
                          amplitude: float = 0.6) -> CoefficientField:
    """Band-limited coercive field nu I + g(y)^H g(y) + i (q(y) + q(y)^H).

    The Hermitian part is nu I + g^H g >= nu pointwise by construction, for
    any skew strength; the product doubles the bandwidth.
    """
    rng = np.random.default_rng(seed)
    import itertools

    lattice = [w for w in itertools.product(range(-bandwidth, bandwidth + 1),
                                            repeat=d)]
    g = {w: amplitude / len(lattice) * (
        rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim)))
        for w in lattice}
    modes = {}

    def add(w, block):
        key = tuple(int(c) for c in w)
        modes[key] = modes.get(key, np.zeros((dim, dim), dtype=complex)) + block

    for w1, b1 in g.items():
        for w2, b2 in g.items():
            # (g^H g)-mode at w2 - w1 from conj(g_{w1})^T g_{w2}
            add(np.array(w2) - np.array(w1), b1.conj().T @ b2)
    if skew:
        for w, b in g.items():
            q = skew * b
            add(w, 1j * q)
            add(tuple(-c for c in w), 1j * q.conj().T)
    add(np.zeros(d, dtype=int), nu * np.eye(dim))
    return CoefficientField(d=d, shape=(dim, dim), modes=modes,
                            declared_nu=nu, label=f"random-{seed}")


def maxwell_perms():
    eps_modes = {(0, 0, 0): 1.5 * np.eye(3, dtype=complex)}
    m = np.zeros((3, 3), dtype=complex)
    m[0, 0], m[1, 1] = 0.25, 0.15
    eps_modes[(1, 0, 0)] = m
    eps_modes[(-1, 0, 0)] = m.conj().T
    m2 = np.zeros((3, 3), dtype=complex)
    m2[0, 1] = m2[1, 0] = 0.1
    eps_modes[(0, 1, 0)] = m2
    eps_modes[(0, -1, 0)] = m2.conj().T
    mu_modes = {(0, 0, 0): 1.5 * np.eye(3, dtype=complex)}
    m3 = np.zeros((3, 3), dtype=complex)
    m3[2, 2], m3[0, 0] = 0.3, 0.1
    mu_modes[(0, 0, 1)] = m3
    mu_modes[(0, 0, -1)] = m3.conj().T
    perm_eps = CoefficientField(d=3, shape=(3, 3), modes=eps_modes,
                                declared_nu=0.8, declared_real=True)
    perm_mu = CoefficientField(d=3, shape=(3, 3), modes=mu_modes,
                               declared_nu=0.8, declared_real=True)
    return perm_eps, perm_mu


@pytest.fixture(scope="session")
def laminate():
    return laminate_1d()


@pytest.fixture(scope="session")
def ms16():
    return ModeSet.build(1, 1, 16)
