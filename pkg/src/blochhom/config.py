"""Run configuration and coefficient files.

Both are TOML.  A coefficient file lists one ``[[mode]]`` table per lattice
point with real (and optionally imaginary) entry matrices:

    d = 1
    rows = 1
    cols = 1
    nu = 1.0
    real = true
    label = "laminate"

    [[mode]]
    w = [0]
    re = [[2.0]]

    [[mode]]
    w = [1]
    re = [[0.5]]

A run configuration names the problem kind, discretisation, coefficient file
paths (resolved relative to the configuration file), the theta grid (points
per axis), the log-spaced eps/eta list and bookkeeping:

    kind = "elliptic"
    [space]
    d = 1
    n = 1
    n_trunc = 16
    [coefficients]
    a = "laminate_1d.toml"
    s = "unit_s_1d.toml"
    [theta_grid]
    points = [5]
    [eps]
    start = 0.3
    stop = 3e-4
    count = 7
    [run]
    seed = 0
    out_dir = "out/laminate"

The default theta axis always contains the corner -pi and (after snapping the
nearest point) 0, so the degenerate fibre and the far corner are exercised.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import tomli

from .fourier import CoefficientField

KINDS = ("abstract", "elliptic", "maxwell", "ahom_table", "properties")


class ConfigError(ValueError):
    pass


def theta_axis(count: int) -> np.ndarray:
    """Uniform axis of quasi-momenta containing -pi and exactly 0."""
    if count < 1:
        raise ConfigError("theta axis needs at least one point")
    if count == 1:
        return np.array([0.0])
    axis = -np.pi + 2.0 * np.pi * np.arange(count) / count
    axis[int(np.argmin(np.abs(axis)))] = 0.0
    return axis


def theta_grid(points) -> list:
    axes = [theta_axis(int(c)) for c in points]
    mesh = np.meshgrid(*axes, indexing="ij")
    flat = np.stack([m.reshape(-1) for m in mesh], axis=1)
    return [flat[i] for i in range(flat.shape[0])]


def geomspace(start: float, stop: float, count: int) -> np.ndarray:
    if start <= 0 or stop <= 0:
        raise ConfigError("eps values must be positive")
    if count < 1:
        raise ConfigError("eps count must be positive")
    if count == 1:
        return np.array([float(start)])
    return np.geomspace(start, stop, count)


def load_coefficient(path: str) -> CoefficientField:
    """Parse, validate and return a coefficient field from a TOML file.

    Raises ConfigError with the offending file/field on parse problems, and
    on coercivity or reality violations (with the worst sample point).
    """
    try:
        with open(path, "rb") as handle:
            data = tomli.load(handle)
    except FileNotFoundError:
        raise ConfigError(f"coefficient file not found: {path}")
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: TOML parse error: {exc}")

    def need(key):
        if key not in data:
            raise ConfigError(f"{path}: missing required key '{key}'")
        return data[key]

    d = int(need("d"))
    rows = int(need("rows"))
    cols = int(need("cols"))
    nu = float(need("nu"))
    real = bool(data.get("real", False))
    label = str(data.get("label", os.path.basename(path)))
    mode_tables = data.get("mode", [])
    if not mode_tables:
        raise ConfigError(f"{path}: at least one [[mode]] table is required")
    modes = {}
    for idx, tab in enumerate(mode_tables):
        where = f"{path}: [[mode]] #{idx + 1}"
        if "w" not in tab:
            raise ConfigError(f"{where}: missing lattice point 'w'")
        w = tuple(int(c) for c in tab["w"])
        if len(w) != d:
            raise ConfigError(f"{where}: 'w' must have {d} entries")
        if "re" not in tab:
            raise ConfigError(f"{where}: missing entry matrix 're'")
        re_part = np.asarray(tab["re"], dtype=float)
        im_part = np.asarray(tab.get("im", np.zeros_like(re_part)), dtype=float)
        if re_part.shape != (rows, cols) or im_part.shape != (rows, cols):
            raise ConfigError(f"{where}: entries must be {rows}x{cols}")
        if w in modes:
            raise ConfigError(f"{where}: duplicate lattice point {list(w)}")
        modes[w] = re_part + 1j * im_part
    coef = CoefficientField(d=d, shape=(rows, cols), modes=modes,
                            declared_nu=nu, declared_real=real, label=label)
    report = coef.validate()
    if real and not report.reality_ok:
        raise ConfigError(
            f"{path}: declared real but mode blocks are not conjugate-paired")
    if report.nu_measured < nu - 1e-12:
        raise ConfigError(
            f"{path}: declared nu = {nu} but the sampled Hermitian part dips "
            f"to {report.nu_measured:.6e} at y = {report.worst_point}")
    return coef


@dataclass
class RunConfig:
    kind: str
    d: int = 1
    n: int = 1
    n_trunc: int = 8
    coefficients: dict = field(default_factory=dict)  # name -> resolved path
    theta_points: list = field(default_factory=lambda: [3])
    eps_start: float = 0.3
    eps_stop: float = 3e-3
    eps_count: int = 5
    seed: int = 0
    out_dir: str = "out"
    workers: int = 0  # 0: take from environment
    tolerances: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)

    def thetas(self) -> list:
        if len(self.theta_points) not in (1, self.d):
            raise ConfigError("theta_grid points must list one count per axis")
        points = (self.theta_points * self.d
                  if len(self.theta_points) == 1 and self.d > 1
                  else self.theta_points)
        return theta_grid(points)

    def eps_list(self) -> np.ndarray:
        return geomspace(self.eps_start, self.eps_stop, self.eps_count)

    def semantic_payload(self) -> dict:
        """Digest payload: everything that affects the numbers, nothing else."""
        from .results import file_digest
        return {
            "kind": self.kind,
            "d": self.d,
            "n": self.n,
            "n_trunc": self.n_trunc,
            "coefficients": {name: file_digest(path)
                             for name, path in sorted(self.coefficients.items())},
            "theta_points": list(self.theta_points),
            "eps": [self.eps_start, self.eps_stop, self.eps_count],
            "seed": self.seed,
            "tolerances": dict(sorted(self.tolerances.items())),
            "options": {k: self.options[k] for k in sorted(self.options)},
        }


def load_run_config(path: str, kind: str = None,
                    out_override: str = None) -> RunConfig:
    try:
        with open(path, "rb") as handle:
            data = tomli.load(handle)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: TOML parse error: {exc}")
    base = os.path.dirname(os.path.abspath(path))
    return build_run_config(data, base_dir=base, kind=kind,
                            out_override=out_override, source=path)


def build_run_config(data: dict, base_dir: str = ".", kind: str = None,
                     out_override: str = None, source: str = "<config>"
                     ) -> RunConfig:
    cfg_kind = data.get("kind", kind)
    if cfg_kind is None:
        raise ConfigError(f"{source}: missing 'kind'")
    if kind is not None and cfg_kind != kind:
        raise ConfigError(f"{source}: kind '{cfg_kind}' does not match the "
                          f"requested '{kind}'")
    if cfg_kind not in KINDS:
        raise ConfigError(f"{source}: unknown kind '{cfg_kind}'")
    space = data.get("space", {})
    eps = data.get("eps", data.get("eta", {}))
    run = data.get("run", {})
    grid = data.get("theta_grid", {})
    coefficients = {}
    for name, rel in data.get("coefficients", {}).items():
        resolved = rel if os.path.isabs(rel) else os.path.join(base_dir, rel)
        if not os.path.exists(resolved):
            raise ConfigError(f"{source}: coefficient path does not resolve: "
                              f"{rel}")
        coefficients[name] = resolved
    cfg = RunConfig(
        kind=cfg_kind,
        d=int(space.get("d", 1)),
        n=int(space.get("n", 1)),
        n_trunc=int(space.get("n_trunc", 8)),
        coefficients=coefficients,
        theta_points=[int(c) for c in grid.get("points", [3])],
        eps_start=float(eps.get("start", 0.3)),
        eps_stop=float(eps.get("stop", 3e-3)),
        eps_count=int(eps.get("count", 5)),
        seed=int(run.get("seed", 0)),
        out_dir=out_override or run.get("out_dir", "out"),
        workers=int(run.get("workers", 0)),
        tolerances=dict(data.get("tolerances", {})),
        options=dict(data.get("options", {})),
    )
    if cfg.d not in (1, 2, 3):
        raise ConfigError(f"{source}: d must be 1, 2 or 3")
    if cfg.n < 1 or cfg.n_trunc < 1:
        raise ConfigError(f"{source}: counts must be positive")
    if any(c < 1 for c in cfg.theta_points):
        raise ConfigError(f"{source}: theta grid counts must be positive")
    if cfg.eps_start <= 0 or cfg.eps_stop <= 0 or cfg.eps_count < 1:
        raise ConfigError(f"{source}: eps values must be positive")
    return cfg
