"""Dispatch of configured certification runs: compute, persist, cache.

Every run writes ``results.csv`` (fixed schema) and ``summary.json`` into the
configured output directory; homogenised tensors are cached per
(coefficient digest, theta, truncation) under ``<out>/cache`` so reruns and
sibling runs reuse them at full precision.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import abstract, cell, elliptic, maxwell
from .config import ConfigError, RunConfig, load_coefficient
from .fourier import ModeSet
from .linalg import max_real_eig, min_real_eig, operator_norm
from .results import (
    SweepOutcome,
    SweepRow,
    TensorCache,
    config_digest,
    file_digest,
    persist_outcome,
)

WORKERS_ENV = "BLOCHHOM_WORKERS"


def _worker_count(config: RunConfig) -> int:
    if config.workers > 0:
        return config.workers
    env = os.environ.get(WORKERS_ENV, "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def run(config: RunConfig) -> SweepOutcome:
    """Execute one configured run and persist its outputs atomically."""
    start = time.perf_counter()
    digest = config_digest(config.semantic_payload())
    dispatch = {
        "abstract": _run_abstract,
        "elliptic": _run_elliptic,
        "maxwell": _run_maxwell,
        "ahom_table": _run_ahom_table,
        "properties": _run_properties,
    }
    if config.kind not in dispatch:
        raise ConfigError(f"unknown run kind '{config.kind}'")
    outcome = dispatch[config.kind](config)
    outcome.kind = config.kind
    outcome.config_digest = digest
    outcome.wall_time = time.perf_counter() - start
    persist_outcome(outcome, config.out_dir)
    return outcome


def _require_coefficient(config: RunConfig, name: str):
    path = config.coefficients.get(name)
    if path is None:
        raise ConfigError(f"run kind '{config.kind}' needs a coefficient "
                          f"named '{name}'")
    return load_coefficient(path), file_digest(path)


def _cache(config: RunConfig) -> TensorCache:
    return TensorCache(os.path.join(config.out_dir, "cache"))


def _cached_hom_entries(cache: TensorCache, coef_digest: str, a, ms, theta):
    key = TensorCache.key(coef_digest, theta, ms.trunc)
    hit = cache.get(key)
    if hit is not None:
        return np.asarray(hit, dtype=complex), True
    entries = cell.assemble_hom_tensor(a, ms, theta).entries
    cache.put(key, entries)
    return entries, False


# ---------------------------------------------------------------- abstract

def _run_abstract(config: RunConfig) -> SweepOutcome:
    opts = config.options
    families = int(opts.get("families", 20))
    fibres_per_family = int(opts.get("fibres_per_family", 3))
    dim_min = int(opts.get("dim_min", 4))
    dim_max = int(opts.get("dim_max", 40))
    c_range = (float(opts.get("c_min", 0.1)), float(opts.get("c_max", 2.0)))
    gap_range = (float(opts.get("gap_min", 0.5)), float(opts.get("gap_max", 4.0)))
    decades = float(opts.get("eps_decades", 4.0))
    points = int(opts.get("eps_points", 9))
    safety = float(opts.get("eps_safety", 0.5))

    rng = np.random.default_rng(config.seed)
    rows = []
    fibre_counter = 0
    max_ratio = 0.0
    all_pass = True

    def one_family(index: int, spec):
        dim, k, c, gap = spec
        family = abstract.make_random_family(
            seed=config.seed + 1000 + index, dim=dim, k=k, c=c,
            spectral_gap=gap, count=fibres_per_family)
        budget = abstract.family_budget(family)
        top = safety * budget.eps_threshold
        if not np.isfinite(top):
            top = 1.0
        eps_list = np.geomspace(top, top * 10.0 ** (-decades), points)
        return abstract.certify_resolvent_gap(family, eps_list), budget

    specs = []
    for _ in range(families):
        dim = int(rng.integers(dim_min, dim_max + 1))
        k = int(rng.integers(0, dim + 1))
        c = float(rng.uniform(*c_range))
        gap = float(rng.uniform(*gap_range))
        specs.append((dim, k, c, gap))

    workers = _worker_count(config)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            certs = list(pool.map(lambda iv: one_family(*iv),
                                  enumerate(specs)))
    else:
        certs = [one_family(i, spec) for i, spec in enumerate(specs)]

    for (certificate, budget), spec in zip(certs, specs):
        dim = spec[0]
        for row in certificate.rows:
            fibre_counter += 1
            verdict = "flagged" if row.flagged else (
                "pass" if row.passed else "fail")
            if verdict == "fail":
                all_pass = False
            if not row.flagged and row.bound > 0:
                max_ratio = max(max_ratio, row.err / row.bound)
            rows.append(SweepRow(
                theta=(float(fibre_counter),), eps=row.eps, err=row.err,
                bound=row.bound, verdict=verdict, c=budget.c,
                m_norm=budget.m_norm, c_r=budget.c_r, kappa=budget.kappa,
                n_trunc=dim, cond=0.0))

    return SweepOutcome(kind="abstract", d=1, rows=rows, slope=None,
                        slope_residual=None, max_err_ratio=max_ratio,
                        all_pass=all_pass,
                        extras={"families": families,
                                "fibres_per_family": fibres_per_family})


# ---------------------------------------------------------------- elliptic

def _rate_rows(cert, budgetlike, n_trunc: int):
    rows = []
    for r in cert.rows:
        rows.append(SweepRow(
            theta=tuple(float(t) for t in r.theta), eps=r.eps, err=r.err,
            bound=r.bound, verdict="pass" if r.verdict else "fail",
            c=budgetlike.c, m_norm=budgetlike.m_norm, c_r=budgetlike.c_r,
            kappa=cert.kappa_total, n_trunc=n_trunc, cond=r.cond))
    return rows


def _run_elliptic(config: RunConfig) -> SweepOutcome:
    a, a_digest = _require_coefficient(config, "a")
    s, _ = _require_coefficient(config, "s")
    ms = ModeSet.build(config.d, config.n, config.n_trunc)
    thetas = config.thetas()
    cache = _cache(config)

    def hom_lookup(theta):
        entries, _ = _cached_hom_entries(cache, a_digest, a, ms, theta)
        return entries

    cert = elliptic.certify_elliptic_rate(
        a, s, ms, thetas, config.eps_list(),
        doubling_check=bool(config.options.get("doubling_check", True)),
        macro_variant=bool(config.options.get("macro_variant", True)),
        hom_lookup=hom_lookup)
    rows = _rate_rows(cert, cert.budget_exact, ms.trunc)
    ratios = [r.err / r.bound for r in cert.rows if r.bound > 0]
    outcome = SweepOutcome(
        kind="elliptic", d=config.d, rows=rows, slope=cert.slope,
        slope_residual=cert.slope_residual,
        max_err_ratio=max(ratios, default=0.0), all_pass=cert.all_pass,
        extras={
            "monotone": cert.monotone,
            "doubling_rel_change": cert.doubling_rel_change,
            "truncation_flag": cert.truncation_flag,
            "kappa_exact": cert.budget_exact.kappa,
            "kappa_hom": cert.budget_hom.kappa,
            "macro_variant_max_ratio":
                cert.extras.get("macro_variant_max_ratio"),
        })
    if config.options.get("flux", False):
        flux = elliptic.certify_flux(a, s, ms, thetas, config.eps_list())
        header = [f"theta_{i + 1}" for i in range(config.d)] + [
            "eps", "err_opnorm", "bound", "verdict", "c", "M_norm", "C_R",
            "kappa", "n_trunc", "cond_max"]
        flux_rows = []
        for r in sorted(flux.rows, key=lambda r: (tuple(r.theta), -r.eps)):
            flux_rows.append(list(r.theta) + [
                r.eps, r.err, r.bound, "pass" if r.verdict else "fail",
                flux.budget_exact.c, flux.budget_exact.m_norm,
                flux.budget_exact.c_r, flux.kappa_total, ms.trunc, r.cond])
        outcome.aux_tables["flux"] = (header, flux_rows)
        outcome.extras["flux_slope"] = flux.slope
        outcome.extras["flux_monotone"] = flux.monotone
        outcome.all_pass = outcome.all_pass and flux.all_pass
    return outcome


# ----------------------------------------------------------------- maxwell

def _run_maxwell(config: RunConfig) -> SweepOutcome:
    perm_eps, _ = _require_coefficient(config, "perm_eps")
    perm_mu, _ = _require_coefficient(config, "perm_mu")
    ms = ModeSet.build(3, 3, config.n_trunc)
    thetas = config.thetas()
    probe = config.options.get("probe_trunc")
    cert = maxwell.certify_maxwell_rate(
        perm_eps, perm_mu, ms, thetas, config.eps_list(),
        probe_trunc=int(probe) if probe else None)
    rows = _rate_rows(cert, cert.budget_exact, ms.trunc)
    ratios = [r.err / r.bound for r in cert.rows if r.bound > 0]
    outcome = SweepOutcome(
        kind="maxwell", d=3, rows=rows, slope=cert.slope,
        slope_residual=cert.slope_residual,
        max_err_ratio=max(ratios, default=0.0), all_pass=cert.all_pass,
        extras={"monotone": cert.monotone,
                "c_r_max": cert.extras.get("c_r_max"),
                "doubling_rel_change": cert.doubling_rel_change,
                "truncation_flag": cert.truncation_flag})
    if config.options.get("equivalence", False):
        eq_trunc = int(config.options.get("equivalence_trunc", 2))
        eq_ms = ModeSet.build(3, 3, eq_trunc)
        reports = []
        for theta in thetas:
            rep = maxwell.effective_tensor_equivalence(
                perm_eps, eq_ms, theta, perm_mu=perm_mu,
                eta=float(config.options.get("equivalence_eta", 0.5)),
                n_sources=int(config.options.get("equivalence_sources", 20)),
                seed=config.seed)
            reports.append(rep)
        outcome.extras["equivalence_max_residual"] = max(
            r.max_residual for r in reports)
        outcome.extras["equivalence_max_gap"] = max(
            r.max_solution_gap for r in reports)
        outcome.extras["equivalence_pass"] = all(r.passed for r in reports)
        outcome.all_pass = outcome.all_pass and all(r.passed for r in reports)
    return outcome


# -------------------------------------------------------------- ahom table

def _run_ahom_table(config: RunConfig) -> SweepOutcome:
    a, a_digest = _require_coefficient(config, "a")
    ms = ModeSet.build(config.d, config.n, config.n_trunc)
    thetas = config.thetas()
    cache = _cache(config)
    base, _ = _cached_hom_entries(cache, a_digest, a, ms, np.zeros(config.d))

    rows = []
    aux_rows = []
    nd = config.n * config.d
    max_ratio = 0.0
    for theta in thetas:
        entries, _ = _cached_hom_entries(cache, a_digest, a, ms, theta)
        gap = operator_norm(entries - base)
        tnorm = float(np.linalg.norm(theta))
        ratio = gap / tnorm if tnorm > 0 else 0.0
        max_ratio = max(max_ratio, ratio)
        rows.append(SweepRow(
            theta=tuple(float(t) for t in theta), eps=0.0, err=float(gap),
            bound=tnorm, verdict="pass", c=min_real_eig(entries),
            m_norm=operator_norm(entries), c_r=0.0, kappa=0.0,
            n_trunc=ms.trunc, cond=float(np.linalg.cond(entries))))
        aux = list(float(t) for t in theta)
        for i in range(nd):
            for j in range(nd):
                aux.append(entries[i, j].real)
                aux.append(entries[i, j].imag)
        aux_rows.append(aux)

    header = [f"theta_{i + 1}" for i in range(config.d)]
    for i in range(nd):
        for j in range(nd):
            header += [f"re_{i + 1}{j + 1}", f"im_{i + 1}{j + 1}"]
    aux_rows.sort(key=lambda row: tuple(row[:config.d]))
    return SweepOutcome(
        kind="ahom_table", d=config.d, rows=rows, slope=None,
        slope_residual=None, max_err_ratio=None, all_pass=True,
        extras={"max_gap_over_theta_norm": max_ratio},
        aux_tables={"ahom_entries": (header, aux_rows)})


# -------------------------------------------------------------- properties

def _run_properties(config: RunConfig) -> SweepOutcome:
    a, a_digest = _require_coefficient(config, "a")
    ms = ModeSet.build(config.d, config.n, config.n_trunc)
    thetas = config.thetas()
    cache = _cache(config)
    report = cell.coefficient_validation(a)
    trials = int(config.options.get("minimisation_trials", 10))

    rows = []
    all_pass = True
    cache_gap = 0.0
    hermitian_input = a.is_pointwise_hermitian()

    def add_row(theta, name_code, residual, tol):
        nonlocal all_pass
        ok = residual <= tol
        all_pass = all_pass and ok
        rows.append(SweepRow(
            theta=tuple(float(t) for t in theta), eps=float(name_code),
            err=float(residual), bound=float(tol),
            verdict="pass" if ok else "fail", c=a.declared_nu,
            m_norm=report.sup_norm, c_r=0.0, kappa=0.0, n_trunc=ms.trunc,
            cond=0.0))

    # Check codes double as the eps column: 1 route agreement, 2 coercivity,
    # 3 Hermitian-part bound, 4 norm bound, 5 minimisation, 6 attainment,
    # 7 Hermitian symmetry of the tensor.
    for theta in thetas:
        ws = cell.CellWorkspace(a, ms, theta)
        hom = cell.assemble_hom_tensor(a, ms, theta, ws=ws)
        key = TensorCache.key(a_digest, theta, ms.trunc)
        cached = cache.get(key)
        if cached is None:
            cache.put(key, hom.entries)
        else:
            denom = max(operator_norm(hom.entries), 1e-300)
            cache_gap = max(cache_gap,
                            operator_norm(hom.entries - cached) / denom)
        inv_route = cell.hom_inverse_via_projection(a, ms, theta, ws=ws)
        gap = operator_norm(np.linalg.inv(hom.entries) - inv_route)
        add_row(theta, 1, gap / max(operator_norm(inv_route), 1e-300), 1e-9)
        add_row(theta, 2, max(0.0, a.declared_nu - hom.nu_measured), 1e-10)
        if hermitian_input:
            re_mean = max_real_eig(cell.mean_matrix(a))
            add_row(theta, 3, max(0.0, hom.re_norm - re_mean), 1e-8)
        add_row(theta, 4, max(
            0.0, hom.norm - report.sup_norm ** 2 / a.declared_nu), 1e-8)
        violation, attainment = cell.minimisation_check(
            ws, hom.entries, seed=config.seed, trials=trials)
        if hermitian_input:
            add_row(theta, 5, max(0.0, violation), 1e-9)
        add_row(theta, 6, attainment, 1e-8 * max(1.0, hom.norm))
        if hermitian_input:
            add_row(theta, 7,
                    operator_norm(hom.entries - hom.entries.conj().T), 1e-10)

    lip_rows, _, lip_ratio = cell.lipschitz_sweep(a, ms, thetas)
    return SweepOutcome(
        kind="properties", d=config.d, rows=rows, slope=None,
        slope_residual=None, max_err_ratio=None, all_pass=all_pass,
        extras={
            "lipschitz_max_ratio": lip_ratio,
            "max_gap_to_base": max((r.gap for r in lip_rows), default=0.0),
            "cache_max_relative_gap": cache_gap,
            "hermitian_input": hermitian_input,
        })
