"""Command-line experiment runner.

``stokeslab run CONFIG`` executes one experiment, writes its CSV artifacts
and a JSON manifest into the output directory and returns 0 on success, 2
when a validation check fails and 1 on any error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import platform
import sys
import time
from datetime import datetime, timezone

import numpy as np
import scipy

from . import __version__
from .analysis import (
    FIT_HEADER,
    MAXREG_HEADER,
    SWEEP_HEADER,
    fit_smoothing_exponent,
    maximal_regularity_constant,
    resolvent_sweep,
    write_csv,
)
from .basis import (
    BASIS_FORMAT_VERSION,
    build_basis,
    load_basis,
    project_coeffs,
    reconstruct,
    save_basis,
)
from .config import RunConfig, defaults_text, load_config, parse_config
from .errors import StokesLabError
from .fields import Field
from .funcalc import dunford_powers, imaginary_power_growth, power_coeffs
from .geometry import cut_flux, make_grid
from .sampling import random_coeffs
from .semigroup import evolve_homogeneous
from .validation import CHECK_HEADER, run_checks

__all__ = ["basis_cache_key", "main", "run", "run_config"]

LOG = logging.getLogger("stokeslab")

EXIT_OK, EXIT_ERROR, EXIT_VALIDATION = 0, 1, 2

# p = 2 resolvent bound tolerance used to flag a validation failure
RESOLVENT_L2_TOL = 1e-9


def basis_cache_key(cfg: RunConfig) -> str:
    """Hash of (domain, grid, n_modes) identifying a cached basis."""
    g = cfg["grid"]
    payload = {
        "domain": cfg.domain().to_dict(),
        "grid": {k: g[k] for k in ("Nr", "Mmax", "Kmax")},
        "n_modes": g["n_modes"],
        "format": BASIS_FORMAT_VERSION,
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:20]


def _basis(cfg: RunConfig, out_dir: str, use_cache: bool, info: dict):
    g = cfg["grid"]
    grid = make_grid(cfg.domain(), g["Nr"], g["Mmax"], g["Kmax"])
    key = basis_cache_key(cfg)
    info.update(hash=key, cached=False)
    cache_dir = cfg["run"]["cache_dir"] or os.path.join(out_dir, "cache")
    path = os.path.join(cache_dir, f"basis-{key}.npz")
    if use_cache and cfg["run"]["cache"] and os.path.exists(path):
        try:
            basis = load_basis(path)
            info["cached"] = True
            LOG.info("loaded cached basis %s", path)
            return basis
        except (OSError, ValueError, KeyError) as exc:
            LOG.warning("ignoring unreadable cache entry %s: %s", path, exc)
    basis = build_basis(grid, g["n_modes"], workers=cfg.workers())
    if cfg["run"]["cache"]:
        os.makedirs(cache_dir, exist_ok=True)
        tmp = path + ".tmp.npz"
        save_basis(basis, tmp)
        os.replace(tmp, path)
    return basis


def _bump(basis, width_fraction):
    """Gaussian bump along ``e_x`` centred mid-gap (and mid-period in 3D)."""
    g = basis.grid
    d = g.domain
    s = width_fraction * (d.b - d.a)
    x0, z0 = (d.a + d.b) / 2, d.length_z / 2 if g.dim == 3 else 0.0

    def func(X, Y, Z):
        dz2 = (Z - z0) ** 2 if g.dim == 3 else 0.0
        e = np.exp(-((X - x0) ** 2 + Y**2 + dz2) / (2 * s * s))
        return (e, 0 * e, 0 * e)

    return project_coeffs(basis, Field.from_cartesian(g, func))


# experiments -------------------------------------------------------------------


def _exp_spectrum(cfg, basis, out, summary):
    rows = []
    for i, e in enumerate(basis.eigs):
        r = e.residuals
        rows.append(
            (i, e.lam, e.mode.m, e.mode.k, r["eig_res"], r["div_res"], r["bc_res"], r.get("multiplier", 0.0))
        )
    write_csv(
        os.path.join(out, "spectrum.csv"),
        ("index", "lambda", "m", "k", "eig_res", "div_res", "bc_res", "multiplier"),
        rows,
    )
    summary.update(lambda1=basis.lambda1, lambda_max=basis.lambda_max, J=basis.J, n_modes=basis.n_modes)
    return ["spectrum.csv"]


def _exp_evolve(cfg, basis, out, summary):
    c = cfg["evolve"]
    if c["initial"] == "bump":
        u0 = _bump(basis, c["bump_width"])
    else:
        u0 = random_coeffs(basis, cfg.seed, decay=c["decay"], kernel=True)
    times = np.linspace(0.0, c["t_end_factor"] / basis.lambda1, c["n_times"])
    ev = evolve_homogeneous(basis, u0, times)
    names = tuple(x.strip() for x in c["norms"].split(",") if x.strip())
    ev.write_csv(os.path.join(out, "evolve_norms.csv"), names, c["p_values"])
    rows = []
    for i, t in enumerate(times):
        u = ev.field(i)
        for j in range(1, basis.J + 1):
            rows.append((float(t), j, float(np.real(cut_flux(u, j)))))
    write_csv(os.path.join(out, "evolve_fluxes.csv"), ("t", "cut", "flux"), rows)
    return ["evolve_fluxes.csv", "evolve_norms.csv"]


def _exp_resolvent(cfg, basis, out, summary):
    c = cfg["resolvent"]
    angles = np.linspace(-math.pi / 2, math.pi / 2, c["n_angles"])
    mags = np.geomspace(c["mag_min"], c["mag_max"], c["n_magnitudes"])
    rep = resolvent_sweep(basis, angles, mags, c["p"], c["n_probes"], cfg.seed)
    write_csv(os.path.join(out, "resolvent_sweep.csv"), SWEEP_HEADER, rep.rows)
    summary.update({f"max_{k}": v for k, v in rep.maxima.items()})
    status = EXIT_OK
    if c["p"] == 2 and rep.maxima["lambda_u"] > 1 + RESOLVENT_L2_TOL:
        status = EXIT_VALIDATION
    return ["resolvent_sweep.csv"], status


def _exp_powers(cfg, basis, out, summary):
    c = cfg["powers"]
    f = random_coeffs(basis, cfg.seed, n_active=min(40, basis.n_modes))
    dun = dunford_powers(basis, c["alphas"], f, n_quad=c["n_quad"])
    rows = []
    for a, d in zip(c["alphas"], dun):
        ref = reconstruct(basis, power_coeffs(basis, a, f)).coeffs
        err = float(np.linalg.norm(d.coeffs - ref) / np.linalg.norm(ref))
        rows.append((float(a), err, c["n_quad"], cfg.seed))
    write_csv(os.path.join(out, "powers_dunford.csv"), ("alpha", "rel_err", "n_quad", "seed"), rows)
    fit = imaginary_power_growth(basis, c["p_imag"], c["s_values"], c["n_probes"], cfg.seed, c["iters"])
    write_csv(
        os.path.join(out, "imaginary_powers.csv"),
        ("s", "estimate", "fit_residual", "n_probes", "seed"),
        fit.rows(),
    )
    summary.update(max_dunford_rel_err=max(r[1] for r in rows), growth_K=fit.K, growth_theta=fit.theta)
    return ["imaginary_powers.csv", "powers_dunford.csv"]


def _exp_maxreg(cfg, basis, out, summary):
    c = cfg["maxreg"]
    rep = maximal_regularity_constant(
        basis,
        c["p"],
        c["q"],
        T_horizon=c["horizon_factor"] / basis.lambda1,
        n_trials=c["n_trials"],
        seed=cfg.seed,
        n_steps=c["n_steps"],
    )
    write_csv(os.path.join(out, "maxreg.csv"), MAXREG_HEADER, rep.rows)
    summary.update(max_ratio=rep.max, mean_ratio=rep.mean, T=rep.T, n_trials=len(rep.ratios))
    return ["maxreg.csv"]


def _exp_decay(cfg, basis, out, summary):
    c = cfg["decay"]
    u0 = _bump(basis, c["bump_width"])
    fit = fit_smoothing_exponent(basis, u0, c["p"], c["q"], (c["t_min"], c["t_max"]), c["n_samples"])
    write_csv(os.path.join(out, "decay_fit.csv"), FIT_HEADER, [fit.row()])
    write_csv(os.path.join(out, "decay_series.csv"), ("t", "ratio"), fit.samples)
    resolution = basis.lambda_max * c["t_min"]
    if resolution < 4:
        LOG.warning("lambda_max * t_min = %.3g < 4: the basis does not resolve the fit window", resolution)
    summary.update(slope=fit.slope, stderr=fit.stderr, mu=fit.mu, lambda_max_t_min=resolution)
    return ["decay_fit.csv", "decay_series.csv"]


def _exp_validate(cfg, basis, out, summary):
    checks = run_checks(basis, cfg.seed)
    write_csv(os.path.join(out, "validate.csv"), CHECK_HEADER, [c.row() for c in checks])
    failed = [c.name for c in checks if not c.passed]
    summary.update(n_checks=len(checks), failed=failed)
    for c in checks:
        LOG.info("%s %s value=%.3e tol=%.1e", "PASS" if c.passed else "FAIL", c.name, c.value, c.tolerance)
    return ["validate.csv"], EXIT_VALIDATION if failed else EXIT_OK


EXPERIMENT_FUNCS = {
    "spectrum": _exp_spectrum,
    "evolve": _exp_evolve,
    "resolvent": _exp_resolvent,
    "powers": _exp_powers,
    "maxreg": _exp_maxreg,
    "decay": _exp_decay,
    "validate": _exp_validate,
}


# driver ------------------------------------------------------------------------


def _versions():
    return {
        "numpy": np.__version__,
        "python": platform.python_version(),
        "scipy": scipy.__version__,
        "stokeslab": __version__,
    }


def _json_safe(v):
    if isinstance(v, float):
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, (np.floating, np.integer)):
        return _json_safe(v.item())
    if isinstance(v, dict):
        return {str(k): _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    return v


def run_config(cfg: RunConfig, use_cache: bool = True, experiment: str | None = None) -> int:
    """Execute the configured experiment and write artifacts; returns the exit code."""
    exp = experiment or cfg.experiment
    out = cfg.output_dir()
    os.makedirs(out, exist_ok=True)
    started = datetime.now(timezone.utc).isoformat(timespec="seconds")
    t0 = time.perf_counter()
    manifest = {
        "config": cfg.echo(),
        "experiment": exp,
        "seeds": {"master": cfg.seed},
        "versions": _versions(),
        "started_utc": started,
        "workers": cfg.workers(),
    }
    basis_info, summary = {}, {}
    try:
        basis = _basis(cfg, out, use_cache, basis_info)
        result = EXPERIMENT_FUNCS[exp](cfg, basis, out, summary)
        artifacts, code = result if isinstance(result, tuple) else (result, EXIT_OK)
        manifest.update(status="ok" if code == EXIT_OK else "validation_failed", artifacts=sorted(artifacts))
    except Exception as exc:  # any module error becomes exit 1 with a structured message
        LOG.debug("experiment failed", exc_info=True)
        code = EXIT_ERROR
        err = {"error": type(exc).__name__, "message": str(exc)}
        manifest.update(status="error", artifacts=[], **err)
        print(json.dumps(err, sort_keys=True), file=sys.stderr)
    manifest.update(basis=basis_info, summary=summary, exit_code=code, wall_time_s=time.perf_counter() - t0)
    with open(os.path.join(out, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(_json_safe(manifest), fh, sort_keys=True, indent=2)
        fh.write("\n")
    return code


def run(config_path, use_cache: bool = True) -> int:
    """Load ``config_path`` and run its experiment; configuration errors give exit 1."""
    try:
        cfg = load_config(config_path)
    except StokesLabError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}, sort_keys=True), file=sys.stderr)
        return EXIT_ERROR
    return run_config(cfg, use_cache)


def _parser():
    p = argparse.ArgumentParser(prog="stokeslab", description=__doc__.splitlines()[0])
    p.add_argument("--print-defaults", action="store_true", help="print every configuration key and exit")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command")
    r = sub.add_parser("run", help="run the experiment named in a configuration file")
    r.add_argument("config")
    r.add_argument("--no-cache", action="store_true", help="rebuild the basis even if cached")
    v = sub.add_parser("validate", help="run the invariant suites (default annulus config if none given)")
    v.add_argument("config", nargs="?")
    v.add_argument("--no-cache", action="store_true")
    sub.add_parser("print-defaults", help="print every configuration key and exit")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    if args.print_defaults or args.command == "print-defaults":
        sys.stdout.write(defaults_text())
        return EXIT_OK
    if args.command == "run":
        return run(args.config, use_cache=not args.no_cache)
    if args.command == "validate":
        try:
            cfg = load_config(args.config) if args.config else parse_config("")
        except StokesLabError as exc:
            print(json.dumps({"error": type(exc).__name__, "message": str(exc)}, sort_keys=True), file=sys.stderr)
            return EXIT_ERROR
        return run_config(cfg, use_cache=not args.no_cache, experiment="validate")
    _parser().print_help()
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
