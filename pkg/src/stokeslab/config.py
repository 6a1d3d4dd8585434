"""Run configuration: flat INI sections with typed, documented defaults."""
from __future__ import annotations

import configparser
import math
import os
from dataclasses import dataclass

from .errors import ConfigError
from .geometry import DomainSpec

__all__ = ["EXPERIMENTS", "SCHEMA", "RunConfig", "defaults_text", "load_config", "parse_config"]

EXPERIMENTS = ("spectrum", "evolve", "resolvent", "powers", "maxreg", "decay", "validate")


@dataclass(frozen=True)
class Key:
    kind: str  # int | float | str | bool | floats | choice
    default: object
    doc: str
    choices: tuple = ()


SCHEMA: dict[str, dict[str, Key]] = {
    "run": {
        "experiment": Key("choice", "validate", "experiment to execute", EXPERIMENTS),
        "seed": Key("int", 0, "master seed for every random draw"),
        "output_dir": Key("str", "stokeslab_out", "artifact directory (env STOKESLAB_OUTPUT_DIR overrides)"),
        "workers": Key("int", 0, "worker threads, 0 = available parallelism (env STOKESLAB_WORKERS overrides)"),
        "cache": Key("bool", True, "reuse cached bases keyed by domain, grid and n_modes"),
        "cache_dir": Key("str", "", "basis cache directory, empty = <output_dir>/cache"),
    },
    "domain": {
        "kind": Key("choice", "annulus", "annulus (2D) or cylinder (3D, periodic in z)", ("annulus", "cylinder")),
        "a": Key("float", 1.0, "inner radius"),
        "b": Key("float", 2.0, "outer radius"),
        "Lz": Key("float", 2 * math.pi, "axial period (cylinder only)"),
    },
    "grid": {
        "Nr": Key("int", 48, "radial Chebyshev points"),
        "Mmax": Key("int", 12, "largest angular wavenumber"),
        "Kmax": Key("int", 0, "largest axial wavenumber (0 for the annulus)"),
        "n_modes": Key("int", 100, "eigenpairs kept, at most Nr*(2Mmax+1)*(2Kmax+1)/4"),
    },
    "spectrum": {},
    "evolve": {
        "initial": Key("choice", "random", "random modal data or a Gaussian bump", ("random", "bump")),
        "decay": Key("float", 1.0, "spectral decay exponent of random initial data"),
        "t_end_factor": Key("float", 10.0, "final time in units of 1/lambda_1"),
        "n_times": Key("int", 21, "output times, uniform on [0, t_end]"),
        "p_values": Key("floats", (2.0,), "Lebesgue exponents of the reported norms"),
        "norms": Key("str", "u,curl", "comma list from u, curl, laplacian, dt"),
        "bump_width": Key("float", 0.02, "bump standard deviation as a fraction of b - a"),
    },
    "resolvent": {
        "p": Key("float", 2.0, "Lebesgue exponent"),
        "n_angles": Key("int", 20, "ray angles uniform on [-pi/2, pi/2]"),
        "n_magnitudes": Key("int", 20, "magnitudes log-uniform on [mag_min, mag_max]"),
        "mag_min": Key("float", 1e-2, "smallest |lambda|"),
        "mag_max": Key("float", 1e4, "largest |lambda|"),
        "n_probes": Key("int", 50, "random probes"),
    },
    "powers": {
        "alphas": Key("floats", (0.25, 0.37, 0.5, 0.75), "fractional exponents for the Dunford comparison"),
        "n_quad": Key("int", 2000, "contour quadrature nodes"),
        "s_values": Key("floats", (1.0, 2.0, 4.0, 8.0), "imaginary exponents s of A^{is}"),
        "p_imag": Key("float", 4.0, "Lebesgue exponent for imaginary powers"),
        "n_probes": Key("int", 8, "probes per imaginary-power estimate"),
        "iters": Key("int", 20, "dual power iterations per probe"),
    },
    "maxreg": {
        "p": Key("float", 2.0, "space exponent"),
        "q": Key("float", 2.0, "time exponent"),
        "n_trials": Key("int", 100, "random forcings"),
        "horizon_factor": Key("float", 5.0, "time horizon in units of 1/lambda_1"),
        "n_steps": Key("int", 64, "forcing samples per horizon"),
    },
    "decay": {
        "p": Key("float", 1.0, "source exponent"),
        "q": Key("float", math.inf, "target exponent (inf allowed)"),
        "t_min": Key("float", 4e-3, "fit window start"),
        "t_max": Key("float", 4e-2, "fit window end (at least 10 * t_min)"),
        "n_samples": Key("int", 16, "log-spaced sample times"),
        "bump_width": Key("float", 0.02, "bump standard deviation as a fraction of b - a"),
    },
    "validate": {},
}


def _convert(section, name, key: Key, raw: str):
    label = f"{section}.{name}"
    raw = raw.strip()
    try:
        if key.kind == "int":
            return int(raw)
        if key.kind == "float":
            return float(raw)
        if key.kind == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if key.kind == "floats":
            vals = tuple(float(x) for x in raw.split(",") if x.strip())
            if not vals:
                raise ValueError(raw)
            return vals
        if key.kind == "choice":
            if raw not in key.choices:
                raise ConfigError(f"{label}: {raw!r} is not one of {', '.join(key.choices)}")
            return raw
        return raw
    except ValueError:
        raise ConfigError(f"{label}: cannot parse {raw!r} as {key.kind}") from None


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration; ``values[section][key]``."""

    values: dict

    def __getitem__(self, section):
        return self.values[section]

    @property
    def experiment(self) -> str:
        return self.values["run"]["experiment"]

    @property
    def seed(self) -> int:
        return self.values["run"]["seed"]

    def domain(self) -> DomainSpec:
        d = self.values["domain"]
        if d["kind"] == "annulus":
            return DomainSpec.annulus(d["a"], d["b"])
        return DomainSpec.cylinder(d["a"], d["b"], d["Lz"])

    def output_dir(self) -> str:
        return os.environ.get("STOKESLAB_OUTPUT_DIR") or self.values["run"]["output_dir"]

    def workers(self) -> int:
        env = os.environ.get("STOKESLAB_WORKERS")
        if env:
            try:
                n = int(env)
            except ValueError:
                raise ConfigError(f"STOKESLAB_WORKERS: cannot parse {env!r} as int") from None
        else:
            n = self.values["run"]["workers"]
        return n if n > 0 else (os.cpu_count() or 1)

    def echo(self) -> dict:
        """JSON-friendly copy (``inf`` rendered as a string)."""

        def clean(v):
            if isinstance(v, float) and not math.isfinite(v):
                return repr(v)
            if isinstance(v, tuple):
                return [clean(x) for x in v]
            return v

        return {s: {k: clean(v) for k, v in kv.items()} for s, kv in self.values.items()}


def _check(values):
    d, g, run = values["domain"], values["grid"], values["run"]
    if not d["a"] > 0:
        raise ConfigError(f"domain.a must be positive, got {d['a']}")
    if not d["a"] < d["b"]:
        raise ConfigError(f"domain.a ({d['a']}) must be smaller than domain.b ({d['b']})")
    if d["kind"] == "cylinder" and not d["Lz"] > 0:
        raise ConfigError(f"domain.Lz must be positive, got {d['Lz']}")
    if g["Nr"] < 8:
        raise ConfigError(f"grid.Nr must be at least 8, got {g['Nr']}")
    if g["Mmax"] < 1:
        raise ConfigError(f"grid.Mmax must be at least 1, got {g['Mmax']}")
    if d["kind"] == "annulus" and g["Kmax"] != 0:
        raise ConfigError(f"grid.Kmax must be 0 for the annulus, got {g['Kmax']}")
    if g["Kmax"] < 0:
        raise ConfigError(f"grid.Kmax must be non-negative, got {g['Kmax']}")
    if g["n_modes"] < 1:
        raise ConfigError(f"grid.n_modes must be positive, got {g['n_modes']}")
    if run["workers"] < 0:
        raise ConfigError(f"run.workers must be non-negative, got {run['workers']}")
    names = [x.strip() for x in values["evolve"]["norms"].split(",") if x.strip()]
    bad = [x for x in names if x not in ("u", "curl", "laplacian", "dt")]
    if bad or not names:
        raise ConfigError(f"evolve.norms: unknown norm names {bad}")
    for sec in ("evolve", "resolvent", "powers", "maxreg", "decay"):
        for k, v in values[sec].items():
            if k.startswith("n_") and v < 1:
                raise ConfigError(f"{sec}.{k} must be positive, got {v}")


def parse_config(text: str = "") -> RunConfig:
    """Parse INI ``text``; unknown sections or keys raise :class:`ConfigError`."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from None
    values = {s: {k: key.default for k, key in keys.items()} for s, keys in SCHEMA.items()}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for name, raw in cp.items(section):
            if name not in SCHEMA[section]:
                raise ConfigError(f"{section}.{name}: unknown key")
            values[section][name] = _convert(section, name, SCHEMA[section][name], raw)
    _check(values)
    return RunConfig(values)


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from None
    return parse_config(text)


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(repr(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


def defaults_text() -> str:
    """All sections, keys and defaults as a commented INI document."""
    lines = []
    for section, keys in SCHEMA.items():
        lines.append(f"[{section}]")
        if not keys:
            lines.append("# no keys")
        for name, key in keys.items():
            extra = f" (one of: {', '.join(key.choices)})" if key.choices else ""
            lines.append(f"# {key.doc}{extra}")
            lines.append(f"{name} = {_fmt(key.default)}")
        lines.append("")
    return "\n".join(lines)
