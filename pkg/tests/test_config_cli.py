import csv
import json
import os
import subprocess
import sys

import pytest

from stokeslab import cli
from stokeslab.config import (
    EXPERIMENTS,
    SCHEMA,
    defaults_text,
    load_config,
    parse_config,
)
from stokeslab.errors import ConfigError

SMALL = """
[run]
experiment = {exp}
seed = 3
output_dir = {out}
workers = 1

[grid]
Nr = 24
Mmax = 4
n_modes = 20

[evolve]
n_times = 4
p_values = 2.0, 3.0

[resolvent]
n_angles = 3
n_magnitudes = 3
n_probes = 4

[powers]
alphas = 0.5
n_quad = 300
s_values = 1.0, 2.0
n_probes = 2
iters = 3

[maxreg]
n_trials = 3
n_steps = 8

[decay]
n_samples = 5
"""


def write_cfg(tmp_path, exp, extra=""):
    out = tmp_path / f"out_{exp}"
    p = tmp_path / f"{exp}.ini"
    p.write_text(SMALL.format(exp=exp, out=out) + extra)
    return p, out


def read_manifest(out):
    with open(out / "manifest.json") as fh:
        return json.load(fh)


def test_defaults_round_trip():
    cfg = parse_config(defaults_text())
    assert cfg.values == parse_config("").values
    for section, keys in SCHEMA.items():
        assert set(cfg.values[section]) == set(keys)
    assert cfg.experiment == "validate" and cfg.seed == 0


def test_print_defaults(capsys):
    assert cli.main(["print-defaults"]) == cli.EXIT_OK
    a = capsys.readouterr().out
    assert cli.main(["--print-defaults"]) == cli.EXIT_OK
    assert capsys.readouterr().out == a == defaults_text()
    assert "[grid]" in a and "Nr = 48" in a


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("[domain]\na = 2.0\nb = 1.0\n", "domain.a (2.0) must be smaller than domain.b (1.0)"),
        ("[grid]\nNr = x\n", "grid.Nr: cannot parse 'x' as int"),
        ("[grid]\nbogus = 1\n", "grid.bogus: unknown key"),
        ("[nope]\n", "unknown section [nope]"),
        ("[run]\nexperiment = dance\n", "run.experiment"),
        ("[domain]\nkind = annulus\n[grid]\nKmax = 2\n", "Kmax must be 0"),
        ("[evolve]\nnorms = u,foo\n", "unknown norm names"),
        ("not ini", "malformed"),
    ],
)
def test_config_errors(text, fragment):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert fragment in str(exc.value)


def test_missing_config_file(tmp_path, capsys):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.ini")
    assert cli.main(["run", str(tmp_path / "missing.ini")]) == cli.EXIT_ERROR
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ConfigError"


def test_invalid_geometry_exit_code(tmp_path, capsys):
    p, _ = write_cfg(tmp_path, "spectrum", "[domain]\na = 2.0\nb = 1.0\n")
    assert cli.main(["run", str(p)]) == cli.EXIT_ERROR
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ConfigError" and "smaller" in err["message"]


def test_capacity_error_is_structured(tmp_path, capsys):
    p, out = write_cfg(tmp_path, "spectrum", "")
    text = p.read_text().replace("n_modes = 20", "n_modes = 5000")
    p.write_text(text)
    assert cli.main(["run", str(p)]) == cli.EXIT_ERROR
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "CapacityExceeded" and "Nr*(2Mmax+1)*(2Kmax+1)/4" in err["message"]
    man = read_manifest(out)
    assert man["status"] == "error" and man["exit_code"] == 1


def test_env_overrides(tmp_path, monkeypatch):
    cfg = parse_config("[run]\nworkers = 3\n")
    assert cfg.workers() == 3
    monkeypatch.setenv("STOKESLAB_WORKERS", "2")
    assert cfg.workers() == 2
    monkeypatch.setenv("STOKESLAB_WORKERS", "0")
    assert cfg.workers() == (os.cpu_count() or 1)
    monkeypatch.setenv("STOKESLAB_WORKERS", "many")
    with pytest.raises(ConfigError):
        cfg.workers()
    monkeypatch.delenv("STOKESLAB_WORKERS")
    monkeypatch.setenv("STOKESLAB_OUTPUT_DIR", str(tmp_path / "elsewhere"))
    assert cfg.output_dir() == str(tmp_path / "elsewhere")


def test_cache_key_depends_on_geometry_only():
    a = cli.basis_cache_key(parse_config(""))
    b = cli.basis_cache_key(parse_config("[run]\nseed = 9\nexperiment = decay\n"))
    c = cli.basis_cache_key(parse_config("[grid]\nNr = 40\n"))
    d = cli.basis_cache_key(parse_config("[domain]\nb = 3.0\n"))
    assert a == b and len({a, c, d}) == 3


def test_cache_hit_and_miss(tmp_path):
    p, out = write_cfg(tmp_path, "spectrum")
    assert cli.main(["run", str(p)]) == 0
    m1 = read_manifest(out)
    assert m1["basis"]["cached"] is False
    assert (out / "cache" / f"basis-{m1['basis']['hash']}.npz").exists()
    assert cli.main(["run", str(p)]) == 0
    assert read_manifest(out)["basis"]["cached"] is True
    assert cli.main(["run", str(p), "--no-cache"]) == 0
    assert read_manifest(out)["basis"]["cached"] is False


def test_manifest_contents(tmp_path):
    p, out = write_cfg(tmp_path, "spectrum")
    assert cli.main(["run", str(p)]) == 0
    man = read_manifest(out)
    for key in ("config", "seeds", "versions", "started_utc", "workers", "basis", "summary", "exit_code",
                "wall_time_s", "status", "artifacts", "experiment"):
        assert key in man
    assert man["seeds"]["master"] == 3 and man["workers"] == 1
    assert man["config"]["grid"]["Nr"] == 24
    assert {"numpy", "scipy", "stokeslab"} <= set(man["versions"])
    assert man["artifacts"] == ["spectrum.csv"]
    rows = list(csv.reader((out / "spectrum.csv").open(newline="")))
    assert rows[0][:2] == ["index", "lambda"] and len(rows) == 21


EXPECTED = {
    "spectrum": ["spectrum.csv"],
    "evolve": ["evolve_fluxes.csv", "evolve_norms.csv"],
    "resolvent": ["resolvent_sweep.csv"],
    "powers": ["imaginary_powers.csv", "powers_dunford.csv"],
    "maxreg": ["maxreg.csv"],
    "decay": ["decay_fit.csv", "decay_series.csv"],
}


@pytest.mark.parametrize("exp", sorted(EXPECTED))
def test_each_experiment_runs(tmp_path, exp):
    p, out = write_cfg(tmp_path, exp)
    assert cli.main(["run", str(p)]) == cli.EXIT_OK
    man = read_manifest(out)
    assert man["status"] == "ok" and man["artifacts"] == EXPECTED[exp]
    for name in EXPECTED[exp]:
        with open(out / name, newline="") as fh:
            rows = list(csv.reader(fh))
        assert len(rows) >= 2


def test_experiment_outputs_deterministic(tmp_path):
    outs = []
    for i in range(2):
        d = tmp_path / f"r{i}"
        d.mkdir()
        p, out = write_cfg(d, "resolvent")
        assert cli.main(["run", str(p), "--no-cache"]) == 0
        outs.append((out / "resolvent_sweep.csv").read_bytes())
    assert outs[0] == outs[1]


def test_experiments_listed():
    assert set(EXPERIMENTS) == set(EXPECTED) | {"validate"}
    assert set(cli.EXPERIMENT_FUNCS) == set(EXPERIMENTS)


@pytest.mark.slow
def test_validate_subcommand_default_config(tmp_path, monkeypatch):
    monkeypatch.setenv("STOKESLAB_OUTPUT_DIR", str(tmp_path))
    assert cli.main(["validate"]) == cli.EXIT_OK
    man = read_manifest(tmp_path)
    assert man["summary"]["failed"] == [] and man["summary"]["n_checks"] > 0
    rows = list(csv.reader((tmp_path / "validate.csv").open(newline="")))
    assert rows[0] == ["check", "value", "tolerance", "passed"]
    assert all(r[3] == "PASS" for r in rows[1:])


def test_entry_point_subprocess(tmp_path):
    p, _ = write_cfg(tmp_path, "spectrum")
    r = subprocess.run([sys.executable, "-m", "stokeslab.cli", "run", str(p)], capture_output=True, text=True, check=False)
    assert r.returncode == 0, r.stderr
    r = subprocess.run([sys.executable, "-m", "stokeslab.cli"], capture_output=True, text=True, check=False)
    assert r.returncode == 1
