import csv
import io
import json
import os
import subprocess
import sys
from dataclasses import fields

import pytest

from quasiduality import cli
from quasiduality.cache import ResultCache
from quasiduality.config import RunConfig, add_config_arguments, config_from_namespace, flag_name

IDS_FLAGS = ["--alpha", "golden", "--lambda", "0.5", "--emin", "-3", "--emax", "3", "--mesh", "1e-2",
             "--size", "400"]


@pytest.fixture
def cache_dir(tmp_path):
    return str(tmp_path / "cache")


def _run(argv, tmp_path, name="out.txt"):
    out = tmp_path / name
    code = cli.dispatch(argv + ["--out", str(out)])
    return code, (out.read_bytes() if out.exists() else None)


# ---------------------------------------------------------------------------
# exit codes and formats


def test_cf_json_envelope(tmp_path, cache_dir):
    code, body = _run(["cf", "--alpha", "golden", "--depth", "12", "--cache-dir", cache_dir], tmp_path)
    assert code == cli.EXIT_OK
    env = json.loads(body)
    assert env["schema"] == 1 and env["command"] == "cf"
    assert env["payload"]["partial_quotients"][:5] == [1] * 5
    assert env["config_hash"] == RunConfig(depth=12).hash("cf")
    assert {"seed", "size", "mesh"} <= set(env["provenance"])


@pytest.mark.parametrize("argv", [
    ["lyapunov", "--E", "abc"],
    ["resonances"],
    ["no-such-command"],
    ["cf", "--format", "xml"],
    ["cf", "--format", "csv"],
    ["conjugate", "--mode", "sideways", "--lambda", "0.5", "--theta", "0.1", "--window", "100"],
])
def test_validation_exit_code(argv, tmp_path, cache_dir, capsys):
    code, _ = _run(argv + ["--cache-dir", cache_dir] if argv[0] != "no-such-command" else argv, tmp_path)
    assert code == cli.EXIT_VALIDATION
    assert capsys.readouterr().err.strip()


def test_numerical_exit_code(tmp_path, cache_dir, capsys):
    code, body = _run(["conjugate", "--lambda", "0.5", "--E", "5", "--window", "100", "--cache-dir", cache_dir],
                      tmp_path)
    assert code == cli.EXIT_NUMERICAL
    assert body is None
    assert "NoCandidate" in capsys.readouterr().err


def test_ids_csv_columns(tmp_path, cache_dir):
    code, body = _run(["ids"] + IDS_FLAGS + ["--cache-dir", cache_dir], tmp_path)
    assert code == 0
    rows = list(csv.reader(io.StringIO(body.decode())))
    assert rows[0] == ["E", "N", "method_gap"]
    assert len(rows) == 602
    N = [float(r[1]) for r in rows[1:]]
    assert N[0] == 0.0 and N[-1] == 1.0
    assert all(b >= a for a, b in zip(N, N[1:]))


def test_ids_json_format(tmp_path, cache_dir):
    code, body = _run(["ids"] + IDS_FLAGS + ["--format", "json", "--cache-dir", cache_dir], tmp_path)
    assert code == 0
    assert len(json.loads(body)["payload"]["rows"]) == 601


def test_gaps_widest_are_first_labels(tmp_path, cache_dir):
    code, body = _run(["gaps", "--alpha", "golden", "--lambda", "0.5", "--cache-dir", cache_dir], tmp_path)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(body.decode())))
    assert list(rows[0]) == ["E_left", "E_right", "N_gap", "k", "width"]
    widest = sorted(rows, key=lambda r: -float(r["width"]))[:2]
    assert sorted(int(r["k"]) for r in widest) == [-1, 1]


def test_conjugate_rotation_json(tmp_path, cache_dir):
    code, body = _run(["conjugate", "--mode", "rotation", "--alpha", "golden", "--lambda", "0.5", "--E", "0.1",
                       "--window", "400", "--cache-dir", cache_dir], tmp_path)
    assert code == 0
    rep = json.loads(body)["payload"]["report"]
    assert "rotation" in rep["mode"]
    assert rep["residual"] < 1e-3
    assert rep["fourier"] and len(rep["fourier"][0]) >= 2


def test_stdout_output(cache_dir):
    proc = subprocess.run([sys.executable, "-m", "quasiduality", "resonances", "--theta", "0.1",
                           "--cache-dir", cache_dir], capture_output=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["payload"]["resonances"][0]["k"] == 0


# ---------------------------------------------------------------------------
# cache


def _cfg(**kw):
    return RunConfig(alpha="golden", lam=0.5, emin=-3.0, emax=3.0, mesh=1e-2, size=400, **kw)


def test_cache_hit_identical_bytes(cache_dir):
    cfg = _cfg(cache_dir=cache_dir)
    first, cached1, _ = cli.run("ids", cfg)
    second, cached2, _ = cli.run("ids", cfg)
    assert (cached1, cached2) == (False, True)
    assert first == second


def test_cache_ignores_output_fields(cache_dir, tmp_path):
    cli.run("ids", _cfg(cache_dir=cache_dir))
    _, cached, _ = cli.run("ids", _cfg(cache_dir=cache_dir, out=str(tmp_path / "x.csv"), fmt="json"))
    assert cached


def test_cache_miss_on_config_change(cache_dir):
    cli.run("ids", _cfg(cache_dir=cache_dir))
    _, cached, _ = cli.run("ids", _cfg(cache_dir=cache_dir, phases=16))
    assert not cached


def test_corrupted_entry_recomputed(cache_dir):
    cfg = _cfg(cache_dir=cache_dir)
    body, _, _ = cli.run("ids", cfg)
    path = ResultCache(cache_dir).path(cfg.hash("ids"))
    raw = path.read_bytes()
    path.write_bytes(raw[:-20] + b"0" * 20)
    again, cached, _ = cli.run("ids", cfg)
    assert not cached
    assert json.loads(again)["payload"] == json.loads(body)["payload"]
    assert ResultCache(cache_dir).get(cfg.hash("ids")) == again


def test_schema_bump_invalidates(cache_dir, monkeypatch):
    cache = ResultCache(cache_dir)
    cache.put("k", b"payload")
    assert cache.get("k") == b"payload"
    import quasiduality.cache as cache_mod
    monkeypatch.setattr(cache_mod, "SCHEMA_VERSION", 2)
    assert cache.get("k") is None


def test_no_cache_writes_nothing(cache_dir):
    cli.run("cf", RunConfig(cache_dir=cache_dir, no_cache=True))
    assert not os.path.exists(cache_dir)


def test_env_var_cache_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("QUASI_CACHE_DIR", str(tmp_path / "env"))
    cli.run("cf", RunConfig())
    assert list((tmp_path / "env").glob("*.json"))


def test_deterministic_payload(cache_dir):
    cfg = _cfg(no_cache=True)
    a = json.loads(cli.run("ids", cfg)[0])
    b = json.loads(cli.run("ids", cfg)[0])
    a.pop("created"), b.pop("created")
    assert a == b


# ---------------------------------------------------------------------------
# config round trip


def _parse(argv):
    import argparse
    p = argparse.ArgumentParser()
    add_config_arguments(p)
    return config_from_namespace(p.parse_args(argv))


def test_config_argv_round_trip():
    cfg = RunConfig(alpha="0.37", lam=0.25, potential="1:1:0,-1:1:0,2:0.1:0", E=-0.3, energies=(0.1, 0.2),
                    theta=0.125, mesh=5e-4, size=321, scales=(1e-3, 0.1), no_cache=True, fmt="csv",
                    mode="perturbative", epsilon_balance=0.01, seed=7)
    assert _parse(cfg.to_argv()) == cfg
    assert _parse(RunConfig().to_argv()) == RunConfig()


def test_config_dict_round_trip():
    cfg = RunConfig(energies=(0.1, 0.2), scales=(1e-3, 0.1), lam=2.0)
    assert RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_one_flag_per_field():
    parser = cli.build_parser()
    sub = next(a for a in parser._actions if a.dest == "command")
    p = sub.choices["ids"]
    dests = [a.dest for a in p._actions if a.dest != "help"]
    assert sorted(dests) == sorted(f.name for f in fields(RunConfig))
    flags = [flag_name(f) for f in fields(RunConfig)]
    assert len(set(flags)) == len(flags)
    assert all(f.metadata.get("help") for f in fields(RunConfig))


def test_seed_default():
    assert RunConfig().seed == 42


# ---------------------------------------------------------------------------
# plots


def test_plot_files(tmp_path, cache_dir):
    png = tmp_path / "fig" / "ids.png"
    code, _ = _run(["ids"] + IDS_FLAGS + ["--cache-dir", cache_dir, "--plot", str(png)], tmp_path)
    assert code == 0
    assert png.stat().st_size > 1000
    dat = png.with_suffix(".dat").read_text().split("\n")
    assert len(dat[0].split()) == 2


def test_plot_from_cached_run(tmp_path, cache_dir):
    argv = ["resonances", "--theta", "0.2", "--cache-dir", cache_dir]
    assert _run(argv, tmp_path)[0] == 0
    png = tmp_path / "res.png"
    assert _run(argv + ["--plot", str(png)], tmp_path)[0] == 0
    assert png.exists()


@pytest.mark.parametrize("argv", [
    ["spectrum", "--lambda", "0.5", "--size", "200", "--phases", "4"],
    ["diagnose", "--lambda", "0.5", "--theta", "0.1", "--window", "400"],
    ["conjugate", "--lambda", "0.5", "--theta", "0.1", "--window", "200"],
    ["holder", "--lambda", "0.0", "--E", "0.3", "--scales", "1e-3,1e-1", "--size", "500"],
])
def test_plot_writes_data_file(argv, tmp_path, cache_dir):
    png = tmp_path / "p.png"
    assert _run(argv + ["--cache-dir", cache_dir, "--plot", str(png)], tmp_path)[0] == 0
    assert png.exists()
    rows = png.with_suffix(".dat").read_text().strip().split("\n")
    assert rows and all(len(r.split()) == 2 for r in rows)
