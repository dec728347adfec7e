"""Command-line front end: ``quasiduality <command> [flags]``.

Exit codes: 0 success, 2 validation error, 3 numerical error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .arithmetic import diophantine_fit, find_resonances
from .cache import ResultCache
from .cocycles import lyapunov_exponent, rotation_number, schrodinger_cocycle
from .config import SCHEMA_VERSION, RunConfig, add_config_arguments, config_from_namespace
from .errors import NumericalError, QuasiError, ValidationError
from .spectral import (find_gaps, hausdorff_distance, holder_exponent, ids_table, spectrum_bound,
                       spectrum_sample, thouless_residual, with_method_gap)

COMMANDS = ("cf", "resonances", "lyapunov", "rotation", "spectrum", "ids", "gaps", "holder",
            "thouless", "conjugate", "check-duality", "diagnose")
CSV_COMMANDS = {"ids": ("E", "N", "method_gap"), "gaps": ("E_left", "E_right", "N_gap", "k", "width")}

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


def _clean(v):
    """JSON-safe values: NaN/inf → None, numpy scalars → Python."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    return v


def _energies(cfg: RunConfig):
    if cfg.energies:
        return list(cfg.energies)
    if cfg.E is not None:
        return [cfg.E]
    raise ValidationError("give --E or --energies")


def _range(cfg: RunConfig, pot):
    R = spectrum_bound(pot)
    return (-R if cfg.emin is None else cfg.emin), (R if cfg.emax is None else cfg.emax)


# ---------------------------------------------------------------------------
# Commands: each returns (payload, plot callback or None)


def cmd_cf(cfg):
    freq = cfg.frequency()
    fit = diophantine_fit(freq)
    payload = {"alpha": freq.value, "partial_quotients": list(freq.partial_quotients),
               "denominators": list(freq.denominators),
               "diophantine": {"kappa": fit.kappa, "tau": fit.tau}}

    def plot(path):
        from .plotting import plot_curve
        q = np.asarray(freq.denominators, dtype=float)
        return plot_curve(np.arange(len(q)), np.log(q), path, "n", "ln q_n", "continued fraction denominators", "o-")
    return payload, plot


def cmd_resonances(cfg):
    if cfg.theta is None:
        raise ValidationError("resonances needs --theta")
    res = find_resonances(cfg.theta, cfg.frequency(), cfg.eps0, cfg.k_max)
    payload = {"theta": cfg.theta, "eps0": cfg.eps0, "k_max": cfg.k_max,
               "resonances": [{"k": k, "distance": d} for k, d in res.entries],
               "terminal_exact": res.terminal_exact}

    def plot(path):
        from .plotting import plot_curve
        ks = [abs(k) for k, _ in res.entries]
        ds = [max(d, 1e-300) for _, d in res.entries]
        return plot_curve(ks, np.log10(ds), path, "|k|", "log10 ‖2θ − kα‖", "resonances", "o")
    return payload, plot


def _cocycle_scan(cfg, fn, name):
    pot, freq = cfg.potential_obj(), cfg.frequency()
    rows = []
    for E in _energies(cfg):
        est = fn(schrodinger_cocycle(pot, E, freq))
        rows.append({"E": E, name: est.value, "error": est.error})

    def plot(path):
        from .plotting import plot_curve
        return plot_curve([r["E"] for r in rows], [r[name] for r in rows], path, "E", name, "", "o-")
    return {"values": rows}, plot


def cmd_lyapunov(cfg):
    return _cocycle_scan(cfg, lambda c: lyapunov_exponent(c, cfg.iterates, cfg.samples), "L")


def cmd_rotation(cfg):
    return _cocycle_scan(cfg, lambda c: rotation_number(c, cfg.iterates, check_degree=False), "rho")


def _bands(points, resolution):
    pts = np.sort(np.asarray(points))
    if pts.size == 0:
        return []
    breaks = np.nonzero(np.diff(pts) > 2 * resolution)[0]
    starts = np.concatenate([[0], breaks + 1])
    ends = np.concatenate([breaks, [pts.size - 1]])
    return [[float(pts[s]), float(pts[e])] for s, e in zip(starts, ends)]


def cmd_spectrum(cfg):
    pot, freq = cfg.potential_obj(), cfg.frequency()
    sample = spectrum_sample(pot, freq, min(cfg.size, 5000), cfg.phases, cfg.mesh, cfg.method)
    payload = {"method": sample.method, "resolution": sample.resolution, "count": int(sample.energies.size),
               "min": float(sample.energies.min()), "max": float(sample.energies.max()),
               "bands": _bands(sample.energies, sample.resolution)}

    def plot(path):
        from .plotting import plot_spectrum
        return plot_spectrum(sample.energies, path)
    return payload, plot


def _table(cfg):
    pot, freq = cfg.potential_obj(), cfg.frequency()
    emin, emax = _range(cfg, pot)
    return pot, freq, ids_table(pot, freq, emin, emax, mesh=cfg.mesh, size=cfg.size, phases=cfg.phases,
                                method=cfg.method)


def cmd_ids(cfg):
    pot, freq, table = _table(cfg)
    stride = max(1, len(table.energies) // 50)
    table = with_method_gap(table, pot, freq, stride)
    rows = [list(r) for r in table.rows()]

    def plot(path):
        from .plotting import plot_ids
        return plot_ids(table.energies, table.values, path)
    return {"columns": list(CSV_COMMANDS["ids"]), "rows": rows, "method": table.method}, plot


def cmd_gaps(cfg):
    pot, freq, table = _table(cfg)
    gaps = find_gaps(table, freq, cfg.min_width, cfg.label_k_max, cfg.label_tol, pot=pot)
    gaps.sort(key=lambda g: -g.width)
    rows = [list(g.row()) for g in gaps]

    def plot(path):
        from .plotting import plot_ids
        gd = [dict(zip(CSV_COMMANDS["gaps"], r)) for r in rows]
        return plot_ids(table.energies, table.values, path, gd, "gaps")
    return {"columns": list(CSV_COMMANDS["gaps"]), "rows": rows}, plot


def cmd_holder(cfg):
    if cfg.E is None:
        raise ValidationError("holder needs --E (gap edge)")
    pot, freq = cfg.potential_obj(), cfg.frequency()
    if len(cfg.scales) != 2:
        raise ValidationError("--scales needs 'lo,hi'")
    lo, hi = cfg.scales
    scales = np.geomspace(lo, hi, 9)
    fit = holder_exponent(pot, freq, cfg.E, scales, cfg.size, cfg.phases)
    payload = {"E": cfg.E, "exponent": fit.exponent, "intercept": fit.intercept,
               "scales": list(fit.scales), "increments": list(fit.increments), "used": fit.used}

    def plot(path):
        from .plotting import plot_loglog_fit
        return plot_loglog_fit(fit.scales, fit.increments, fit.exponent, fit.intercept, path)
    return payload, plot


def cmd_thouless(cfg):
    pot, freq = cfg.potential_obj(), cfg.frequency()
    R = spectrum_bound(pot)
    table = ids_table(pot, freq, -R - 0.01, R + 0.01, mesh=cfg.mesh, size=cfg.size, phases=cfg.phases)
    rows = []
    for E in _energies(cfg):
        L = lyapunov_exponent(schrodinger_cocycle(pot, E, freq), cfg.iterates, cfg.samples).value
        rows.append({"E": E, "L": L, "residual": thouless_residual(pot, freq, E, table, L)})

    def plot(path):
        from .plotting import plot_curve
        return plot_curve([r["E"] for r in rows], [r["residual"] for r in rows], path, "E", "Thouless residual",
                          "", "o")
    return {"values": rows}, plot


def _dual_data(cfg, pot, freq):
    from .duality import dual_data_at_phase, select_dual_phase
    radius = max(cfg.window, 200) // 2
    if cfg.theta is not None:
        return dual_data_at_phase(pot, freq, cfg.theta, radius)
    if cfg.E is None:
        raise ValidationError("give --E or --theta")
    return select_dual_phase(pot, freq, cfg.E, cfg.theta_grid, radius, mesh=max(cfg.mesh, 1e-6))


def cmd_conjugate(cfg):
    from . import duality as D
    pot, freq = cfg.potential_obj(), cfg.frequency()
    data = _dual_data(cfg, pot, freq)
    E = data.E
    strip = cfg.strip
    if cfg.mode == "rotation":
        rep = D.rotation_conjugacy(pot, freq, E, data, cfg.window, D.DEFAULT_STRIP if strip is None else strip,
                                   cfg.eps0, cfg.c0)
    elif cfg.mode == "triangularize":
        rep = D.triangularize(pot, freq, E, data, cfg.window, cfg.epsilon_balance,
                              0.01 if strip is None else strip, cfg.eps0, cfg.c0)
    elif cfg.mode == "perturbative":
        rep = D.perturbative_reduce(pot, freq, E, data, cfg.window, 0.02 if strip is None else strip, cfg.c0)
    elif cfg.mode == "localized":
        R = max(cfg.window // cfg.c0 - 1, 1)
        rep = D.reduce_localized(pot, freq, E, data, (-R, R), 0.02 if strip is None else strip)
    elif cfg.mode == "duality":
        R = max(cfg.window // cfg.c0 - 1, 1)
        wave = D.bloch_wave(data, pot, E, (-R, R), D.DEFAULT_STRIP if strip is None else strip)
        rep = D.duality_matrix(wave, cfg.variant)
    else:
        raise ValidationError(f"unknown mode {cfg.mode!r}")
    payload = {"E": E, "theta": data.theta, "report": rep.to_dict()}

    def plot(path):
        from .plotting import plot_matrix_map
        x = np.arange(512) / 512
        return plot_matrix_map(x, rep.B(x), path, f"{rep.mode} conjugacy")
    return payload, plot


def cmd_check_duality(cfg):
    pot, freq = cfg.potential_obj(), cfg.frequency()
    lam = cfg.lam
    if lam == 0:
        raise ValidationError("duality check needs nonzero coupling")
    size = min(cfg.size, 500)
    a = spectrum_sample(pot, freq, size, cfg.phases, cfg.mesh).energies
    b = lam * spectrum_sample(pot.with_coupling(1 / lam), freq, size, cfg.phases, cfg.mesh).energies
    d = hausdorff_distance(a, b)
    payload = {"lambda": lam, "dual_lambda": 1 / lam, "hausdorff": d, "size": size, "phases": cfg.phases}

    def plot(path):
        from .plotting import plot_spectrum
        return plot_spectrum(a, path, f"λ = {lam}: Hausdorff distance to the dual sample {d:.3g}")
    return payload, plot


def cmd_diagnose(cfg):
    from .diagnostics import almost_localization_check
    pot, freq = cfg.potential_obj(), cfg.frequency()
    data = _dual_data(cfg, pot, freq)
    res = find_resonances(data.theta, freq, cfg.eps0, data.radius)
    prof = almost_localization_check(data, res, cfg.c0)
    payload = {"E": data.E, "theta": data.theta, "resonances": [list(e) for e in res.entries], **prof.to_dict()}

    def plot(path):
        from .plotting import plot_decay
        return plot_decay(data.indices, data.u_hat, path, prof.resonance_windows)
    return payload, plot


HANDLERS = {
    "cf": cmd_cf, "resonances": cmd_resonances, "lyapunov": cmd_lyapunov, "rotation": cmd_rotation,
    "spectrum": cmd_spectrum, "ids": cmd_ids, "gaps": cmd_gaps, "holder": cmd_holder, "thouless": cmd_thouless,
    "conjugate": cmd_conjugate, "check-duality": cmd_check_duality, "diagnose": cmd_diagnose,
}


# ---------------------------------------------------------------------------
# Envelope, rendering, dispatch


def envelope(command: str, cfg: RunConfig, payload: dict) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "command": command,
        "version": __version__,
        "config_hash": cfg.hash(command),
        "created": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "config": cfg.semantic_dict(),
        "provenance": {"seed": cfg.seed, "size": cfg.size, "phases": cfg.phases, "mesh": cfg.mesh,
                       "window": cfg.window},
        "payload": _clean(payload),
    }


def encode(env: dict) -> bytes:
    return (json.dumps(env, sort_keys=True, indent=1, ensure_ascii=False) + "\n").encode()


def render(command: str, body: bytes, fmt: str) -> bytes:
    if fmt == "json":
        return body
    if command not in CSV_COMMANDS:
        raise ValidationError(f"csv output is available for {sorted(CSV_COMMANDS)} only")
    env = json.loads(body)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COMMANDS[command])
    for row in env["payload"]["rows"]:
        w.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in row])
    return buf.getvalue().encode()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quasiduality",
                                     description="Quasiperiodic Schrödinger cocycles and Aubry duality")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True
    for name in COMMANDS:
        p = sub.add_parser(name, help=(HANDLERS[name].__doc__ or name).strip().splitlines()[0])
        add_config_arguments(p)
    return parser


def run(command: str, cfg: RunConfig):
    """Payload bytes for ``command``, served from the cache when possible; returns (body, from_cache, plot)."""
    cache = None if cfg.no_cache else ResultCache(cfg.resolved_cache_dir())
    key = cfg.hash(command)
    if cache is not None:
        body = cache.get(key)
        if body is not None:
            return body, True, None
    payload, plot = HANDLERS[command](cfg)
    body = encode(envelope(command, cfg, payload))
    if cache is not None:
        try:
            cache.put(key, body)
        except OSError as exc:
            print(f"warning: cache write failed: {exc}", file=sys.stderr)
    return body, False, plot


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code else EXIT_OK
    command = ns.command
    try:
        cfg = config_from_namespace(ns)
        fmt = cfg.fmt or ("csv" if command in CSV_COMMANDS else "json")
        if fmt not in ("json", "csv"):
            raise ValidationError("--format must be json or csv")
        np.random.seed(cfg.seed)
        body, cached, plot = run(command, cfg)
        out = render(command, body, fmt)
        if cfg.out:
            Path(cfg.out).parent.mkdir(parents=True, exist_ok=True)
            Path(cfg.out).write_bytes(out)
        else:
            try:
                sys.stdout.buffer.write(out)
                sys.stdout.flush()
            except BrokenPipeError:  # reader closed early (e.g. piped into head)
                os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        if cfg.plot:
            if plot is None:  # served from cache: recompute the figure data
                _, plot = HANDLERS[command](cfg)
            plot(cfg.plot)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except QuasiError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def main() -> None:
    sys.exit(dispatch())
