"""Run configuration shared by every CLI command."""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

from .arithmetic import Frequency, make_frequency
from .errors import ValidationError
from .operators import Potential, almost_mathieu, potential_from_triples

SCHEMA_VERSION = 1
CACHE_ENV = "QUASI_CACHE_DIR"

# fields that change where results go but not what they are
NON_SEMANTIC = ("out", "plot", "cache_dir", "no_cache", "fmt")


def default_cache_dir() -> str:
    return os.environ.get(CACHE_ENV) or str(Path.home() / ".cache" / "quasiduality")


@dataclass(frozen=True)
class RunConfig:
    """One field per CLI flag; ``help`` metadata doubles as documentation of the default."""

    alpha: str = field(default="golden", metadata={"help": "frequency: number or golden/silver"})
    lam: float = field(default=1.0, metadata={"flag": "--lambda", "help": "coupling λ"})
    potential: Optional[str] = field(default=None, metadata={
        "help": "potential Fourier triples 'k:re:im,...' (default: v = 2cos 2πx)"})
    depth: int = field(default=40, metadata={"help": "continued fraction depth"})
    E: Optional[float] = field(default=None, metadata={"help": "energy"})
    energies: Optional[tuple] = field(default=None, metadata={"help": "comma-separated energies"})
    theta: Optional[float] = field(default=None, metadata={"help": "phase θ"})
    emin: Optional[float] = field(default=None, metadata={"help": "energy range start (default −bound)"})
    emax: Optional[float] = field(default=None, metadata={"help": "energy range end (default +bound)"})
    mesh: float = field(default=1e-4, metadata={"help": "energy mesh"})
    size: int = field(default=2000, metadata={"help": "truncation size of the direct model"})
    phases: int = field(default=32, metadata={"help": "number of phases"})
    method: str = field(default="eigenvalue-cloud", metadata={"help": "eigenvalue-cloud | sturm | uh-scan"})
    iterates: int = field(default=10_000, metadata={"help": "cocycle iterates"})
    samples: int = field(default=64, metadata={"help": "phase samples for cocycle averages"})
    theta_grid: int = field(default=64, metadata={"help": "θ grid for dual phase selection"})
    window: int = field(default=400, metadata={"help": "dual window N"})
    strip: Optional[float] = field(default=None, metadata={"help": "strip half-width (default per mode)"})
    eps0: float = field(default=0.05, metadata={"help": "resonance parameter ε₀"})
    k_max: int = field(default=1000, metadata={"help": "largest mode searched"})
    mode: str = field(default="rotation", metadata={
        "help": "conjugate mode: rotation | triangularize | perturbative | localized | duality"})
    variant: str = field(default="unimodular", metadata={"help": "duality matrix variant"})
    epsilon_balance: Optional[float] = field(default=None, metadata={"help": "balanced triangularization ε"})
    min_width: float = field(default=1e-3, metadata={"help": "minimal reported gap width"})
    label_k_max: int = field(default=50, metadata={"help": "largest gap label tried"})
    label_tol: float = field(default=1e-2, metadata={"help": "gap label tolerance"})
    scales: tuple = field(default=(1e-4, 1e-2), metadata={"help": "Hölder scale range 'lo,hi'"})
    c0: int = field(default=4, metadata={"help": "window constant C₀"})
    seed: int = field(default=42, metadata={"help": "random seed"})
    fmt: Optional[str] = field(default=None, metadata={"flag": "--format", "help": "json | csv"})
    out: Optional[str] = field(default=None, metadata={"help": "output path (default stdout)"})
    plot: Optional[str] = field(default=None, metadata={"help": "render a figure to this path"})
    cache_dir: Optional[str] = field(default=None, metadata={"help": f"cache directory (env {CACHE_ENV})"})
    no_cache: bool = field(default=False, metadata={"help": "bypass the result cache"})

    # -- derived objects ------------------------------------------------------
    def frequency(self) -> Frequency:
        try:
            a = float(self.alpha)
        except ValueError:
            a = self.alpha
        return make_frequency(a, self.depth)

    def potential_obj(self) -> Potential:
        if self.potential is None:
            return almost_mathieu(self.lam)
        return potential_from_triples(parse_triples(self.potential), self.lam)

    def resolved_cache_dir(self) -> str:
        return self.cache_dir or default_cache_dir()

    # -- serialization --------------------------------------------------------
    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValidationError(f"unknown config fields {sorted(unknown)}")
        kw = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**kw)

    def semantic_dict(self) -> dict:
        d = self.to_dict()
        for k in NON_SEMANTIC:
            d.pop(k)
        return d

    def hash(self, command: str) -> str:
        blob = json.dumps({"command": command, "config": self.semantic_dict(), "schema": SCHEMA_VERSION},
                          sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def to_argv(self) -> list:
        """Flags reproducing this config (defaults omitted)."""
        argv = []
        defaults = RunConfig()
        for f in fields(self):
            v = getattr(self, f.name)
            if v == getattr(defaults, f.name):
                continue
            flag = flag_name(f)
            if isinstance(v, bool):
                argv.append(flag)
            elif isinstance(v, tuple):
                argv += [flag, ",".join(repr(float(x)) for x in v)]
            else:
                argv += [flag, repr(v) if isinstance(v, float) else str(v)]
        return argv


def flag_name(f) -> str:
    return f.metadata.get("flag", "--" + f.name.replace("_", "-"))


def parse_triples(text: str):
    """'k:re:im,k:re:im' → [(k, re, im), ...]."""
    out = []
    try:
        for item in text.split(","):
            k, re_, im = item.split(":")
            out.append((int(k), float(re_), float(im)))
    except ValueError as exc:
        raise ValidationError(f"bad potential string {text!r}; expected 'k:re:im,...'") from exc
    return out


def _float_tuple(text: str) -> tuple:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _type_for(f):
    t = str(f.type)
    if "tuple" in t:
        return _float_tuple
    if "float" in t:
        return float
    if "int" in t:
        return int
    return str


def add_config_arguments(parser: argparse.ArgumentParser) -> None:
    for f in fields(RunConfig):
        flag = flag_name(f)
        help_ = f.metadata.get("help", "")
        if f.type in ("bool", bool):
            parser.add_argument(flag, dest=f.name, action="store_true", help=help_)
        else:
            parser.add_argument(flag, dest=f.name, type=_type_for(f), default=f.default, help=help_)


def config_from_namespace(ns: argparse.Namespace) -> RunConfig:
    kw = {f.name: getattr(ns, f.name) for f in fields(RunConfig)}
    return RunConfig(**kw)
