"""Experiment configuration: INI file with one section per concern."""
from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .errors import ConfigError, ParameterError
from .grid import ComplexField, GridSpec, gaussian
from .observables import Observable, load_matrix_csv
from .potentials import Potential
from .oracle import BASIS_CAP, basis_dimension


@dataclass(frozen=True)
class GridSection:
    d: int = 1
    M: int = 6
    L: float = 2 * np.pi


@dataclass(frozen=True)
class PotentialSection:
    kind: str = "gaussian"
    alpha: float = 0.25
    sigma: float = 1.0
    epsilon: float = 0.1
    k0: int = 1


@dataclass(frozen=True)
class InitialSection:
    kind: str = "gaussian"  # gaussian | mode-mixture
    center: Optional[float] = None  # None: box center
    width: float = 1.0
    momentum: float = 0.0
    modes: Tuple[int, ...] = ()
    coefficients: Tuple[complex, ...] = ()


@dataclass(frozen=True)
class ObservableSection:
    kind: str = "cosine"  # cosine | gaussian-bump | projector | resolvent | identity | matrix-csv
    amplitude: float = 1.0
    mode: int = 1
    center: Optional[float] = None
    width: float = 1.0
    path: str = ""


@dataclass(frozen=True)
class DynamicsSection:
    times: Tuple[float, ...] = (1.0,)
    tau: float = 1e-3
    snapshot_stride: int = 10


@dataclass(frozen=True)
class OracleSection:
    n_values: Tuple[int, ...] = (2, 3, 4, 5, 6)
    tau: float = 0.05
    krylov_dim: int = 20
    krylov_tol: float = 1e-10


@dataclass(frozen=True)
class LdpSection:
    lambda_min: Optional[float] = None  # None: one decade below the log-MGF window
    lambda_ratio: float = 10 ** (1 / 7)
    lambda_count: int = 8
    x_min: Optional[float] = None  # None: one decade below the rate window
    x_ratio: float = 10 ** (1 / 7)
    x_count: int = 8
    c1: float = 1.0
    c2: float = 1.0
    extrapolation_degree: int = 3


@dataclass(frozen=True)
class OutputSection:
    directory: str = "out"


@dataclass(frozen=True)
class RunSection:
    seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    grid: GridSection = field(default_factory=GridSection)
    potential: PotentialSection = field(default_factory=PotentialSection)
    initial: InitialSection = field(default_factory=InitialSection)
    observable: ObservableSection = field(default_factory=ObservableSection)
    dynamics: DynamicsSection = field(default_factory=DynamicsSection)
    oracle: OracleSection = field(default_factory=OracleSection)
    ldp: LdpSection = field(default_factory=LdpSection)
    output: OutputSection = field(default_factory=OutputSection)
    run: RunSection = field(default_factory=RunSection)

    # -- builders --------------------------------------------------------
    def build_grid(self) -> GridSpec:
        g = self.grid
        return GridSpec(g.d, g.M, g.L)

    def build_potential(self) -> Potential:
        p = self.potential
        return Potential(p.kind, p.alpha, p.sigma, p.epsilon, p.k0)

    def build_initial(self, grid: GridSpec) -> ComplexField:
        s = self.initial
        if s.kind == "gaussian":
            center = None if s.center is None else [s.center] * grid.d
            momentum = [s.momentum] + [0.0] * (grid.d - 1) if s.momentum else None
            return gaussian(grid, center=center, width=s.width, momentum=momentum)
        if s.kind == "mode-mixture":
            if not s.modes or len(s.modes) != len(s.coefficients):
                raise ConfigError("mode-mixture needs matching 'modes' and 'coefficients'")
            x = grid.coords[0]
            vals = sum(c * np.exp(2j * np.pi * m * x / grid.L) for m, c in zip(s.modes, s.coefficients))
            return ComplexField(grid, vals).normalized()
        raise ConfigError(f"unknown initial state kind {s.kind!r}")

    def build_observable(self, grid: GridSpec) -> Observable:
        o = self.observable
        if o.kind == "cosine":
            return Observable.cosine(grid, o.amplitude, o.mode)
        if o.kind == "gaussian-bump":
            center = None if o.center is None else [o.center] * grid.d
            return Observable.gaussian_bump(grid, o.amplitude, center, o.width)
        if o.kind == "projector":
            center = None if o.center is None else [o.center] * grid.d
            return Observable.projector(gaussian(grid, center=center, width=o.width))
        if o.kind == "resolvent":
            return Observable.fourier_multiplier(grid, o.amplitude / (1.0 + grid.k2),
                                                 params={"amplitude": o.amplitude})
        if o.kind == "identity":
            return Observable.identity(grid)
        if o.kind == "matrix-csv":
            return load_matrix_csv(o.path, grid)
        raise ConfigError(f"unknown observable kind {o.kind!r}")

    def validate(self):
        """Check sizes against module caps and that ``tau`` divides every time."""
        try:
            grid = self.build_grid()
            self.build_potential()
            self.build_initial(grid)
            self.build_observable(grid)
        except (ParameterError, OSError) as exc:
            raise ConfigError(str(exc)) from exc
        tau = self.dynamics.tau
        if tau <= 0:
            raise ConfigError("dynamics.tau must be positive")
        for t in self.dynamics.times:
            if t < 0 or abs(round(t / tau) * tau - t) > 1e-9 * max(1.0, t):
                raise ConfigError(f"tau={tau} does not divide time {t}")
        for n in self.oracle.n_values:
            if n < 1:
                raise ConfigError("oracle particle numbers must be positive")
            if grid.d == 1 and basis_dimension(grid.M, n) > BASIS_CAP:
                raise ConfigError(f"oracle sector M={grid.M}, N={n} exceeds the basis cap")
        if self.ldp.c1 <= 0 or self.ldp.c2 <= 0:
            raise ConfigError("envelope constants must be positive")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# -- text serialization ---------------------------------------------------------

def _format(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, complex):
        return repr(value).strip("()")
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(text: str, annotation: str, where: str):
    text = text.strip()
    try:
        if annotation.startswith("Optional["):
            if text.lower() in ("auto", "none", ""):
                return None
            return _parse(text, annotation[len("Optional["):-1], where)
        if annotation.startswith("Tuple["):
            inner = annotation[len("Tuple["):].split(",")[0].strip()
            if not text:
                return ()
            return tuple(_parse(part, inner, where) for part in text.split(","))
        if annotation == "int":
            return int(text)
        if annotation == "float":
            return float(text)
        if annotation == "complex":
            return complex(text.replace(" ", ""))
        return text
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {text!r} as {annotation}") from exc


def serialize(config: ExperimentConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for sec in dataclasses.fields(config):
        section = getattr(config, sec.name)
        parser[sec.name] = {f.name: _format(getattr(section, f.name)) for f in dataclasses.fields(section)}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def parse(text: str, overrides=()) -> ExperimentConfig:
    """Build a config from INI text plus ``section.key=value`` overrides."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        key, value = item.split("=", 1)
        sec, name = key.split(".", 1)
        if not parser.has_section(sec):
            parser.add_section(sec)
        parser[sec][name] = value

    known = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(parser.sections()) - set(known)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    sections = {}
    for name, fdef in known.items():
        cls = fdef.default_factory
        kwargs = {}
        if parser.has_section(name):
            types = {f.name: f.type for f in dataclasses.fields(cls)}
            for key, raw in parser[name].items():
                if key not in types:
                    raise ConfigError(f"unknown key {name}.{key}")
                kwargs[key] = _parse(raw, types[key], f"{name}.{key}")
        sections[name] = cls(**kwargs)
    return ExperimentConfig(**sections)


def load(path, overrides=()) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse(text, overrides).validate()
