"""Configuration-driven runs with CSV tables and a JSON record.

Every run writes ``<command>-record.json`` into the output directory, also
when it fails.  Data files carry no timestamps and floats are written with
``repr`` so identical configs give byte-identical CSVs; wall-clock timings
live in the record only.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, serialize
from .errors import DependencyError
from .fluctuation import solve_backward
from .grid import ComplexField
from .hartree import evolve_hartree
from .ldp import (
    MgfCurve, extrapolate_inverse_n, geometric_grid, iid_spectral_measure, legendre_fenchel,
    lmgf_window, measure_lmgf, minimal_lmgf_constants,
    theorem_envelopes, tilted_mean,
)
from .observables import expectation, variance
from .oracle import empirical_lmgf, observable_statistics, reduced_density, run_oracle as oracle_sweep, tail_probability

CHEBYSHEV_SLACK = 1e-12


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


@dataclass
class ExperimentRecord:
    command: str
    config: dict
    config_text: str
    version: str = __version__
    status: str = "running"
    error: str | None = None
    diagnostics: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)  # name -> {"path", "sha256", "rows"}
    timings: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {k: getattr(self, k) for k in
                   ("command", "version", "status", "error", "config", "config_text",
                    "diagnostics", "tables", "timings")}
        return json.dumps(_jsonable(payload), indent=2, sort_keys=True)


class _Run:
    """Output directory, timings and table registration for one command."""

    def __init__(self, command: str, config: ExperimentConfig, out=None):
        self.config = config
        self.out = Path(out if out is not None else config.output.directory)
        self.record = ExperimentRecord(command, config.to_dict(), serialize(config))

    @contextmanager
    def timed(self, name):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.record.timings[name] = self.record.timings.get(name, 0.0) + time.perf_counter() - start

    def table(self, name: str, header, rows):
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / name
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_cell(c) for c in row])
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        self.record.tables[name] = {"path": str(path), "sha256": digest, "rows": len(rows)}
        return path

    def write_record(self) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / f"{self.record.command}-record.json"
        path.write_text(self.record.to_json() + "\n")
        return path


def _execute(command, config, out, body) -> ExperimentRecord:
    run = _Run(command, config, out)
    start = time.perf_counter()
    try:
        body(run)
        run.record.status = "ok"
    except BaseException as exc:
        run.record.status = "error"
        run.record.error = f"{type(exc).__name__}: {exc}"
        raise
    finally:
        run.record.timings["total"] = time.perf_counter() - start
        run.write_record()
    return run.record


# -- shared pipeline pieces --------------------------------------------------------

@dataclass
class _Setup:
    grid: object
    potential: object
    phi0: ComplexField
    observable: object
    times: tuple


def _setup(config: ExperimentConfig) -> _Setup:
    grid = config.build_grid()
    times = tuple(sorted(set(float(t) for t in config.dynamics.times)))
    if not times:
        raise DependencyError("no times requested")
    return _Setup(grid, config.build_potential(), config.build_initial(grid),
                  config.build_observable(grid), times)


def _trajectory(run: _Run, s: _Setup):
    tau = run.config.dynamics.tau
    T = max(max(s.times), tau)
    T = tau * round(T / tau)
    with run.timed("hartree"):
        traj = evolve_hartree(s.phi0, s.potential, T, tau)
    d = traj.diagnostics
    run.record.diagnostics["hartree"] = {
        "steps": len(traj.times) - 1,
        "initial_energy": traj.initial_energy,
        "max_norm_drift": d["max_norm_drift"],
        "relative_energy_drift": d["relative_energy_drift"],
        "mean_field_sup_max": d["mean_field_sup_max"],
        "h2_growth_rate": d["h2_growth_rate"],
    }
    return traj


def _fluctuations(run: _Run, s: _Setup, traj):
    sols = {}
    with run.timed("fluctuation"):
        for t in s.times:
            sols[t] = solve_backward(traj, s.observable, t)
    run.record.diagnostics["fluctuation"] = {
        repr(t): {
            "sigma2": sol.sigma2,
            "max_orthogonality_defect": sol.diagnostics["max_orthogonality_defect"],
            "growth_rate": sol.diagnostics["growth_rate"],
        } for t, sol in sols.items()
    }
    return sols


def _oracle(run: _Run, s: _Setup):
    cfg = run.config
    if not cfg.oracle.n_values:
        raise DependencyError("oracle.n_values is empty; the oracle sweep has no input")
    runs = {}
    with run.timed("oracle"):
        for n in sorted(set(cfg.oracle.n_values)):
            runs[n] = oracle_sweep(s.phi0, s.potential, n, s.times, tau=cfg.oracle.tau,
                                   krylov_dim=cfg.oracle.krylov_dim, tol=cfg.oracle.krylov_tol)
    run.record.diagnostics["oracle"] = {
        str(n): {
            "dim": r.dim,
            "runtime": r.runtime,
            "krylov_refinements": r.report.get("krylov_refinements", 0),
            "max_norm_drift": max(abs(st.norm() - 1.0) for st in r.states),
            "energy_drift": float(np.ptp(r.energies)),
        } for n, r in runs.items()
    }
    return runs


def _measures(s: _Setup, traj, runs):
    """``{(t, N): SpectralMeasure}`` centered at the Hartree mean."""
    out = {}
    for n, r in runs.items():
        for t, psi in zip(r.times, r.states):
            ref = expectation(s.observable, traj.at(t))
            out[(t, n)] = observable_statistics(psi, s.observable, ref)
    return out


def lambda_grid(config: ExperimentConfig, t: float, triple: float) -> np.ndarray:
    """Zero followed by a geometric grid; ``auto`` spans the last decade below the window."""
    l = config.ldp
    if l.lambda_min is None:
        top = lmgf_window(t, triple, l.c1)
        ratio = 10 ** (1 / max(l.lambda_count - 1, 1))
        return geometric_grid(top / 10, ratio, l.lambda_count)
    return geometric_grid(l.lambda_min, l.lambda_ratio, l.lambda_count)


def x_grid(config: ExperimentConfig, t: float, sigma2: float, triple: float) -> np.ndarray:
    l = config.ldp
    if l.x_min is None:
        top = theorem_envelopes(sigma2, triple, l.c1, l.c2, t, [0.0]).x_max
        ratio = 10 ** (1 / max(l.x_count - 1, 1))
        return geometric_grid(top / 10, ratio, l.x_count, include_zero=False)
    return geometric_grid(l.x_min, l.x_ratio, l.x_count, include_zero=False)


def cramer_rate(phi: ComplexField, O, x) -> np.ndarray:
    """Legendre transform of the one-particle log-MGF at each ``x``."""
    values, weights = iid_spectral_measure(phi, O)
    xmax = float(np.max(x))
    if xmax >= values.max():
        raise DependencyError(f"x={xmax} is beyond the largest one-particle deviation")
    hi = 1.0
    while tilted_mean(values, weights, hi) <= xmax and hi < 2 ** 30:
        hi *= 2
    lam = np.linspace(0.0, hi, 4001)
    curve = MgfCurve(lam, measure_lmgf(values, weights, lam), "analytic-iid")
    return np.array([legendre_fenchel(curve, float(xi)) for xi in x])


# -- commands ---------------------------------------------------------------------

def run_hartree(config: ExperimentConfig, out=None) -> ExperimentRecord:
    def body(run):
        s = _setup(config)
        traj = _trajectory(run, s)
        stride = max(1, config.dynamics.snapshot_stride)
        keep = sorted(set(range(0, len(traj.times), stride)) | {traj.index_of(t) for t in s.times}
                      | {len(traj.times) - 1})
        x = s.grid.coords[0]
        rows = []
        for k in keep:
            t = traj.times[k]
            for j, val in enumerate(traj.states[k]):
                rows.append((t, x[j] if s.grid.d == 1 else j, val.real, val.imag))
        run.table("hartree_trajectory.csv", ("t", "x", "re", "im"), rows)
        h2 = traj.diagnostics["h2_norm"]
        norms = np.sqrt(s.grid.cell_volume) * np.linalg.norm(traj.states, axis=1)
        run.table("hartree_summary.csv", ("t", "norm", "energy", "h2_norm"),
                  [(traj.times[k], norms[k], traj.energies[k], h2[k]) for k in keep])
    return _execute("hartree-run", config, out, body)


def run_fluctuation(config: ExperimentConfig, out=None) -> ExperimentRecord:
    def body(run):
        s = _setup(config)
        traj = _trajectory(run, s)
        sols = _fluctuations(run, s, traj)
        stride = max(1, config.dynamics.snapshot_stride)
        rows = []
        for t, sol in sols.items():
            keep = sorted(set(range(0, len(sol.s), stride)) | {len(sol.s) - 1})
            rows += [(t, sol.s[i], sol.norms[i], sol.orthogonality[i]) for i in keep]
        run.table("fluctuation_norms.csv", ("t", "s", "norm", "orthogonality_defect"), rows)
        run.table("variance_curve.csv", ("t", "sigma2", "one_particle_variance", "growth_rate"),
                  [(t, sol.sigma2, variance(s.observable, traj.at(t)), sol.diagnostics["growth_rate"])
                   for t, sol in sols.items()])
    return _execute("fluctuation-run", config, out, body)


def run_oracle(config: ExperimentConfig, out=None) -> ExperimentRecord:
    def body(run):
        s = _setup(config)
        traj = _trajectory(run, s)
        runs = _oracle(run, s)
        with run.timed("statistics"):
            meas = _measures(s, traj, runs)
        triple = s.observable.triple_norm
        sigma_ref = {t: variance(s.observable, traj.at(t)) for t in s.times}
        lmgf_rows, tail_rows, mom_rows = [], [], []
        for (t, n), m in meas.items():
            lam = lambda_grid(config, t, triple)
            for li, val in zip(lam, empirical_lmgf(m, lam)):
                lmgf_rows.append((t, n, li, val))
            if sigma_ref[t] > 0:
                xs = x_grid(config, t, sigma_ref[t], triple)
                for xi, p in zip(xs, tail_probability(m, xs)):
                    tail_rows.append((t, n, xi, p))
            r = runs[n]
            psi = r.states[r.times.index(t)]
            gamma = reduced_density(psi)
            phim = np.sqrt(s.grid.cell_volume) * traj.at(t).values
            fraction = float(np.vdot(phim, gamma @ phim).real)
            mom_rows.append((t, n, m.mean(), m.variance(), n * m.variance(), fraction))
        run.table("oracle_lmgf.csv", ("t", "N", "lambda", "lmgf"), lmgf_rows)
        run.table("oracle_tail.csv", ("t", "N", "x", "tail_probability"), tail_rows)
        run.table("oracle_moments.csv", ("t", "N", "mean", "variance", "n_variance", "condensate_fraction"),
                  mom_rows)
    return _execute("oracle-run", config, out, body)


def run_compare(config: ExperimentConfig, out=None) -> ExperimentRecord:
    """Bogoliubov predictions against the exact oracle, computed inline."""
    def body(run):
        cfg = config
        s = _setup(cfg)
        traj = _trajectory(run, s)
        sols = _fluctuations(run, s, traj)
        runs = _oracle(run, s)
        with run.timed("statistics"):
            meas = _measures(s, traj, runs)
        ns = sorted(runs)
        O = s.observable
        triple = O.triple_norm
        degree = cfg.ldp.extrapolation_degree
        lmgf_rows, extra_rows, fit_rows, rate_rows, audit_rows, clt_rows, cltx_rows = ([] for _ in range(7))
        summary = {}

        for t in s.times:
            phi_t = traj.at(t)
            sigma2 = sols[t].sigma2
            lam = lambda_grid(cfg, t, triple)
            quad = lam ** 2 * sigma2 / 2
            ival, iw = iid_spectral_measure(phi_t, O)
            iid = measure_lmgf(ival, iw, lam)
            lmgf_n = np.array([empirical_lmgf(meas[(t, n)], lam) for n in ns])
            for n, row in zip(ns, lmgf_n):
                for j in range(len(lam)):
                    lmgf_rows.append((t, n, lam[j], row[j], quad[j], row[j] - quad[j], iid[j], row[j] - iid[j]))

            # N -> infinity and the cubic residual fit
            extra = extrapolate_inverse_n(ns, lmgf_n, degree)
            resid = extra - quad
            bound = cfg.ldp.c1 * math.exp(math.exp(cfg.ldp.c1 * t)) * lam ** 3 * triple ** 3
            for j in range(len(lam)):
                extra_rows.append((t, lam[j], extra[j], quad[j], resid[j], bound[j]))
            pos = lam > 0
            fit = {"exponent": float("nan"), "prefactor": float("nan"), "cubic_constant": float("nan")}
            if np.all(np.abs(resid[pos]) > 0):
                lp, ap = np.log(lam[pos]), np.log(np.abs(resid[pos]))
                slope, icpt = np.polyfit(lp, ap, 1)
                fit = {"exponent": float(slope), "prefactor": float(np.exp(icpt)),
                       "cubic_constant": float(np.max(np.abs(resid[pos]) / (lam[pos] ** 3 * triple ** 3)))}
            consts = minimal_lmgf_constants(lam, extra, sigma2, triple, t)
            fit_rows.append((t, lam[pos][0], lam[pos][-1], fit["exponent"], fit["prefactor"],
                             fit["cubic_constant"], consts["C1"], consts["C2"]))
            # |r_N| against N at each lambda
            rn = np.abs(lmgf_n[:, pos] - quad[pos])
            monotone = bool(np.all(np.diff(rn, axis=0) <= 1e-15))

            # rates
            xs = x_grid(cfg, t, sigma2, triple) if sigma2 > 0 else np.array([])
            if xs.size:
                env = theorem_envelopes(sigma2, triple, cfg.ldp.c1, cfg.ldp.c2, t, xs)
                try:
                    cram = cramer_rate(phi_t, O, xs)
                except DependencyError:
                    cram = np.full(xs.shape, np.nan)
                for n in ns:
                    p = tail_probability(meas[(t, n)], xs)
                    with np.errstate(divide="ignore"):
                        rate_n = -np.log(p) / n
                    for j in range(len(xs)):
                        rate_rows.append((t, n, xs[j], rate_n[j], env.quadratic[j], env.rate_lower[j],
                                          env.rate_upper[j], cram[j], bool(env.valid[j])))

            # Chebyshev audit: N^-1 log P[O > x] <= Lambda_N(lam) - lam x
            worst = -math.inf
            for ni, n in enumerate(ns):
                p = tail_probability(meas[(t, n)], xs) if xs.size else np.array([])
                with np.errstate(divide="ignore"):
                    logp = np.log(p) / n
                for j in range(len(lam)):
                    for k in range(len(xs)):
                        b = lmgf_n[ni, j] - lam[j] * xs[k]
                        gap = logp[k] - b
                        worst = max(worst, gap)
                        audit_rows.append((t, n, lam[j], xs[k], logp[k], b, bool(gap <= CHEBYSHEV_SLACK)))

            # CLT variance
            nvar = np.array([n * meas[(t, n)].variance() for n in ns])
            for n, val in zip(ns, nvar):
                clt_rows.append((t, n, val))
            clt_extra = float(extrapolate_inverse_n(ns, nvar, degree))
            rel = abs(clt_extra - sigma2) / sigma2 if sigma2 > 0 else abs(clt_extra)
            cltx_rows.append((t, clt_extra, sigma2, rel))

            summary[repr(t)] = {
                "sigma2": sigma2,
                "clt_extrapolated": clt_extra,
                "clt_relative_error": rel,
                "residual_exponent": fit["exponent"],
                "residual_prefactor": fit["prefactor"],
                "cubic_constant": fit["cubic_constant"],
                "minimal_constants": consts,
                "residual_monotone_in_N": monotone,
                "max_iid_gap": float(np.max(np.abs(lmgf_n - iid))),
                "chebyshev_worst_gap": worst,
            }

        run.record.diagnostics["compare"] = summary
        run.table("compare_lmgf.csv",
                  ("t", "N", "lambda", "lmgf", "quadratic", "residual", "iid", "iid_gap"), lmgf_rows)
        run.table("compare_lmgf_extrapolated.csv",
                  ("t", "lambda", "lmgf_extrapolated", "quadratic", "residual", "cubic_bound"), extra_rows)
        run.table("compare_residual_fit.csv",
                  ("t", "lambda_min", "lambda_max", "exponent", "prefactor", "cubic_constant",
                   "minimal_C1", "minimal_C2"), fit_rows)
        run.table("compare_rate.csv",
                  ("t", "N", "x", "rate_N", "quadratic_rate", "rate_lower", "rate_upper", "cramer_rate",
                   "in_window"), rate_rows)
        run.table("chebyshev_audit.csv",
                  ("t", "N", "lambda", "x", "log_tail_over_N", "bound", "holds"), audit_rows)
        run.table("clt.csv", ("t", "N", "n_variance"), clt_rows)
        run.table("clt_extrapolated.csv", ("t", "extrapolated", "sigma2", "relative_error"), cltx_rows)
    return _execute("compare", config, out, body)


COMMANDS = {
    "hartree-run": run_hartree,
    "fluctuation-run": run_fluctuation,
    "oracle-run": run_oracle,
    "compare": run_compare,
}
