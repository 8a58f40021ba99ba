"""Noise-level sweeps: convergence-rate and iteration-count fits.

A study runs one solve per cell ``(delta, seed)`` on a fixed problem and
fits power laws to the outcome at the stopping index.
"""

import csv
import dataclasses
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.stats import linregress

from .exceptions import ConfigError, StudyError
from .forward_models import (PROBLEMS, SourceSpec, make_noisy_data, make_problem,
                             make_source_solution, rescale_model)
from .hilbert_scale import ScaleBasis, norm_t
from .newton_driver import SolverConfig, StopReason, solve, verify_trace

logger = logging.getLogger(__name__)

DEFAULT_DELTAS = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5, 1e-5)
DEFAULT_SEEDS = (0, 1, 2, 3, 4)
# Diagonal rate fits need a fine discretization; see the README.
PROBLEM_DEFAULTS = {
    "diagonal": {"n": 4096, "omega_norm": 10.0},
    "hammerstein": {"n": 128, "omega_norm": 0.5},
}


# Late outer steps at N = 4096 need t_n up to about 5e5.
STUDY_K_MAX = 10_000_000
STUDY_T_MAX_ASYMPTOTIC = 1e8


def default_config(**kw) -> SolverConfig:
    base = dict(tau=2.5, eta=0.85, inner_path="spectral", k_max=STUDY_K_MAX,
                t_max_asymptotic=STUDY_T_MAX_ASYMPTOTIC)
    base.update(kw)
    return SolverConfig(**base)


@dataclass
class StudySpec:
    """One problem instance swept over noise levels and seeds.

    ``n`` and ``omega_norm`` default per problem (``PROBLEM_DEFAULTS``). The
    scale index ``s`` and the filter kind are taken from ``config``.
    """

    problem: str = "diagonal"
    mu: float = 1.0
    a: float = 1.0
    r_list: Sequence[float] = (0.0,)
    delta_list: Sequence[float] = DEFAULT_DELTAS
    seeds: Sequence[int] = DEFAULT_SEEDS
    config: SolverConfig = field(default_factory=default_config)
    n: Optional[int] = None
    omega_norm: Optional[float] = None
    beta_cubic: float = 0.1
    out_dir: Optional[str] = None
    workers: int = 1
    require_min_grid: bool = True

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}")
        defaults = PROBLEM_DEFAULTS[self.problem]
        if self.n is None:
            self.n = defaults["n"]
        if self.omega_norm is None:
            self.omega_norm = defaults["omega_norm"]
        self.delta_list = tuple(float(d) for d in self.delta_list)
        self.seeds = tuple(int(s) for s in self.seeds)
        self.r_list = tuple(float(r) for r in self.r_list)
        d = np.array(self.delta_list)
        if d.size == 0 or np.any(d <= 0) or np.any(np.diff(d) >= 0):
            raise ConfigError("delta_list must be positive and strictly decreasing")
        if len(set(self.seeds)) != len(self.seeds) or not self.seeds:
            raise ConfigError("seeds must be distinct and nonempty")
        for r in self.r_list:
            if not -self.a <= r <= self.s:
                raise ConfigError(f"r={r} outside [-a, s] = [{-self.a}, {self.s}]")
        if self.require_min_grid:
            if math.log10(d[0] / d[-1]) < 4 - 1e-9:
                raise ConfigError("a study needs at least four decades of noise levels")
            if len(self.seeds) < 3:
                raise ConfigError("a study needs at least three seeds")
        if self.workers < 1:
            raise ConfigError("workers must be positive")

    @property
    def s(self):
        return self.config.s

    @property
    def method(self):
        return self.config.kind

    def theory_exponent(self, r: float) -> float:
        """``(mu - r) / (a + mu)``."""
        return (self.mu - r) / (self.a + self.mu)


@dataclass
class Instance:
    """Scaled model, basis, exact data and exact solution shared by all cells."""

    model: object
    basis: ScaleBasis
    y: np.ndarray
    x_true: np.ndarray
    scale: float


def build_instance(spec: StudySpec) -> Instance:
    basis = ScaleBasis.default(spec.n)
    model = make_problem(spec.problem, spec.n, spec.a, spec.beta_cubic, basis)
    model, c = rescale_model(model, basis, spec.s, spec.config.theta, uniform=True)
    x_true = model.reference_solution
    return Instance(model, basis, model.evaluate(x_true), x_true, c)


@dataclass
class CellResult:
    delta: float
    seed: int
    n_delta: int
    stop_reason: StopReason
    errors: Dict[float, float]
    err_s: float
    err_0: float
    t_total: float
    energy_ratio: float
    monotone_ok: bool
    tn_floor_ok: bool
    residual_contraction: float
    message: str = ""


def run_cell(spec: StudySpec, delta: float, seed: int, instance: Optional[Instance] = None,
             return_trace: bool = False):
    """Solve one ``(delta, seed)`` cell; errors are measured at the stopping index."""
    inst = instance if instance is not None else build_instance(spec)
    cfg = spec.config
    data = make_noisy_data(inst.y, delta, seed)
    _, x0 = make_source_solution(inst.model, inst.basis, SourceSpec(spec.mu, spec.omega_norm, seed),
                                 spec.s)
    x_out, trace = solve(inst.model, inst.basis, data, x0, cfg, x_true=inst.x_true, mu=spec.mu,
                         a=spec.a)
    e = x_out - inst.x_true
    report = verify_trace(trace, eta=cfg.eta)
    last = trace.rows[-1]
    cell = CellResult(delta, seed, trace.n_delta, trace.stop_reason,
                      {r: norm_t(inst.basis, r, e) for r in spec.r_list}, last.err_s, last.err_0,
                      last.s_n, report.energy_ratio, report.monotone_ok, report.tn_floor_ok,
                      report.residual_contraction, trace.message)
    return (cell, trace) if return_trace else cell


def _cell_worker(args):
    spec, delta, seed = args
    return run_cell(spec, delta, seed)


def run_cells(spec: StudySpec, raise_on_failure: bool = True) -> List[CellResult]:
    """All cells in ``(delta, seed)`` order, optionally in worker processes."""
    keys = [(d, s) for d in spec.delta_list for s in spec.seeds]
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            cells = list(pool.map(_cell_worker, [(spec, d, s) for d, s in keys]))
    else:
        inst = build_instance(spec)
        cells = [run_cell(spec, d, s, inst) for d, s in keys]
    failures = [(c.delta, c.seed, c.stop_reason, c.message) for c in cells
                if c.stop_reason is not StopReason.DISCREPANCY]
    if failures and raise_on_failure:
        lines = "; ".join(f"delta={d:g} seed={s}: {r} {m}".strip() for d, s, r, m in failures)
        raise StudyError(f"{len(failures)} cell(s) did not stop by discrepancy: {lines}", failures)
    return cells


@dataclass
class RateFit:
    r: float
    slope: float
    intercept: float
    r_squared: float
    theory: float
    mean_errors: np.ndarray

    @property
    def deviation(self):
        return abs(self.slope - self.theory)


@dataclass
class RateReport:
    spec: StudySpec
    fits: Dict[float, RateFit]
    cells: List[CellResult]

    @property
    def deltas(self):
        return np.array(self.spec.delta_list)


def _mean_by_delta(spec, cells, value):
    return np.array([np.mean([value(c) for c in cells if c.delta == d]) for d in spec.delta_list])


def run_rate_study(spec: StudySpec, cells: Optional[List[CellResult]] = None) -> RateReport:
    """Least-squares fit of ``log(mean_seed ||e_{n_delta}||_r)`` against ``log(delta)``."""
    if cells is None:
        cells = run_cells(spec)
    logd = np.log(spec.delta_list)
    fits = {}
    for r in spec.r_list:
        errs = _mean_by_delta(spec, cells, lambda c: c.errors[r])
        fit = linregress(logd, np.log(errs))
        fits[r] = RateFit(r, float(fit.slope), float(fit.intercept), float(fit.rvalue ** 2),
                          spec.theory_exponent(r), errs)
    report = RateReport(spec, fits, cells)
    if spec.out_dir:
        write_cells_csv(os.path.join(spec.out_dir, "cells.csv"), spec, cells)
        write_rate_csv(os.path.join(spec.out_dir, "rate.csv"), report)
    return report


@dataclass
class CountReport:
    spec: StudySpec
    n_delta: np.ndarray
    alpha: float
    beta: float
    r_squared: float
    cells: List[CellResult]


def run_count_study(spec: StudySpec, cells: Optional[List[CellResult]] = None) -> CountReport:
    """Fit ``n_delta ~ alpha + beta log(1/delta)`` to the seed-averaged counts."""
    if cells is None:
        cells = run_cells(spec)
    counts = _mean_by_delta(spec, cells, lambda c: c.n_delta)
    x = np.log(1.0 / np.array(spec.delta_list))
    if np.ptp(counts) == 0:
        alpha, beta, r2 = float(counts[0]), 0.0, 1.0
    else:
        fit = linregress(x, counts)
        alpha, beta, r2 = float(fit.intercept), float(fit.slope), float(fit.rvalue ** 2)
    report = CountReport(spec, counts, alpha, beta, r2, cells)
    if spec.out_dir:
        write_cells_csv(os.path.join(spec.out_dir, "cells.csv"), spec, cells)
        write_count_csv(os.path.join(spec.out_dir, "count.csv"), report)
    return report


def summary_line(kind, delta, trace) -> str:
    """``method, delta, n_delta, t_total, err_s, err_0, stop_reason``."""
    last = trace.rows[-1]
    return (f"method={kind}, delta={delta:.6g}, n_delta={trace.n_delta}, "
            f"t_total={last.s_n:.6g}, err_s={last.err_s:.6g}, err_0={last.err_0:.6g}, "
            f"stop_reason={trace.stop_reason}")


def run_single(spec: StudySpec, delta: float, seed: int, trace_path: Optional[str] = None):
    """Solve one cell, optionally write its trace CSV, and return ``(trace, summary)``."""
    _, trace = run_cell(spec, delta, seed, return_trace=True)
    if trace_path is not None:
        trace.to_csv(trace_path)
    return trace, summary_line(spec.method, delta, trace)


def _g(v):
    return format(float(v), ".17g")


def _ensure_dir(path):
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)


def write_cells_csv(path, spec: StudySpec, cells: List[CellResult]):
    _ensure_dir(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "delta", "seed", "n_delta", "stop_reason", "t_total", "err_s",
                    "err_0"] + [f"err_r={r:g}" for r in spec.r_list]
                   + ["energy_ratio", "monotone_ok", "residual_contraction"])
        for c in cells:
            w.writerow([spec.method, _g(c.delta), c.seed, c.n_delta, c.stop_reason, _g(c.t_total),
                        _g(c.err_s), _g(c.err_0)] + [_g(c.errors[r]) for r in spec.r_list]
                       + [_g(c.energy_ratio), int(c.monotone_ok), _g(c.residual_contraction)])


def write_rate_csv(path, report: RateReport):
    _ensure_dir(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "r", "slope", "theory", "intercept", "r_squared"])
        for r, fit in report.fits.items():
            w.writerow([report.spec.method, _g(r), _g(fit.slope), _g(fit.theory),
                        _g(fit.intercept), _g(fit.r_squared)])


def write_count_csv(path, report: CountReport):
    _ensure_dir(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "delta", "mean_n_delta"])
        for d, n in zip(report.spec.delta_list, report.n_delta):
            w.writerow([report.spec.method, _g(d), _g(n)])
        w.writerow([])
        w.writerow(["alpha", "beta", "r_squared"])
        w.writerow([_g(report.alpha), _g(report.beta), _g(report.r_squared)])


def with_config(spec: StudySpec, **changes) -> StudySpec:
    """Copy of ``spec`` with fields of its solver config replaced."""
    return dataclasses.replace(spec, config=dataclasses.replace(spec.config, **changes))
