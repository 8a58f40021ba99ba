"""Outer inexact Newton iteration terminated by the discrepancy principle."""

import csv
import enum
import io
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .exceptions import ConfigError, InnerInfeasibleError, InnerStallError, NumericalError
from .forward_models import ForwardModel, NoisyData, rescale_model
from .hilbert_scale import ScaleBasis, norm_t
from .inner_solvers import (K_MAX, PATHS, T_MAX_ASYMPTOTIC, T_MAX_TIKHONOV, InnerProblem,
                            solve_inner, t_floor)
from .oracle_lab import build_dense
from .spectral_filters import FilterKind

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ("n", "residual", "t_n", "s_n", "inner_work", "err_s", "err_mu", "err_minus_a",
                 "err_0")


class StopReason(enum.Enum):
    DISCREPANCY = "DISCREPANCY"
    MAX_OUTER = "MAX_OUTER"
    INNER_STALL = "INNER_STALL"
    DIVERGENCE = "DIVERGENCE"

    def __str__(self):
        return self.value


@dataclass
class SolverConfig:
    """Parameters of one inexact Newton run.

    ``tau > 2`` and ``0 < eta < 1`` are always required; with
    ``enforce_tau_eta`` also ``tau * eta > 2``.
    """

    tau: float = 2.5
    eta: float = 0.85
    s: float = 0.0
    kind: FilterKind = FilterKind.TIKHONOV
    max_outer: int = 200
    theta: float = 0.9
    enforce_tau_eta: bool = True
    inner_path: str = "matrix-free"
    k_max: int = K_MAX
    t_max_asymptotic: float = T_MAX_ASYMPTOTIC
    t_max_tikhonov: float = T_MAX_TIKHONOV
    band: float = 0.95
    rescale: bool = False
    divergence_factor: float = 1.0 + 1e-9

    def __post_init__(self):
        self.kind = FilterKind.parse(self.kind)
        if not self.tau > 2:
            raise ConfigError(f"tau must exceed 2, got {self.tau}")
        if not 0 < self.eta < 1:
            raise ConfigError(f"eta must lie in (0, 1), got {self.eta}")
        if self.enforce_tau_eta and not self.tau * self.eta > 2:
            raise ConfigError(f"tau * eta must exceed 2, got {self.tau * self.eta:.6g}")
        if not 0 < self.theta < 1:
            raise ConfigError(f"theta must lie in (0, 1), got {self.theta}")
        if self.max_outer < 0:
            raise ConfigError("max_outer must be nonnegative")
        if self.inner_path not in PATHS:
            raise ConfigError(f"inner_path must be one of {PATHS}, got {self.inner_path!r}")
        if not math.isfinite(self.s):
            raise ConfigError("scale index s must be finite")

    @property
    def t_max(self):
        if self.kind is FilterKind.ASYMPTOTIC:
            return self.t_max_asymptotic
        if self.kind is FilterKind.TIKHONOV:
            return self.t_max_tikhonov
        return None


@dataclass
class TraceRow:
    n: int
    residual: float
    t_n: float = math.nan
    s_n: float = 0.0
    inner_work: int = 0
    err_s: float = math.nan
    err_mu: float = math.nan
    err_minus_a: float = math.nan
    err_0: float = math.nan


@dataclass
class RunTrace:
    """Per-iteration record of a run.

    Row ``n`` holds the residual at ``x_n``, the parameter ``t_n`` chosen
    there (NaN on the last row), ``s_n = t_0 + ... + t_{n-1}`` and, when the
    exact solution is known, error norms of ``x_n``.
    """

    rows: List[TraceRow] = field(default_factory=list)
    delta: float = math.nan
    tau: float = math.nan
    kind: Optional[FilterKind] = None
    stop_reason: Optional[StopReason] = None
    message: str = ""

    @property
    def n_delta(self) -> int:
        return len(self.rows) - 1

    def column(self, name) -> np.ndarray:
        return np.array([getattr(row, name) for row in self.rows], dtype=float)

    @property
    def residuals(self):
        return self.column("residual")

    @property
    def t_values(self):
        """``t_0, ..., t_{n_delta - 1}``."""
        return self.column("t_n")[:-1]

    def to_csv(self, path=None) -> str:
        """Write the trace as CSV with 17 significant digits; returns the text."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for row in self.rows:
            writer.writerow([row.n] + [_fmt(getattr(row, c)) for c in TRACE_COLUMNS[1:]])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, text) -> "RunTrace":
        reader = csv.DictReader(io.StringIO(text))
        if tuple(reader.fieldnames or ()) != TRACE_COLUMNS:
            raise ValueError(f"unexpected trace header {reader.fieldnames}")
        rows = []
        for rec in reader:
            rows.append(TraceRow(int(rec["n"]), *(float(rec[c]) for c in TRACE_COLUMNS[1:4]),
                                 int(float(rec["inner_work"])),
                                 *(float(rec[c]) for c in TRACE_COLUMNS[5:])))
        return cls(rows)


def _fmt(value):
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def solve(model: ForwardModel, basis: ScaleBasis, data: NoisyData, x0, config: SolverConfig,
          x_true=None, mu: Optional[float] = None, a: Optional[float] = None):
    """Run the inexact Newton iteration from ``x0``.

    Parameters
    ----------
    model : ForwardModel
        Forward operator, already scaled so that ``||F'(x) L^{-s}|| < 1``
        unless ``config.rescale`` is set.
    data : NoisyData
        Noisy data and noise level.
    x_true : array_like, optional
        Exact solution; only used to record error norms and to detect
        divergence, never by the iteration itself.
    mu, a : float, optional
        Scale indices for the ``err_mu`` and ``err_minus_a`` trace columns.

    Returns
    -------
    x_out : ndarray
    trace : RunTrace
    """
    x = basis.check(x0, "x0").copy()
    if model.domain_dim != basis.dim:
        raise ConfigError("model and basis dimensions differ")
    if config.rescale:
        model, c = rescale_model(model, basis, config.s, config.theta, x)
        data = data.scaled(c)
    y_delta, delta = np.asarray(data.y_delta, dtype=float), float(data.delta)
    if x_true is not None:
        x_true = basis.check(x_true, "x_true")

    trace = RunTrace(delta=delta, tau=config.tau, kind=config.kind)

    def record(n, residual, s_n):
        row = TraceRow(n, residual, s_n=s_n)
        if x_true is not None:
            e = x - x_true
            row.err_s = norm_t(basis, config.s, e)
            row.err_0 = norm_t(basis, 0.0, e)
            if mu is not None:
                row.err_mu = norm_t(basis, mu, e)
            if a is not None:
                row.err_minus_a = norm_t(basis, -a, e)
        trace.rows.append(row)
        return row

    s_n = 0.0
    for n in range(config.max_outer + 1):
        b = y_delta - model.evaluate(x)
        residual = float(np.linalg.norm(b))
        if not math.isfinite(residual):
            raise NumericalError(f"non-finite residual at outer step {n}")
        row = record(n, residual, s_n)
        if n > 0 and x_true is not None and \
                row.err_s > config.divergence_factor * trace.rows[-2].err_s:
            trace.stop_reason = StopReason.DIVERGENCE
            trace.message = f"err_s increased at step {n}"
            return x, trace
        if residual <= config.tau * delta:
            trace.stop_reason = StopReason.DISCREPANCY
            return x, trace
        if n == config.max_outer:
            break
        problem = InnerProblem(model, basis, x, b, config.s, config.eta, band=config.band)
        try:
            svd = None
            if config.inner_path == "spectral":
                svd = build_dense(model, basis, x, config.s)
            result = solve_inner(problem, config.kind, config.inner_path, svd=svd,
                                 k_max=config.k_max, t_max=config.t_max)
        except (InnerStallError, InnerInfeasibleError) as exc:
            trace.stop_reason = StopReason.INNER_STALL
            trace.message = str(exc)
            logger.info("inner solver stopped at outer step %d: %s", n, exc)
            return x, trace
        row.t_n = result.t_n
        row.inner_work = result.inner_work
        x = x + result.u
        s_n += result.t_n
        logger.debug("step %d: residual %.6g, t_n %.6g", n, residual, result.t_n)
    trace.stop_reason = StopReason.MAX_OUTER
    return x, trace


@dataclass
class TraceReport:
    monotone_ok: bool
    energy_ratio: float
    tn_floor_ok: bool
    residual_contraction: float
    n_delta: int

    @property
    def contraction_ok(self):
        return self.n_delta < 2 or self.residual_contraction < 1


def verify_trace(trace: RunTrace, e0_norm_s: Optional[float] = None, eta: Optional[float] = None,
                 slack: float = 1e-12) -> TraceReport:
    """Check the monotone error decay, energy bound, ``t_n`` floors and residual contraction.

    ``energy_ratio = sum_{n < n_delta} t_n ||y_delta - F(x_n)||^2 / ||e_0||_s^2``;
    ``residual_contraction`` is the largest ratio of consecutive residuals.
    ``eta`` is needed for the ``t_n`` floors of the continuous families.
    """
    if not trace.rows or trace.stop_reason is None:
        raise ValueError("incomplete trace")
    err = trace.column("err_s")
    if np.any(np.isnan(err)):
        raise ValueError("trace lacks err_s; run with x_true")
    if e0_norm_s is None:
        e0_norm_s = err[0]
    monotone = bool(np.all(np.diff(err) <= slack * err[0]))
    res = trace.residuals
    t = trace.t_values
    energy = float(np.sum(t * res[:-1] ** 2) / e0_norm_s ** 2) if t.size else 0.0
    if trace.kind is not None and (eta is not None or trace.kind.discrete_t):
        floor = t_floor(trace.kind, eta if eta is not None else 0.5)
        floor_ok = bool(np.all(t >= floor * (1 - 1e-12)))
    else:
        floor_ok = bool(np.all(t > 0))
    contraction = float(np.max(res[1:] / res[:-1])) if res.size > 1 else 0.0
    return TraceReport(monotone, energy, floor_ok, contraction, trace.n_delta)


@dataclass
class ResidualBoundsReport:
    pre_stop_ok: bool
    stop_ok: bool
    max_backward_ratio: float

    @property
    def passed(self):
        return self.pre_stop_ok and self.stop_ok


def residual_bounds_check(trace: RunTrace, delta: float, tau: float) -> ResidualBoundsReport:
    """Discrepancy sandwich and the largest ratio ``residual_n / residual_{n+1}``."""
    res = trace.residuals
    pre = bool(np.all(res[:-1] > tau * delta))
    stop = bool(res[-1] <= tau * delta)
    ratio = float(np.max(res[:-1] / res[1:])) if res.size > 1 else 1.0
    return ResidualBoundsReport(pre, stop, ratio)
