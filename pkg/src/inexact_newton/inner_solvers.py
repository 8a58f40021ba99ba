"""Inner schemes producing the Newton increment from the frozen linearization.

All solvers work in the coordinates ``w = L^s u`` where the linearized
operator becomes ``A = F'(x_n) L^{-s}`` with ``||A|| <= theta < 1``; the
increment is returned as ``u = L^{-s} w``.

The regularization parameter ``t_n`` is the smallest ``t`` whose linearized
residual ``||b - A w(t)||`` drops to ``eta ||b||``. Continuous families locate
that crossing by bisection to relative precision ``T_RTOL``; the accepted
residual then lies in ``[band * eta, eta] * ||b||``.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import LinearOperator, cg

from .exceptions import ConfigError, InnerInfeasibleError, InnerStallError, NumericalError
from .forward_models import DiagonalLinearModel, ForwardModel
from .hilbert_scale import ScaleBasis
from .oracle_lab import MAX_DENSE_DIM, DenseSVD, build_dense, dense_matrix
from .spectral_filters import FilterKind, g as filter_g, r as filter_r

logger = logging.getLogger(__name__)

K_MAX = 100_000
T_MAX_ASYMPTOTIC = 1e6
T_MAX_TIKHONOV = 1e12
LINEAR_RTOL = 1e-10
BAND = 0.95
T_RTOL = 1e-10


@dataclass
class InnerProblem:
    """Linearized equation ``F'(x_n) u = b`` with ``b = y_delta - F(x_n)``.

    ``scaled_norm`` is an optional cached estimate of ``||F'(x_n) L^{-s}||``;
    when given it must be below one.
    """

    model: ForwardModel
    basis: ScaleBasis
    x_n: np.ndarray
    residual_rhs: np.ndarray
    s: float
    eta: float
    scaled_norm: Optional[float] = None
    band: float = BAND

    def __post_init__(self):
        self.x_n = self.basis.check(self.x_n, "x_n")
        self.residual_rhs = np.asarray(self.residual_rhs, dtype=float)
        if not 0 < self.eta < 1:
            raise ConfigError(f"eta must lie in (0, 1), got {self.eta}")
        if not 0 < self.band <= 1:
            raise ConfigError(f"band factor must lie in (0, 1], got {self.band}")
        if not self.rhs_norm > 0:
            raise ConfigError("inner problem needs a nonzero right-hand side")
        if self.scaled_norm is not None and self.scaled_norm >= 1:
            raise ConfigError(f"||F'(x_n) L^-s|| = {self.scaled_norm:.6g} must be below 1")

    @property
    def rhs_norm(self):
        return float(np.linalg.norm(self.residual_rhs))

    @property
    def upper(self):
        return self.eta * self.rhs_norm

    @property
    def lower(self):
        return self.band * self.eta * self.rhs_norm

    @property
    def dense_ok(self):
        return isinstance(self.model, DiagonalLinearModel) or self.basis.dim <= MAX_DENSE_DIM


@dataclass
class InnerResult:
    """Accepted increment and the record of how ``t_n`` was selected.

    ``t_history`` and ``residual_history`` list the evaluated parameters and
    their linearized residual norms in increasing ``t``; ``t = 0`` with
    ``||b||`` is always included.
    """

    u: np.ndarray
    t_n: float
    final_residual_norm: float
    inner_work: int
    kind: FilterKind
    residual_history: np.ndarray
    t_history: np.ndarray
    path: str = "matrix-free"
    extra: dict = field(default_factory=dict)

    def residual_before(self):
        """Residual norm at ``t_n - 1`` for the discrete families."""
        idx = np.flatnonzero(self.t_history == self.t_n - 1)
        return float(self.residual_history[idx[0]]) if idx.size else np.nan


def t_floor(kind: FilterKind, eta: float) -> float:
    """Lower bound on ``t_n`` valid whenever ``||A_n|| <= 1``."""
    kind = FilterKind.parse(kind)
    if kind.discrete_t:
        return 1.0
    if kind is FilterKind.ASYMPTOTIC:
        return math.log(1.0 / eta)
    return 1.0 / eta - 1.0


class _Linearization:
    """``A = F'(x) L^{-s}`` with an application counter."""

    def __init__(self, p: InnerProblem):
        self.model = p.model
        self.x = p.x_n
        self.basis = p.basis
        self.s = p.s
        self.weights = p.basis.powers(-p.s)
        self.matrix = None
        self.work = 0

    def materialize(self):
        if self.matrix is None:
            self.matrix = dense_matrix(self.model, self.basis, self.x, self.s)
            self.work += self.basis.dim
        return self.matrix

    def apply(self, w):
        self.work += 1
        if self.matrix is not None:
            return self.matrix @ w
        return self.model.d_apply(self.x, self.weights * w)

    def adjoint(self, z):
        self.work += 1
        if self.matrix is not None:
            return self.matrix.T @ z
        return self.weights * self.model.d_adjoint_apply(self.x, z)

    def gram_operator(self, shift):
        """``shift I + A*A`` as a scipy LinearOperator."""
        n = self.basis.dim
        return LinearOperator((n, n), matvec=lambda v: shift * v + self.adjoint(self.apply(v)),
                              dtype=float)


def _result(p, kind, w, t, lin_or_work, ts, phis, path, **extra):
    order = np.argsort(ts, kind="stable")
    ts = np.concatenate([[0.0], np.asarray(ts, dtype=float)[order]])
    phis = np.concatenate([[p.rhs_norm], np.asarray(phis, dtype=float)[order]])
    work = lin_or_work.work if isinstance(lin_or_work, _Linearization) else int(lin_or_work)
    u = p.basis.powers(-p.s) * w
    if not np.all(np.isfinite(u)):
        raise NumericalError("inner increment has non-finite entries")
    final = float(phis[np.flatnonzero(ts == t)[-1]])
    return InnerResult(u, float(t), final, work, kind, phis, ts, path, dict(extra))


def _check_dense_flag(p, dense):
    if dense is None:
        return p.basis.dim <= MAX_DENSE_DIM
    return bool(dense)


def landweber_inner(p: InnerProblem, k_max: int = K_MAX) -> InnerResult:
    """Landweber steps ``w_k = w_{k-1} + A*(b - A w_{k-1})`` until the inner tolerance holds."""
    if k_max < 1:
        raise ConfigError("k_max must be at least 1")
    lin = _Linearization(p)
    b = p.residual_rhs
    w = np.zeros(p.basis.dim)
    z = b
    phis = []
    for k in range(1, k_max + 1):
        w = w + lin.adjoint(z)
        z = b - lin.apply(w)
        phis.append(float(np.linalg.norm(z)))
        if phis[-1] <= p.upper:
            return _result(p, FilterKind.LANDWEBER, w, k, lin, np.arange(1, k + 1), phis,
                           "matrix-free")
    raise InnerStallError(f"Landweber inner iteration did not reach eta ||b|| in {k_max} steps",
                          best=p.basis.powers(-p.s) * w, residual=phis[-1])


def _spd_solver(lin: _Linearization, shift: float, dense: bool):
    """Return ``solve(rhs)`` for ``(shift I + A*A) v = rhs``."""
    n = lin.basis.dim
    if dense:
        a = lin.materialize()
        factor = scipy.linalg.cho_factor(a.T @ a + shift * np.eye(n))
        return lambda rhs: scipy.linalg.cho_solve(factor, rhs)
    op = lin.gram_operator(shift)

    def solve(rhs):
        v, info = cg(op, rhs, rtol=LINEAR_RTOL, atol=0.0, maxiter=max(20 * n, 1000))
        if info != 0:
            raise NumericalError(f"CG failed to converge (info={info})")
        return v

    return solve


def implicit_inner(p: InnerProblem, k_max: int = K_MAX, dense: Optional[bool] = None) -> InnerResult:
    """Implicit iteration ``w_k = w_{k-1} + (I + A*A)^{-1} A*(b - A w_{k-1})``.

    In ``u`` coordinates each step solves ``(L^{2s} + T*T) d = T* z``. The
    system is factorized once densely when ``N <= 512`` (or ``dense=True``),
    otherwise solved by conjugate gradients per step.
    """
    if k_max < 1:
        raise ConfigError("k_max must be at least 1")
    dense = _check_dense_flag(p, dense)
    lin = _Linearization(p)
    solve = _spd_solver(lin, 1.0, dense)
    b = p.residual_rhs
    w = np.zeros(p.basis.dim)
    z = b
    phis = []
    for k in range(1, k_max + 1):
        w = w + solve(lin.adjoint(z))
        z = b - lin.apply(w)
        phis.append(float(np.linalg.norm(z)))
        if phis[-1] <= p.upper:
            return _result(p, FilterKind.IMPLICIT, w, k, lin, np.arange(1, k + 1), phis,
                           "matrix-free", dense=dense)
    raise InnerStallError(f"implicit inner iteration did not reach eta ||b|| in {k_max} steps",
                          best=p.basis.powers(-p.s) * w, residual=phis[-1])


def band_search(phi, upper: float, lower: float, t_max: float, t_rtol: float = T_RTOL,
                max_bisect: int = 200):
    """Smallest ``t`` with ``phi(t) <= upper`` for non-increasing ``phi``.

    Brackets geometrically from ``t = 1`` (doubling or halving) and then
    bisects until the bracket is ``t_rtol``-relatively narrow. The returned
    ``t`` satisfies ``phi(t) <= upper``; ``lower <= phi(t)`` holds unless
    ``phi`` jumps across the band. Returns ``(t, evaluated)`` where
    ``evaluated`` maps every probed ``t`` to ``phi(t)``.
    """
    seen = {}

    def ev(t):
        seen[t] = float(phi(t))
        return seen[t]

    t = 1.0
    if ev(t) > upper:
        lo = t
        while True:
            t *= 2.0
            if t > t_max:
                raise InnerStallError(
                    f"residual {seen[lo]:.6g} still above {upper:.6g} at t={lo:.6g} "
                    f"(t_max={t_max:.3g})", residual=seen[lo])
            if ev(t) <= upper:
                break
            lo = t
        hi = t
    else:
        hi = t
        while True:
            t *= 0.5
            if ev(t) > upper:
                break
            hi = t
        lo = t
    for _ in range(max_bisect):
        if hi - lo <= t_rtol * hi:
            break
        mid = 0.5 * (lo + hi)
        if ev(mid) > upper:
            lo = mid
        else:
            hi = mid
    if seen[hi] < lower:
        logger.debug("band search: residual %.6g below band [%.6g, %.6g] at t=%.6g",
                     seen[hi], lower, upper, hi)
    return hi, seen


def integer_search(phi, target: float, k_max: int):
    """Smallest integer ``k >= 1`` with ``phi(k) <= target`` for non-increasing ``phi``."""
    seen = {}

    def ev(k):
        seen[k] = float(phi(k))
        return seen[k]

    if ev(1) <= target:
        return 1, seen
    lo, hi = 1, 2
    while ev(hi) > target:
        if hi >= k_max:
            raise InnerStallError(f"residual still above {target:.6g} after {k_max} steps",
                                  residual=seen[hi])
        lo, hi = hi, min(2 * hi, k_max)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ev(mid) > target:
            lo = mid
        else:
            hi = mid
    return hi, seen


def _items(seen):
    ts = np.array(list(seen.keys()), dtype=float)
    return ts, np.array([seen[t] for t in seen], dtype=float)


def tikhonov_inner(p: InnerProblem, t_max: float = T_MAX_TIKHONOV,
                   dense: Optional[bool] = None) -> InnerResult:
    """Tikhonov increment ``u(t) = (t^{-1} L^{2s} + T*T)^{-1} T* b`` with ``t`` chosen by band search.

    Each residual evaluation is one SPD solve: dense Cholesky when
    ``N <= 512`` (or ``dense=True``), conjugate gradients otherwise.
    """
    dense = _check_dense_flag(p, dense)
    lin = _Linearization(p)
    b = p.residual_rhs
    atb = lin.adjoint(b)
    if dense:
        a = lin.materialize()
        gram = a.T @ a
        eye = np.eye(p.basis.dim)
    states = {}

    def phi(t):
        if dense:
            try:
                factor = scipy.linalg.cho_factor(gram + eye / t)
            except np.linalg.LinAlgError as exc:
                raise NumericalError(f"Cholesky factorization failed at t={t:.6g}") from exc
            w = scipy.linalg.cho_solve(factor, atb)
        else:
            w, info = cg(lin.gram_operator(1.0 / t), atb, rtol=LINEAR_RTOL, atol=0.0,
                         maxiter=max(20 * p.basis.dim, 1000))
            if info != 0:
                raise NumericalError(f"CG failed at t={t:.6g} (info={info})")
        states[t] = w
        return np.linalg.norm(b - lin.apply(w))

    t, seen = band_search(phi, p.upper, p.lower, t_max)
    ts, phis = _items(seen)
    return _result(p, FilterKind.TIKHONOV, states[t], t, lin, ts, phis, "matrix-free", dense=dense)


class _Flow:
    """Gradient flow ``w' = A*(b - A w)``, ``w(0) = 0``, integrated on demand.

    Integration proceeds in segments ending at the requested times; earlier
    times are read from the dense output of the covering segment.
    """

    def __init__(self, lin, b, rtol, atol):
        self.lin = lin
        self.b = b
        self.rtol = rtol
        self.atol = atol
        self.nodes = {0.0: np.zeros(lin.basis.dim)}
        self.segments = []
        self.t_end = 0.0
        self.nfev = 0

    def _rhs(self, t, w):
        return self.lin.adjoint(self.b - self.lin.apply(w))

    def state(self, t):
        if t in self.nodes:
            return self.nodes[t]
        if t > self.t_end:
            sol = solve_ivp(self._rhs, (self.t_end, t), self.nodes[self.t_end], method="RK45",
                            rtol=self.rtol, atol=self.atol, dense_output=True)
            if not sol.success:
                raise NumericalError(f"ODE integration failed: {sol.message}")
            self.nfev += sol.nfev
            self.segments.append((self.t_end, t, sol.sol))
            self.t_end = t
            self.nodes[t] = sol.y[:, -1]
            return self.nodes[t]
        for t0, t1, dense in self.segments:
            if t0 <= t <= t1:
                return dense(t)
        raise AssertionError(t)


def asymptotic_inner(p: InnerProblem, t_max: float = T_MAX_ASYMPTOTIC, method: str = "auto",
                     svd: Optional[DenseSVD] = None, rtol: float = 1e-8) -> InnerResult:
    """Asymptotic regularization: ``u(t)`` solves ``u' = L^{-2s} T*(b - T u)``, ``u(0) = 0``.

    ``method="spectral"`` evaluates ``u(t)`` exactly on the singular values of
    ``A``; ``method="integrator"`` integrates the flow matrix-free with an
    embedded Runge-Kutta 4(5) pair and reads intermediate times from its
    dense output. ``"auto"`` picks the spectral route whenever a dense or
    closed-form SVD is available.
    """
    if method == "auto":
        method = "spectral" if (svd is not None or p.dense_ok) else "integrator"
    if method == "spectral":
        return spectral_inner(p, FilterKind.ASYMPTOTIC, svd, t_max=t_max)
    if method != "integrator":
        raise ValueError(f"unknown method {method!r}")
    lin = _Linearization(p)
    b = p.residual_rhs
    scale = float(np.linalg.norm(lin.adjoint(b)))
    flow = _Flow(lin, b, rtol, atol=1e-6 * rtol * max(scale, np.finfo(float).tiny))
    t, seen = band_search(lambda t: np.linalg.norm(b - lin.apply(flow.state(t))),
                          p.upper, p.lower, t_max)
    ts, phis = _items(seen)
    return _result(p, FilterKind.ASYMPTOTIC, flow.state(t), t, lin, ts, phis, "integrator",
                   nfev=flow.nfev)


def spectral_inner(p: InnerProblem, kind, svd: Optional[DenseSVD] = None, k_max: int = K_MAX,
                   t_max: Optional[float] = None) -> InnerResult:
    """Exact evaluation of ``u_n(t) = L^{-s} g_t(A*A) A* b`` on the singular values of ``A``.

    The linearized residual is
    ``sqrt(sum_i r_t(sigma_i^2)^2 <b, u_i>^2 + ||P b||^2)`` with ``P`` the
    projection onto the complement of the range of ``A``. Discrete families
    use an integer search, continuous ones the same band search as the
    matrix-free solvers.

    Raises
    ------
    InnerInfeasibleError
        If ``||P b|| >= eta ||b||``, so that no ``t`` meets the tolerance.
    """
    kind = FilterKind.parse(kind)
    work = 0
    if svd is None:
        svd = build_dense(p.model, p.basis, p.x_n, p.s)
        work = 0 if isinstance(p.model, DiagonalLinearModel) else p.basis.dim
    b = p.residual_rhs
    beta = svd.coeffs(b)
    sig = svd.singular_values
    lam = np.minimum(sig * sig, 1.0)
    floor = svd.residual_floor(b)
    if floor >= p.upper:
        raise InnerInfeasibleError(
            f"residual floor {floor:.6g} >= eta ||b|| = {p.upper:.6g}; t_n undefined",
            floor=floor, target=p.upper)
    if np.any(sig > 1):
        raise ConfigError(f"||A_n|| = {sig.max():.6g} exceeds 1; rescale the model")

    def phi(t):
        return math.sqrt(float(np.sum((filter_r(kind, t, lam) * beta) ** 2)) + floor * floor)

    if kind.discrete_t:
        t, seen = integer_search(phi, p.upper, k_max)
        if t > 1 and (t - 1) not in seen:
            seen[t - 1] = phi(t - 1)
    else:
        if t_max is None:
            t_max = T_MAX_ASYMPTOTIC if kind is FilterKind.ASYMPTOTIC else T_MAX_TIKHONOV
        t, seen = band_search(phi, p.upper, p.lower, t_max)
    w = svd.lift(filter_g(kind, t, lam) * sig * beta)
    ts, phis = _items(seen)
    return _result(p, kind, w, t, work, ts, phis, "spectral", floor=floor)


PATHS = ("matrix-free", "spectral")


def solve_inner(p: InnerProblem, kind, path: str = "matrix-free", svd: Optional[DenseSVD] = None,
                k_max: int = K_MAX, t_max: Optional[float] = None) -> InnerResult:
    """Dispatch to the solver for ``kind`` along the requested path.

    On the matrix-free path the asymptotic flow is integrated numerically.
    """
    kind = FilterKind.parse(kind)
    if path == "spectral":
        return spectral_inner(p, kind, svd, k_max=k_max, t_max=t_max)
    if path != "matrix-free":
        raise ValueError(f"unknown inner path {path!r}; expected one of {PATHS}")
    if kind is FilterKind.LANDWEBER:
        return landweber_inner(p, k_max)
    if kind is FilterKind.IMPLICIT:
        return implicit_inner(p, k_max)
    if kind is FilterKind.ASYMPTOTIC:
        return asymptotic_inner(p, t_max or T_MAX_ASYMPTOTIC, method="integrator")
    return tikhonov_inner(p, t_max or T_MAX_TIKHONOV)
