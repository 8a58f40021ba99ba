"""Forward operators, noisy data and source elements for the test problems.

Two problems are provided:

``diagonal``
    ``F(x) = T x`` with ``T = diag(ell_k**(-a))`` so that ``||T h|| = ||h||_{-a}``.
``hammerstein``
    ``F(x) = B Phi(x)`` with ``B`` the diagonal smoothing operator above and
    ``Phi(x) = x + beta x**3`` acting pointwise on nodal values. Coefficients
    are sine-series coefficients on ``[0, 1]``; nodal values are obtained with
    an orthonormal DST-I.
"""

import abc
import logging
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
import scipy.fft

from .exceptions import DegenerateOperatorError, DimensionError
from .hilbert_scale import ScaleBasis, norm_t

logger = logging.getLogger(__name__)


class ForwardModel(abc.ABC):
    """Nonlinear Frechet differentiable operator between coefficient spaces.

    Subclasses implement :meth:`evaluate`, :meth:`d_apply` and
    :meth:`d_adjoint_apply`. Instances are immutable.
    """

    domain_dim: int
    range_dim: int
    #: radius of the ball around :attr:`reference_solution` on which the
    #: model's two-sided derivative bounds are guaranteed
    domain_ball_radius: float = np.inf
    is_linear: bool = False
    reference_solution: np.ndarray

    @abc.abstractmethod
    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """F(x)."""

    @abc.abstractmethod
    def d_apply(self, x: np.ndarray, h: np.ndarray) -> np.ndarray:
        """F'(x) h."""

    @abc.abstractmethod
    def d_adjoint_apply(self, x: np.ndarray, g: np.ndarray) -> np.ndarray:
        """F'(x)* g."""

    def __call__(self, x):
        return self.evaluate(x)

    def in_domain(self, x) -> bool:
        return True

    def derivative_bound(self, basis: ScaleBasis, s: float) -> Optional[float]:
        """Upper bound on ``||F'(x) L^{-s}||`` over the domain, or None if unknown."""
        return None

    def scaled(self, c: float) -> "ForwardModel":
        """The model ``c F``."""
        return ScaledModel(self, c)

    def _check_domain(self, x, name="x"):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.domain_dim,):
            raise DimensionError(f"{name} has shape {x.shape}, expected ({self.domain_dim},)")
        return x

    def _check_range(self, y, name="g"):
        y = np.asarray(y, dtype=float)
        if y.shape != (self.range_dim,):
            raise DimensionError(f"{name} has shape {y.shape}, expected ({self.range_dim},)")
        return y


class DiagonalLinearModel(ForwardModel):
    """Linear model ``F(x) = diag(d) x``.

    The diagonal ``d`` may contain zeros, which produces a rank-deficient
    operator.
    """

    is_linear = True

    def __init__(self, diagonal, reference_solution=None):
        d = np.array(diagonal, dtype=float).reshape(-1)
        if not np.all(np.isfinite(d)):
            raise ValueError("diagonal must be finite")
        d.setflags(write=False)
        self.diagonal = d
        self.domain_dim = self.range_dim = d.size
        if reference_solution is None:
            reference_solution = smooth_profile(d.size)
        self.reference_solution = self._check_domain(reference_solution).copy()

    def evaluate(self, x):
        return self.diagonal * self._check_domain(x)

    def d_apply(self, x, h):
        return self.diagonal * self._check_domain(h, "h")

    def d_adjoint_apply(self, x, g):
        return self.diagonal * self._check_range(g)

    def derivative_bound(self, basis, s):
        return float(np.max(np.abs(self.diagonal * basis.powers(-s))))

    def scaled(self, c):
        return DiagonalLinearModel(c * self.diagonal, self.reference_solution)

    def __repr__(self):
        return f"DiagonalLinearModel(N={self.domain_dim})"


class HammersteinModel(ForwardModel):
    """``F(x) = B Q* Phi(f) / sqrt(N+1)`` with nodal values ``f = sqrt(N+1) Q x``.

    ``Q`` is the orthonormal DST-I, ``B = diag(smoothing)`` and
    ``Phi(f) = f + beta f**3``. With ``beta = 0`` the model reduces to
    ``diag(smoothing)``.
    """

    def __init__(self, smoothing, beta_cubic, reference_solution=None):
        b = np.array(smoothing, dtype=float).reshape(-1)
        b.setflags(write=False)
        self.smoothing = b
        self.beta_cubic = float(beta_cubic)
        self.domain_dim = self.range_dim = b.size
        self._nodal_scale = np.sqrt(b.size + 1.0)
        if reference_solution is None:
            reference_solution = smooth_profile(b.size)
        self.reference_solution = self._check_domain(reference_solution).copy()
        if self.beta_cubic > 0:
            self.nodal_bound = 1.0 / np.sqrt(3.0 * self.beta_cubic)
            slack = self.nodal_bound - np.max(np.abs(self.nodal_values(self.reference_solution)))
            # |f_i| <= sqrt(N+1) ||h|| for the orthonormal transform
            self.domain_ball_radius = max(slack, 0.0) / self._nodal_scale
        else:
            self.nodal_bound = np.inf

    def nodal_values(self, x):
        return self._nodal_scale * scipy.fft.dst(x, type=1, norm="ortho")

    def _to_coeffs(self, f):
        return scipy.fft.dst(f, type=1, norm="ortho") / self._nodal_scale

    def _phi_prime(self, x):
        f = self.nodal_values(x)
        return 1.0 + 3.0 * self.beta_cubic * f * f

    def evaluate(self, x):
        f = self.nodal_values(self._check_domain(x))
        return self.smoothing * self._to_coeffs(f + self.beta_cubic * f ** 3)

    def d_apply(self, x, h):
        h = self._check_domain(h, "h")
        q_h = scipy.fft.dst(h, type=1, norm="ortho")
        return self.smoothing * scipy.fft.dst(self._phi_prime(self._check_domain(x)) * q_h,
                                              type=1, norm="ortho")

    def d_adjoint_apply(self, x, g):
        q_bg = scipy.fft.dst(self.smoothing * self._check_range(g), type=1, norm="ortho")
        return scipy.fft.dst(self._phi_prime(self._check_domain(x)) * q_bg, type=1, norm="ortho")

    def in_domain(self, x):
        """Whether ``Phi'`` stays within ``[1/2, 2]`` at the nodal values of ``x``."""
        return bool(np.max(np.abs(self.nodal_values(x))) <= self.nodal_bound)

    def derivative_bound(self, basis, s):
        """``max_k |smoothing_k ell_k**(-s)|`` times the largest ``Phi'`` on the domain."""
        peak = 2.0 if self.beta_cubic > 0 else 1.0
        return peak * float(np.max(np.abs(self.smoothing * basis.powers(-s))))

    def scaled(self, c):
        return HammersteinModel(c * self.smoothing, self.beta_cubic, self.reference_solution)

    def __repr__(self):
        return f"HammersteinModel(N={self.domain_dim}, beta={self.beta_cubic})"


class ScaledModel(ForwardModel):
    """``c F`` for a generic model ``F``."""

    def __init__(self, base: ForwardModel, c: float):
        self.base = base
        self.c = float(c)
        self.domain_dim = base.domain_dim
        self.range_dim = base.range_dim
        self.domain_ball_radius = base.domain_ball_radius
        self.is_linear = base.is_linear
        self.reference_solution = base.reference_solution

    def evaluate(self, x):
        return self.c * self.base.evaluate(x)

    def d_apply(self, x, h):
        return self.c * self.base.d_apply(x, h)

    def d_adjoint_apply(self, x, g):
        return self.c * self.base.d_adjoint_apply(x, g)

    def in_domain(self, x):
        return self.base.in_domain(x)

    def derivative_bound(self, basis, s):
        bound = self.base.derivative_bound(basis, s)
        return None if bound is None else abs(self.c) * bound

    def scaled(self, c):
        return ScaledModel(self.base, self.c * c)


def smooth_profile(n: int, amplitude: float = 1.0) -> np.ndarray:
    """Sine coefficients of ``amplitude * 4 s (1 - s)`` on ``[0, 1]``.

    The basis is ``sqrt(2) sin(k pi s)``, k = 1..n; coefficients are the exact
    continuous ones, ``8 sqrt(2) amplitude (1 - (-1)**k) / (k pi)**3``.
    """
    k = np.arange(1, n + 1, dtype=float)
    return amplitude * 8.0 * np.sqrt(2.0) * (1.0 - (-1.0) ** k) / (k * np.pi) ** 3


def _check_basis(n, basis):
    if basis is None:
        return ScaleBasis.default(n)
    if basis.dim != n:
        raise DimensionError(f"basis has dimension {basis.dim}, model needs {n}")
    return basis


def make_diagonal_linear_model(n: int, a: float, basis: Optional[ScaleBasis] = None):
    """Diagonal operator with ``||T h|| = ||h||_{-a}`` exactly.

    Singular values are ``ell_k**(-a)``; with the default scale ``ell_k = k``.
    """
    if a < 0:
        raise ValueError(f"smoothing index a must be nonnegative, got {a}")
    basis = _check_basis(n, basis)
    return DiagonalLinearModel(basis.powers(-a))


def make_hammerstein_model(n: int, beta_cubic: float = 0.1, a: float = 1.0,
                           basis: Optional[ScaleBasis] = None):
    """Hammerstein operator ``B Phi`` with a cubic pointwise nonlinearity."""
    if beta_cubic < 0:
        raise ValueError(f"beta_cubic must be nonnegative, got {beta_cubic}")
    if a < 0:
        raise ValueError(f"smoothing index a must be nonnegative, got {a}")
    basis = _check_basis(n, basis)
    return HammersteinModel(basis.powers(-a), beta_cubic)


PROBLEMS = ("diagonal", "hammerstein")


def make_problem(name: str, n: int, a: float = 1.0, beta_cubic: float = 0.1,
                 basis: Optional[ScaleBasis] = None) -> ForwardModel:
    """Build a test problem by its CLI name."""
    if name == "diagonal":
        return make_diagonal_linear_model(n, a, basis)
    if name == "hammerstein":
        return make_hammerstein_model(n, beta_cubic, a, basis)
    raise ValueError(f"unknown problem {name!r}; expected one of {', '.join(PROBLEMS)}")


@dataclass(frozen=True)
class NoisyData:
    y_delta: np.ndarray
    delta: float
    seed: Optional[int] = None
    y_exact: Optional[np.ndarray] = None

    def scaled(self, c: float) -> "NoisyData":
        """Data for the model ``c F``; the noise level scales with it."""
        y = None if self.y_exact is None else c * self.y_exact
        return NoisyData(c * self.y_delta, abs(c) * self.delta, self.seed, y)


def make_noisy_data(y, delta: float, seed: Optional[int] = 0, direction=None) -> NoisyData:
    """Perturb ``y`` by exactly ``delta`` in a seeded random unit direction.

    Parameters
    ----------
    y : array_like
        Exact data.
    delta : float
        Noise level; ``||y_delta - y|| == delta`` to round-off.
    seed : int, optional
        Seed for the direction.
    direction : array_like, optional
        Use this (normalized) direction instead of a random one.
    """
    if delta < 0:
        raise ValueError(f"noise level must be nonnegative, got {delta}")
    y = np.asarray(y, dtype=float)
    if direction is None:
        u = np.random.default_rng(seed).standard_normal(y.shape)
    else:
        u = np.array(direction, dtype=float)
        if u.shape != y.shape:
            raise DimensionError("noise direction must match the data shape")
    nrm = np.linalg.norm(u)
    if nrm == 0:
        raise ValueError("noise direction must be nonzero")
    return NoisyData(y + delta * (u / nrm), float(delta), seed, y.copy())


@dataclass(frozen=True)
class SourceSpec:
    """Smoothness ``mu`` and size ``omega_norm = ||x0 - x_true||_mu`` of the initial error."""

    mu: float
    omega_norm: float
    seed: int = 0


def source_coefficients(basis: ScaleBasis, mu: float, seed: int = 0, eps_tail: float = 0.05):
    """Unnormalized initial-error coefficients ``sign_k ell_k**(-mu-1/2-eps_tail)``."""
    signs = np.random.default_rng(seed).choice([-1.0, 1.0], size=basis.dim)
    return signs * basis.powers(-mu - 0.5 - eps_tail)


def make_source_solution(model: ForwardModel, basis: ScaleBasis, spec: SourceSpec, s: float,
                         window=None, eps_tail: float = 0.05):
    """Exact solution and an initial guess with prescribed smoothness.

    ``x_true`` is the model's reference solution and ``x0 = x_true + e0`` where
    ``e0`` has power-law coefficients normalized to ``||e0||_mu = omega_norm``.

    Parameters
    ----------
    window : (float, float), optional
        Admissible open-closed interval ``(lo, hi]`` for ``mu``; defaults to
        ``(s, inf)``.

    Returns
    -------
    x_true, x0 : ndarray
    """
    lo, hi = (s, np.inf) if window is None else window
    if not lo < spec.mu <= hi:
        raise ValueError(f"mu={spec.mu} outside the admissible window ({lo}, {hi}]")
    if not spec.omega_norm > 0:
        raise ValueError("omega_norm must be positive")
    if model.domain_dim != basis.dim:
        raise DimensionError("model and basis dimensions differ")
    c = source_coefficients(basis, spec.mu, spec.seed, eps_tail)
    e0 = c * (spec.omega_norm / norm_t(basis, spec.mu, c))
    x_true = model.reference_solution.copy()
    return x_true, x_true + e0


class NormEstimate(NamedTuple):
    value: float
    iterations: int
    converged: bool


def estimate_scaled_norm(model: ForwardModel, basis: ScaleBasis, s: float, x,
                         max_iter: int = 200, tol: float = 1e-10, seed: int = 0) -> NormEstimate:
    """Power iteration for ``||F'(x) L^{-s}||``.

    Iterates ``v <- A*A v / ||A*A v||`` with ``A = F'(x) L^{-s}`` and reports
    ``||A v||``. A warning is issued if the relative change does not drop
    below ``tol`` within ``max_iter`` iterations; the last estimate is still
    returned.
    """
    x = basis.check(x)
    w = basis.powers(-s)
    v = np.random.default_rng(seed).standard_normal(basis.dim)
    v /= np.linalg.norm(v)
    est = 0.0
    for it in range(1, max_iter + 1):
        av = model.d_apply(x, w * v)
        new = float(np.linalg.norm(av))
        if new == 0.0:
            return NormEstimate(0.0, it, True)
        v = w * model.d_adjoint_apply(x, av)
        v /= np.linalg.norm(v)
        if abs(new - est) <= tol * new:
            return NormEstimate(new, it, True)
        est = new
    warnings.warn(f"power iteration did not converge in {max_iter} steps", RuntimeWarning)
    return NormEstimate(est, max_iter, False)


def rescale_model(model: ForwardModel, basis: ScaleBasis, s: float, theta: float = 0.9, x=None,
                  uniform: bool = False):
    """Rescale ``F`` so that ``||F'(x) L^{-s}|| = theta``.

    Returns the scaled model and the factor ``c``; data and noise level must be
    multiplied by the same ``c`` (see :meth:`NoisyData.scaled`).
    ``x`` defaults to the model's reference solution. With ``uniform`` the
    model's :meth:`~ForwardModel.derivative_bound` is used instead, so that
    the bound holds on the whole domain; models without one fall back to the
    estimate at ``x``.
    """
    if not 0 < theta < 1:
        raise ValueError(f"theta must lie in (0, 1), got {theta}")
    if x is None:
        x = model.reference_solution
    est = model.derivative_bound(basis, s) if uniform else None
    if est is None:
        est = estimate_scaled_norm(model, basis, s, x).value
    if est == 0:
        raise DegenerateOperatorError("F'(x) L^{-s} vanishes; cannot rescale")
    c = theta / est
    logger.debug("rescaling %r by %.6g", model, c)
    return model.scaled(c), c


def adjoint_mismatch(model: ForwardModel, x, h, g) -> float:
    """Relative mismatch ``|<F'h, g> - <h, F'* g>|`` of the adjoint pair."""
    fh = model.d_apply(x, h)
    fg = model.d_adjoint_apply(x, g)
    lhs, rhs = float(fh @ g), float(h @ fg)
    scale = max(np.linalg.norm(fh) * np.linalg.norm(g), np.linalg.norm(h) * np.linalg.norm(fg))
    return abs(lhs - rhs) / scale if scale > 0 else abs(lhs - rhs)


def derivative_errors(model: ForwardModel, x, h, eps_list=(1e-3, 1e-4, 1e-5, 1e-6, 1e-7)):
    """One-sided difference errors ``||(F(x+eps h) - F(x))/eps - F'(x) h||``.

    Returns the errors and the fitted log-log slope over ``eps_list``.
    """
    eps = np.asarray(eps_list, dtype=float)
    fx = model.evaluate(x)
    dh = model.d_apply(x, h)
    errs = np.array([np.linalg.norm((model.evaluate(x + e * h) - fx) / e - dh) for e in eps])
    positive = errs > 0
    if positive.sum() < 2:
        return errs, np.nan
    slope = np.polyfit(np.log(eps[positive]), np.log(errs[positive]), 1)[0]
    return errs, float(slope)
