"""Brute-force ground truth built from singular value decompositions.

``A = F'(x) L^{-s}`` is materialized column by column (or read off in closed
form for diagonal models) and decomposed, so that filtered quantities can be
evaluated exactly on the singular values.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError
from .forward_models import DiagonalLinearModel, ForwardModel
from .hilbert_scale import ScaleBasis, norm_t

MAX_DENSE_DIM = 512


class DenseSVD:
    """Thin SVD ``A = U diag(sigma) V^T`` restricted to the numerical rank."""

    def __init__(self, left, singular_values, right, matrix=None):
        self.left = left
        self.singular_values = singular_values
        self.right = right
        self.matrix = matrix

    @classmethod
    def from_matrix(cls, a, rcond=None):
        a = np.asarray(a, dtype=float)
        u, sig, vt = np.linalg.svd(a, full_matrices=False)
        if rcond is None:
            rcond = max(a.shape) * np.finfo(float).eps
        rank = int(np.sum(sig > rcond * sig[0])) if sig.size and sig[0] > 0 else 0
        return cls(u[:, :rank], sig[:rank], vt[:rank].T, a)

    @property
    def rank(self):
        return self.singular_values.size

    @property
    def shape(self):
        return self.left.shape[0], self.right.shape[0]

    def coeffs(self, b):
        """``U^T b``."""
        return self.left.T @ b

    def range_part(self, c):
        """``U c``."""
        return self.left @ c

    def residual_floor(self, b):
        """``||P b||`` with ``P`` the projection onto the complement of the range."""
        return float(np.linalg.norm(b - self.range_part(self.coeffs(b))))

    def lift(self, c):
        """``V c``."""
        return self.right @ c

    def right_coeffs(self, h):
        """``V^T h``."""
        return self.right.T @ h

    def reconstruction_error(self):
        a = self.matrix
        rebuilt = (self.left * self.singular_values) @ self.right.T
        return float(np.linalg.norm(a - rebuilt, 2))


class DiagonalSVD(DenseSVD):
    """Closed-form SVD of a diagonal operator; never forms a matrix."""

    def __init__(self, diagonal):
        d = np.asarray(diagonal, dtype=float)
        self.diagonal = d
        order = np.argsort(-np.abs(d), kind="stable")
        keep = order[np.abs(d[order]) > 0]
        self._index = keep
        self._signs = np.sign(d[keep])
        self._n = d.size
        self.singular_values = np.abs(d[keep])
        self.matrix = None

    @property
    def rank(self):
        return self._index.size

    @property
    def shape(self):
        return self._n, self._n

    def coeffs(self, b):
        return self._signs * np.asarray(b)[self._index]

    def range_part(self, c):
        out = np.zeros(self._n)
        out[self._index] = self._signs * c
        return out

    def lift(self, c):
        out = np.zeros(self._n)
        out[self._index] = c
        return out

    def right_coeffs(self, h):
        return np.asarray(h)[self._index]

    def reconstruction_error(self):
        return 0.0


def dense_matrix(model: ForwardModel, basis: ScaleBasis, x, s: float, max_dim=MAX_DENSE_DIM):
    """Materialize ``F'(x) L^{-s}`` by applying it to the unit vectors."""
    n = basis.dim
    if n > max_dim:
        raise DimensionError(f"dense materialization refused for N={n} > {max_dim}")
    x = basis.check(x)
    w = basis.powers(-s)
    cols = [model.d_apply(x, w[j] * np.eye(1, n, j)[0]) for j in range(n)]
    return np.column_stack(cols)


def build_dense(model: ForwardModel, basis: ScaleBasis, x, s: float, max_dim=MAX_DENSE_DIM):
    """SVD of ``A = F'(x) L^{-s}``.

    Diagonal linear models get a closed-form decomposition at any dimension;
    everything else is materialized densely, which is refused above
    ``max_dim``.
    """
    if isinstance(model, DiagonalLinearModel):
        if model.domain_dim != basis.dim:
            raise DimensionError("model and basis dimensions differ")
        return DiagonalSVD(model.diagonal * basis.powers(-s))
    return DenseSVD.from_matrix(dense_matrix(model, basis, x, s, max_dim))


@dataclass
class NormEquivalenceReport:
    nu: float
    lower_constant: float
    upper_constant: float
    min_ratio: float
    max_ratio: float
    max_violation: float
    tol: float = 1e-9

    @property
    def passed(self):
        return self.max_violation <= self.tol


def check_norm_equivalence(svd: DenseSVD, basis: ScaleBasis, a: float, s: float, nu: float,
                           samples: int = 100, m: float = 1.0, M: float = 1.0, seed: int = 0,
                           tol: float = 1e-9) -> NormEquivalenceReport:
    """Sample the sandwich ``c_lo ||h||_{-nu(a+s)} <= ||(A*A)^{nu/2} h|| <= c_hi ||h||_{-nu(a+s)}``.

    ``c_lo = min(m**nu, M**nu)`` and ``c_hi = max(m**nu, M**nu)`` where ``m, M``
    are the two-sided bounds ``m ||h||_{-a} <= ||F'(x) h|| <= M ||h||_{-a}``.
    Ratios reported are ``||(A*A)^{nu/2} h|| / ||h||_{-nu(a+s)}``.
    """
    if not -1 <= nu <= 1:
        raise ValueError(f"nu must lie in [-1, 1], got {nu}")
    if svd.rank < basis.dim and nu < 0:
        raise ValueError("negative powers need a full-rank operator")
    lo, hi = sorted((m ** nu, M ** nu))
    rng = np.random.default_rng(seed)
    sig_nu = svd.singular_values ** nu
    ratios = []
    worst = 0.0
    for _ in range(samples):
        h = rng.standard_normal(basis.dim)
        mid = float(np.linalg.norm(sig_nu * svd.right_coeffs(h)))
        ref = norm_t(basis, -nu * (a + s), h)
        ratios.append(mid / ref)
        worst = max(worst, (lo * ref - mid) / (lo * ref), (mid - hi * ref) / (hi * ref))
    return NormEquivalenceReport(nu, lo, hi, min(ratios), max(ratios), max(worst, 0.0), tol)


@dataclass
class TaylorProbeReport:
    max_ratio: float
    ratios: np.ndarray


def taylor_remainder_probe(model: ForwardModel, basis: ScaleBasis, x, z, s: float,
                           b_exp: float, beta_exp: float, a: float = 1.0) -> TaylorProbeReport:
    """Empirical lower bound on the Lipschitz-type constant ``K_0``.

    For each pair the linearization remainder ``||F(x) - F(z) - F'(z)(x - z)||``
    is divided by ``gamma**(s beta + b - a) ||x - z||_s**beta ||x - z||_{-a} / (1 + beta)``;
    the largest quotient is reported. ``x`` and ``z`` may be single vectors or
    stacks of vectors (one pair per row). Linear models have an identically
    vanishing remainder and report zero without evaluation. Diagnostic only.
    """
    xs, zs = np.atleast_2d(x), np.atleast_2d(z)
    if xs.shape != zs.shape:
        raise DimensionError("x and z stacks differ in shape")
    if model.is_linear:
        ratios = np.zeros(xs.shape[0])
        return TaylorProbeReport(0.0, ratios)
    const = basis.gamma ** (s * beta_exp + b_exp - a) / (1.0 + beta_exp)
    ratios = []
    for xi, zi in zip(xs, zs):
        d = xi - zi
        remainder = np.linalg.norm(model.evaluate(xi) - model.evaluate(zi) - model.d_apply(zi, d))
        denom = const * norm_t(basis, s, d) ** beta_exp * norm_t(basis, -a, d)
        ratios.append(remainder / denom if denom > 0 else 0.0)
    ratios = np.array(ratios)
    return TaylorProbeReport(float(ratios.max()), ratios)


def sample_pairs(basis: ScaleBasis, center, radius: float, count: int, seed: int = 0, decay: float = 1.0):
    """Random pairs in the ball of given radius around ``center``.

    Directions have coefficients damped by ``ell_k**(-decay)`` so that sampled
    points stay smooth.
    """
    rng = np.random.default_rng(seed)
    damp = basis.powers(-decay)

    def draw():
        v = damp * rng.standard_normal((count, basis.dim))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return center + radius * rng.uniform(0, 1, (count, 1)) * v

    return draw(), draw()
