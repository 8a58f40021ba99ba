"""Hilbert scales generated by a diagonal, strictly positive scale operator.

Elements of the space are plain 1-D float arrays holding coordinates in the
eigenbasis of ``L``; ``L**t`` then acts by scaling coordinate ``k`` with
``ell_k**t``.
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .exceptions import DimensionError


@dataclass(frozen=True, eq=False)
class ScaleBasis:
    """Spectrum of the scale operator ``L``.

    Parameters
    ----------
    eigenvalues : array_like
        Strictly positive eigenvalues, sorted non-decreasing.
    description : str, optional
        Free text label.
    """

    eigenvalues: np.ndarray
    description: str = ""
    _log_eigenvalues: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        ell = np.array(self.eigenvalues, dtype=float, copy=True).reshape(-1)
        if ell.size == 0:
            raise ValueError("a scale basis needs at least one eigenvalue")
        if not np.all(np.isfinite(ell)) or np.any(ell <= 0):
            raise ValueError("scale eigenvalues must be finite and strictly positive")
        if np.any(np.diff(ell) < 0):
            raise ValueError("scale eigenvalues must be sorted non-decreasing")
        ell.setflags(write=False)
        logs = np.log(ell)
        logs.setflags(write=False)
        object.__setattr__(self, "eigenvalues", ell)
        object.__setattr__(self, "_log_eigenvalues", logs)

    @classmethod
    def default(cls, n: int) -> "ScaleBasis":
        """The study default ``ell_k = k`` for ``k = 1..n``."""
        if n < 1:
            raise ValueError(f"dimension must be positive, got {n}")
        return cls(np.arange(1, n + 1, dtype=float), description=f"ell_k = k, N={n}")

    @property
    def dim(self) -> int:
        return self.eigenvalues.size

    @property
    def gamma(self) -> float:
        """Smallest constant with ``||x||**2 <= gamma (Lx, x)``, i.e. ``1/ell_1``."""
        return 1.0 / self.eigenvalues[0]

    def powers(self, t: float) -> np.ndarray:
        """Diagonal of ``L**t``."""
        t = _check_exponent(t)
        if t == 0:
            return np.ones(self.dim)
        return np.exp(t * self._log_eigenvalues)

    def check(self, x, name="x") -> np.ndarray:
        """Return ``x`` as a float array after validating shape and finiteness."""
        x = np.asarray(x, dtype=float)
        if x.ndim != 1 or x.size != self.dim:
            raise DimensionError(
                f"{name} has shape {x.shape}, expected ({self.dim},)")
        if not np.all(np.isfinite(x)):
            raise DimensionError(f"{name} has non-finite entries")
        return x


def _check_exponent(t) -> float:
    t = float(t)
    if not np.isfinite(t):
        raise ValueError(f"scale index must be finite, got {t}")
    return t


def apply_power(basis: ScaleBasis, t: float, x) -> np.ndarray:
    """Apply ``L**t`` to ``x``; negative ``t`` is allowed."""
    x = basis.check(x)
    return basis.powers(t) * x


def norm_t(basis: ScaleBasis, t: float, x) -> float:
    """Hilbert-scale norm ``||x||_t = ||L**t x||``."""
    return float(np.linalg.norm(apply_power(basis, t, x)))


class InterpolationReport(NamedTuple):
    lhs: float
    rhs: float
    holds: bool


def check_interpolation(basis: ScaleBasis, x, p: float, q: float, r: float,
                        rtol: float = 1e-12) -> InterpolationReport:
    """Evaluate both sides of the interpolation inequality.

    ``||x||_q <= ||x||_p**((r-q)/(r-p)) * ||x||_r**((q-p)/(r-p))`` for
    ``p < q < r``. ``holds`` allows a relative slack of ``rtol``.
    """
    p, q, r = (_check_exponent(v) for v in (p, q, r))
    if not p < q < r:
        raise ValueError(f"need p < q < r, got p={p}, q={q}, r={r}")
    x = basis.check(x)
    lhs = norm_t(basis, q, x)
    if lhs == 0.0:
        return InterpolationReport(0.0, 0.0, True)
    # log form avoids overflow of the individual norms for large |p|, |r|
    theta = (q - p) / (r - p)
    log_rhs = (1 - theta) * np.log(norm_t(basis, p, x)) + theta * np.log(norm_t(basis, r, x))
    rhs = float(np.exp(log_rhs))
    return InterpolationReport(lhs, rhs, lhs <= rhs * (1 + rtol))


def embedding_constant(basis: ScaleBasis, q: float, r: float) -> float:
    """Constant ``gamma**(r-q)`` bounding ``||x||_q`` by ``||x||_r`` for ``q < r``."""
    if not q < r:
        raise ValueError(f"need q < r, got q={q}, r={r}")
    return basis.gamma ** (r - q)
