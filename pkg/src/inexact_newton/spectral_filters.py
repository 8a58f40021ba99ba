"""Spectral filter functions of the four inner schemes.

Each scheme regularizes a linear equation ``A u = b`` through
``u = g_t(A*A) A* b``; the matching residual function
``r_t(lam) = 1 - lam * g_t(lam)`` gives ``b - A u = r_t(AA*) b``.

=============  ==============================  ====================
kind           g_t(lam)                        r_t(lam)
=============  ==============================  ====================
LANDWEBER      sum_{j<[t]} (1-lam)**j          (1-lam)**[t]
IMPLICIT       sum_{1<=j<=[t]} (1+lam)**(-j)   (1+lam)**(-[t])
ASYMPTOTIC     (1 - exp(-t lam)) / lam         exp(-t lam)
TIKHONOV       (1/t + lam)**(-1)               (1 + t lam)**(-1)
=============  ==============================  ====================

``[t]`` is the floor of ``t``. All closed forms are evaluated through
``expm1``/``log1p`` so that ``g`` stays accurate as ``lam -> 0``.
"""

import enum
from dataclasses import dataclass

import numpy as np


class FilterKind(enum.Enum):
    LANDWEBER = "landweber"
    IMPLICIT = "implicit"
    ASYMPTOTIC = "asymptotic"
    TIKHONOV = "tikhonov"

    @property
    def discrete_t(self) -> bool:
        """Whether the parameter is an iteration count (floored)."""
        return self in (FilterKind.LANDWEBER, FilterKind.IMPLICIT)

    @classmethod
    def parse(cls, value) -> "FilterKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            names = " | ".join(k.value for k in cls)
            raise ValueError(f"unknown method {value!r}; expected {names}") from None

    def __str__(self):
        return self.value


def _check_args(t, lam):
    t = float(t)
    if not t > 0 or not np.isfinite(t):
        raise ValueError(f"filter parameter t must be positive and finite, got {t}")
    lam = np.asarray(lam, dtype=float)
    if np.any(~np.isfinite(lam)) or np.any(lam < 0) or np.any(lam > 1):
        raise ValueError("lambda must lie in [0, 1]")
    return t, lam


def _log_residual(kind, t, lam):
    """``log r_t(lam)``, with ``-inf`` where ``r_t`` vanishes."""
    if kind.discrete_t and np.floor(t) == 0:
        return np.zeros_like(lam)
    with np.errstate(divide="ignore"):
        if kind is FilterKind.LANDWEBER:
            return np.floor(t) * np.log1p(-lam)
        if kind is FilterKind.IMPLICIT:
            return -np.floor(t) * np.log1p(lam)
        if kind is FilterKind.ASYMPTOTIC:
            return -t * lam
    raise AssertionError(kind)


def g(kind: FilterKind, t: float, lam):
    """Filter function ``g_t(lam)``; vectorized over ``lam``."""
    kind = FilterKind.parse(kind)
    t, lam = _check_args(t, lam)
    if kind is FilterKind.TIKHONOV:
        return t / (1.0 + t * lam)
    limit = np.floor(t) if kind.discrete_t else t
    one_minus_r = 0.0 - np.expm1(_log_residual(kind, t, lam))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(lam > 0, one_minus_r / np.where(lam > 0, lam, 1.0), limit)
    return out if out.ndim else float(out)


def r(kind: FilterKind, t: float, lam):
    """Residual function ``r_t(lam) = 1 - lam g_t(lam)``; vectorized over ``lam``."""
    kind = FilterKind.parse(kind)
    t, lam = _check_args(t, lam)
    if kind is FilterKind.TIKHONOV:
        out = 1.0 / (1.0 + t * lam)
    else:
        out = np.exp(_log_residual(kind, t, lam))
    return out if np.ndim(out) else float(out)


def _filter_table(kind, t, lam):
    """``r_{t_k}(lam)`` and ``g_{t_k}(lam)`` as ``(len(t), len(lam))`` arrays; no argument checks."""
    tc = t[:, None]
    if kind is FilterKind.TIKHONOV:
        res = 1.0 / (1.0 + tc * lam)
        return res, tc * res
    limit = np.floor(tc) if kind.discrete_t else tc
    with np.errstate(divide="ignore", invalid="ignore"):
        if kind is FilterKind.LANDWEBER:
            log_r = limit * np.log1p(-lam)
        elif kind is FilterKind.IMPLICIT:
            log_r = -limit * np.log1p(lam)
        else:
            log_r = -tc * lam
        log_r = np.where(limit == 0, 0.0, log_r)
        one_minus_r = 0.0 - np.expm1(log_r)
        gs = np.where(lam > 0, one_minus_r / np.where(lam > 0, lam, 1.0), limit)
    return np.exp(log_r), gs


@dataclass
class FilterCheckReport:
    """Worst slack of the three product/sum inequalities over a lambda grid.

    Slack is ``(lhs - rhs) / max(1, rhs)``; an inequality passes when its slack
    is at most ``tol``.
    """

    kind: FilterKind
    slack_g1: float
    slack_g2: float
    slack_g3: float
    tol: float = 1e-10

    @property
    def max_slack(self) -> float:
        return max(self.slack_g1, self.slack_g2, self.slack_g3)

    @property
    def passed(self) -> bool:
        return self.max_slack <= self.tol


def cumulative_times(t_seq) -> np.ndarray:
    """``s_0 = 0, s_n = t_0 + ... + t_{n-1}``."""
    return np.concatenate([[0.0], np.cumsum(np.asarray(t_seq, dtype=float))])


def check_filter_inequalities(kind, t_seq, nu, lambda_grid, j, n, tol=1e-10):
    """Check the three filter-product estimates on a grid of lambdas.

    For ``0 <= nu <= 1`` and ``0 <= j < n``::

        lam**nu prod_{k=j}^{n-1} r_{t_k}                    <= (s_n - s_j)**(-nu)
        lam**nu g_{t_j} prod_{k=j+1}^{n-1} r_{t_k}          <= t_j (s_n - s_j)**(-nu)
        lam**nu sum_{i<n} g_{t_i} prod_{k=i+1}^{n-1} r_{t_k} <= s_n**(1-nu)

    Returns
    -------
    FilterCheckReport
    """
    kind = FilterKind.parse(kind)
    t_seq = np.asarray(t_seq, dtype=float)
    lam = np.atleast_1d(np.asarray(lambda_grid, dtype=float))
    if not 0 <= nu <= 1:
        raise ValueError(f"nu must lie in [0, 1], got {nu}")
    if not 0 <= j < n <= t_seq.size:
        raise ValueError(f"need 0 <= j < n <= len(t_seq), got j={j}, n={n}")
    if not np.all(np.isfinite(t_seq[:n]) & (t_seq[:n] > 0)):
        raise ValueError("filter parameters t_k must be positive and finite")
    _check_args(1.0, lam)
    s = cumulative_times(t_seq)
    lam_nu = lam ** nu
    res, gs = _filter_table(kind, t_seq[:n], lam)
    # tail[i] = prod_{k=i}^{n-1} r_{t_k}, tail[n] = 1
    tail = np.ones((n + 1, lam.size))
    for i in range(n - 1, -1, -1):
        tail[i] = tail[i + 1] * res[i]

    def slack(lhs, rhs):
        return float(np.max((lhs - rhs) / max(1.0, rhs)))

    gap = s[n] - s[j]
    s1 = slack(lam_nu * tail[j], gap ** (-nu))
    s2 = slack(lam_nu * gs[j] * tail[j + 1], t_seq[j] * gap ** (-nu))
    total = np.sum(gs * tail[1:], axis=0)
    s3 = slack(lam_nu * total, s[n] ** (1 - nu))
    return FilterCheckReport(kind, s1, s2, s3, tol)
