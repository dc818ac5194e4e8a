"""Achievable log-message-size formulas for the rateless random access channel.

Both decoders share the codebook and stage structure; the JNN rate divides
the k-user sum constraint by k, while the SIC rate is pinned to the first
decoding step (the worst user, which sees all other active users as noise).
``offset`` stands in for the higher-order term and defaults to 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import analytics
from .mvnormal import q_inv


@dataclass(frozen=True)
class RacRatePoint:
    """One (k, n_k) operating point with both decoders' achievable log M."""

    k: int
    n_k: int
    p: float
    xi: float
    eps_k: float
    log_m_jnn: float
    log_m_sic: float
    mu_k: float


def rac_jnn_log_m(
    n_k: int, k: int, p: float, xi: float, eps_k: float, offset: float = 0.0
) -> float:
    """Achievable log M under joint decoding of k active users.

    (1/k) * (n_k C(kP) - sqrt(n_k (V(kP) + V_cr(k, P))) Qinv(eps_k) + offset).
    """
    _check(n_k, k, eps_k)
    v_kp, v_cr, _ = analytics.rac_dispersions(k, 1, p, xi)
    backoff = math.sqrt(n_k * (v_kp + v_cr)) * q_inv(eps_k)
    return (n_k * analytics.capacity(k * p) - backoff + offset) / k


def rac_sic_log_m(
    n_k: int, k: int, p: float, xi: float, eps_k: float, offset: float = 0.0
) -> float:
    """Achievable log M under successive decoding, first step binding.

    n_k C(P / (1 + (k-1) P)) - sqrt(n_k V_rs(k, 1, P)) Qinv(eps_k) + offset.
    """
    _check(n_k, k, eps_k)
    _, _, v_rs = analytics.rac_dispersions(k, 1, p, xi)
    backoff = math.sqrt(n_k * v_rs) * q_inv(eps_k)
    return n_k * analytics.capacity(p / (1.0 + (k - 1) * p)) - backoff + offset


def first_order_gap(k: int, p: float) -> float:
    """mu(k) = k C(P / (1 + (k-1) P)) - C(kP); negative for k >= 2, zero at k = 1."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return k * analytics.capacity(p / (1.0 + (k - 1) * p)) - analytics.capacity(k * p)


def rate_table(
    ks, n_k: int, p: float, xi: float, eps_k: float, offset: float = 0.0
) -> list[RacRatePoint]:
    """Tabulate both decoders and the first-order gap over a range of k."""
    return [
        RacRatePoint(
            k=int(k),
            n_k=n_k,
            p=p,
            xi=xi,
            eps_k=eps_k,
            log_m_jnn=rac_jnn_log_m(n_k, int(k), p, xi, eps_k, offset),
            log_m_sic=rac_sic_log_m(n_k, int(k), p, xi, eps_k, offset),
            mu_k=first_order_gap(int(k), p),
        )
        for k in ks
    ]


def _check(n_k: int, k: int, eps_k: float) -> None:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if n_k < 1:
        raise ValueError(f"n_k must be >= 1, got {n_k}")
    if not 0.0 < eps_k < 1.0:
        raise ValueError(f"eps_k must be in (0, 1), got {eps_k}")
