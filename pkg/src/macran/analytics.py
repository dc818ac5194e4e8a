"""Closed-form capacity and dispersion algebra for the two-user MAC.

All rates are in nats per channel use.  The kurtosis parameter ``xi``
(fourth moment of the unit-power noise) is an explicit argument everywhere,
so non-Gaussian sweeps are first-class; ``xi = 3`` recovers the Gaussian
expressions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .noise import NoiseModel, make_noise

_PSD_TOL = 1e-10


@dataclass(frozen=True)
class PowerPair:
    """Per-user SNRs (noise power is normalized to 1)."""

    p1: float
    p2: float

    def __post_init__(self):
        for name, value in (("p1", self.p1), ("p2", self.p2)):
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive finite SNR, got {value}")

    @property
    def total(self) -> float:
        return self.p1 + self.p2


@dataclass(frozen=True)
class DispersionSet:
    """The eight scalar dispersion functions evaluated at one (P1, P2, xi)."""

    v_p1: float        # V(P1)
    v_p2: float        # V(P2)
    v_12cross: float   # V_{1,2}(P1, P2)
    v_1_12: float      # V_{1,12}(P1, P2)
    v_2_12: float      # V_{2,12}(P1, P2)
    v_sum: float       # V_{12}(P1, P2)
    v_1: float         # V_1(P1, P2)
    v_2: float         # V_2(P1, P2)


@dataclass(frozen=True)
class DispersionMatrix:
    """A symmetric PSD dispersion matrix (2x2 or 3x3)."""

    dim: int
    entries: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=float)
        if m.shape != (self.dim, self.dim):
            raise ValueError(f"entries must be {self.dim}x{self.dim}, got {m.shape}")
        if not np.allclose(m, m.T, rtol=0.0, atol=1e-12):
            raise ValueError("dispersion matrix must be symmetric")
        eigs = np.linalg.eigvalsh(m)
        if eigs.min() < -_PSD_TOL:
            raise ValueError(f"dispersion matrix is not PSD (min eigenvalue {eigs.min()})")
        m.flags.writeable = False
        object.__setattr__(self, "entries", m)


def capacity(p: float) -> float:
    """Point-to-point capacity 0.5 * log(1 + p) in nats."""
    if not (math.isfinite(p) and p > 0):
        raise ValueError(f"capacity requires p > 0, got {p}")
    return 0.5 * math.log1p(p)


def capacity_vector(pp: PowerPair) -> tuple[float, float, float]:
    """(C(P1), C(P2), C(P1 + P2))."""
    return capacity(pp.p1), capacity(pp.p2), capacity(pp.total)


def dispersion_v(p: float, xi: float) -> float:
    """V(P) = ((xi - 1) P^2 + 4 P) / (4 (1 + P)^2)."""
    _check_xi(xi)
    return ((xi - 1.0) * p * p + 4.0 * p) / (4.0 * (1.0 + p) ** 2)


def dispersions(pp: PowerPair, xi: float) -> DispersionSet:
    """Evaluate all eight scalar dispersion functions."""
    _check_xi(xi)
    p1, p2 = pp.p1, pp.p2
    ps = p1 + p2
    xm1 = xi - 1.0
    v_12cross = xm1 * p1 * p2 / (4.0 * (1.0 + p1) * (1.0 + p2))
    v_1_12 = (xm1 * p1 * ps + 4.0 * p1) / (4.0 * (1.0 + p1) * (1.0 + ps))
    v_2_12 = (xm1 * p2 * ps + 4.0 * p2) / (4.0 * (1.0 + p2) * (1.0 + ps))
    v_sum = dispersion_v(ps, xi) + p1 * p2 / (1.0 + ps) ** 2
    v_1 = (p1 * p1 * (xm1 + 4.0 * p2) + 4.0 * p1 * (1.0 + p2) ** 3) / (
        4.0 * (1.0 + p2) ** 2 * (1.0 + ps) ** 2
    )
    v_2 = (p2 * p2 * (xm1 + 4.0 * p1) + 4.0 * p2 * (1.0 + p1) ** 3) / (
        4.0 * (1.0 + p1) ** 2 * (1.0 + ps) ** 2
    )
    return DispersionSet(
        v_p1=dispersion_v(p1, xi),
        v_p2=dispersion_v(p2, xi),
        v_12cross=v_12cross,
        v_1_12=v_1_12,
        v_2_12=v_2_12,
        v_sum=v_sum,
        v_1=v_1,
        v_2=v_2,
    )


def rac_dispersions(k: int, r: int, p: float, xi: float) -> tuple[float, float, float]:
    """(V(kP), V_cr(k, P), V_rs(k, r, P)) for the random access channel.

    ``V_cr`` is the cross-codeword term added to the sum dispersion under
    joint decoding of k users; ``V_rs`` is the dispersion of decoding the
    r-th user with the remaining k - r treated as noise.
    """
    _check_xi(xi)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not 1 <= r <= k:
        raise ValueError(f"r must satisfy 1 <= r <= k, got r={r}, k={k}")
    v_kp = dispersion_v(k * p, xi)
    v_cr = k * (k - 1) * p * p / (2.0 * (1.0 + k * p) ** 2)
    u = k - r
    num = (
        p * p * (xi - 1.0)
        + 4.0 * p * (1.0 + u * p) ** 3
        + 4.0 * u * p**3
        + 2.0 * u * (u - 1) * p**4
    )
    v_rs = num / (4.0 * (1.0 + (u + 1) * p) ** 2 * (1.0 + u * p) ** 2)
    return v_kp, v_cr, v_rs


def dispersion_matrix(which: str, pp: PowerPair, xi: float) -> DispersionMatrix:
    """Assemble the 2x2 (V1, V2) or 3x3 (Vfull) dispersion matrix.

    ``V1`` governs the (L2, L1+L2) constraint pair, ``V2`` the (L1, L1+L2)
    pair, and ``Vfull`` the joint three-constraint vector.
    """
    d = dispersions(pp, xi)
    if which == "V1":
        m = np.array([[d.v_p2, d.v_2_12], [d.v_2_12, d.v_sum]])
        return DispersionMatrix(2, m)
    if which == "V2":
        m = np.array([[d.v_p1, d.v_1_12], [d.v_1_12, d.v_sum]])
        return DispersionMatrix(2, m)
    if which == "Vfull":
        m = np.array(
            [
                [d.v_p1, d.v_12cross, d.v_1_12],
                [d.v_12cross, d.v_p2, d.v_2_12],
                [d.v_1_12, d.v_2_12, d.v_sum],
            ]
        )
        return DispersionMatrix(3, m)
    raise ValueError(f"which must be 'V1', 'V2' or 'Vfull', got {which!r}")


def jnn_jacobian(pp: PowerPair) -> np.ndarray:
    """Jacobian (3x6) of the normalized information-density triple.

    Rows differentiate the per-user and sum densities with respect to the
    six zero-mean statistics whose covariance is ``a_vector_cov``.
    """
    p1, p2 = pp.p1, pp.p2
    ps = p1 + p2
    return np.array(
        [
            [p1 / (2.0 * (1.0 + p1)), 1.0 / (1.0 + p1), 0.0, 0.0, 0.0, 0.0],
            [p2 / (2.0 * (1.0 + p2)), 0.0, 0.0, 1.0 / (1.0 + p2), 0.0, 0.0],
            [
                ps / (2.0 * (1.0 + ps)),
                1.0 / (1.0 + ps),
                0.0,
                1.0 / (1.0 + ps),
                0.0,
                1.0 / (1.0 + ps),
            ],
        ]
    )


def a_vector_cov(pp: PowerPair, xi: float) -> np.ndarray:
    """Covariance diag[xi-1, P1, 2, P2, 2, P1 P2] of the per-symbol statistics."""
    _check_xi(xi)
    return np.diag([xi - 1.0, pp.p1, 2.0, pp.p2, 2.0, pp.p1 * pp.p2])


def sample_a_vectors(
    pp: PowerPair, noise: NoiseModel, n_samples: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw the six per-symbol statistics under i.i.d. Gaussian surrogates.

    Columns: (1 - Z^2, sqrt(P1) X1 Z, X1^2 - 1, sqrt(P2) X2 Z, X2^2 - 1,
    sqrt(P1 P2) X1 X2) with X1, X2 standard normal and Z from ``noise``.
    """
    z = noise.sample(rng, n_samples)
    x1 = rng.standard_normal(n_samples)
    x2 = rng.standard_normal(n_samples)
    cols = np.empty((n_samples, 6))
    cols[:, 0] = 1.0 - z * z
    cols[:, 1] = math.sqrt(pp.p1) * x1 * z
    cols[:, 2] = x1 * x1 - 1.0
    cols[:, 3] = math.sqrt(pp.p2) * x2 * z
    cols[:, 4] = x2 * x2 - 1.0
    cols[:, 5] = math.sqrt(pp.p1 * pp.p2) * x1 * x2
    return cols


def empirical_a_covariance(
    pp: PowerPair, noise: NoiseModel, n_samples: int, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Empirical covariance of the six statistics and its standard errors.

    Returns (cov_hat, se) where ``se[i, j]`` is the Monte Carlo standard
    error of entry (i, j), so a well-specified model keeps
    ``|cov_hat - a_vector_cov| <= 5 * se`` entrywise.
    """
    rng = np.random.default_rng(seed)
    a = sample_a_vectors(pp, noise, n_samples, rng)
    a = a - a.mean(axis=0)
    cov = a.T @ a / (n_samples - 1)
    se = np.empty((6, 6))
    for i in range(6):
        for j in range(i, 6):
            prods = a[:, i] * a[:, j]
            se[i, j] = se[j, i] = prods.std(ddof=1) / math.sqrt(n_samples)
    return cov, se


def jacobian_identity_error(pp: PowerPair, xi: float) -> float:
    """Entrywise max deviation of J cov J^T from the full dispersion matrix."""
    j = jnn_jacobian(pp)
    lhs = j @ a_vector_cov(pp, xi) @ j.T
    rhs = dispersion_matrix("Vfull", pp, xi).entries
    return float(np.abs(lhs - rhs).max())


def verify_jacobian_identity(
    pp: PowerPair,
    xi: float,
    n_mc: int = 0,
    seed: int = 0,
    noise: NoiseModel | None = None,
) -> float:
    """Check the algebraic covariance identity behind the dispersion matrix.

    Always performs the exact check and returns its entrywise max error.
    With ``n_mc > 0`` additionally samples the six-statistic vector and
    requires the empirical covariance to sit within 5 standard errors of
    the analytic diagonal, raising ``RuntimeError`` otherwise.  ``noise``
    defaults to the model matching ``xi`` only for the Gaussian case, so a
    model must be supplied for non-Gaussian empirical checks.
    """
    err = jacobian_identity_error(pp, xi)
    if n_mc > 0:
        if noise is None:
            if xi != 3.0:
                raise ValueError("supply a NoiseModel for non-Gaussian empirical checks")
            noise = make_noise("gaussian")
        if abs(noise.xi - xi) > 1e-9:
            raise ValueError(f"noise fourth moment {noise.xi} does not match xi={xi}")
        cov_hat, se = empirical_a_covariance(pp, noise, n_mc, seed)
        dev = np.abs(cov_hat - a_vector_cov(pp, xi))
        if (dev > 5.0 * se).any():
            worst = np.unravel_index(np.argmax(dev / np.maximum(se, 1e-300)), dev.shape)
            raise RuntimeError(
                f"empirical covariance entry {worst} deviates by {dev[worst]:.3e} "
                f"(> 5 se = {5 * se[worst]:.3e})"
            )
    return err


def _check_xi(xi: float) -> None:
    if not (math.isfinite(xi) and xi >= 1.0):
        raise ValueError(f"xi must satisfy xi >= 1 (Cauchy-Schwarz), got {xi}")
