"""Scalar and multivariate Gaussian tail machinery.

``mvn_lower_prob`` computes Pr{S <= a componentwise} for S ~ N(0, V) in
dimensions 1-3 by deterministic tensor quadrature over the
Cholesky-whitened integrand, refined until two successive node counts
agree to the requested accuracy.  ``qinv_boundary`` traces the level set
Pr{S <= a} = 1 - eps of a bivariate Gaussian, which is the region test
used by the curved second-order cases.

Sign convention: the theorem-level region tests are stated here in the
"<=" orientation.  The symmetric orientation Pr{S >= a} >= 1 - eps of the
raw threshold-set definition is obtained by the mapping a -> -a, since
S and -S share the same law.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

DEFAULT_ACCURACY = 1e-7
DEFAULT_BOUNDARY_TOL = 1e-6

# node counts tried in order during adaptive refinement
_REFINE_1D = (33, 65, 129, 257, 513, 1025, 2049, 4097)
_REFINE_2D = (12, 16, 24, 32, 48, 64, 96, 144)

_TINY = 1e-300


def q(x) -> float | np.ndarray:
    """Standard normal upper tail Q(x) = Pr{N(0,1) >= x}."""
    return ndtr(-np.asarray(x, dtype=float))[()]


def q_inv(eps: float) -> float:
    """Inverse of Q on (0, 1)."""
    if not 0.0 < eps < 1.0:
        raise ValueError(f"q_inv requires eps in (0, 1), got {eps}")
    return float(-ndtri(eps))


@dataclass
class RegionBoundary2D:
    """Polyline tracing {a : Pr{S <= a} = 1 - eps} for a bivariate Gaussian.

    ``points`` holds attainable (a1, a2) pairs sorted by a1, with a2
    non-increasing along the curve.  Grid values of a1 too small for any a2
    to reach the target probability are collected in ``unattainable``.
    """

    eps: float
    points: list[tuple[float, float]] = field(default_factory=list)
    unattainable: list[float] = field(default_factory=list)
    boundary_tol: float = DEFAULT_BOUNDARY_TOL

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("a1,a2\n")
            for a1, a2 in self.points:
                fh.write(f"{a1:.12g},{a2:.12g}\n")


def mvn_lower_prob(a, v, accuracy: float = DEFAULT_ACCURACY) -> float:
    """Pr{S <= a componentwise} for S ~ N(0, V), dimensions 1 to 3.

    Absolute error is at most ``accuracy``.  Coordinates with a_i = +inf are
    dropped as vacuous; any a_i = -inf gives 0.  Zero-variance coordinates
    degenerate to indicator constraints.  V may be a ``DispersionMatrix`` or
    a plain array; it must be symmetric PSD.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    m = np.asarray(getattr(v, "entries", v), dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"V must be a square matrix, got shape {m.shape}")
    d = m.shape[0]
    if a.shape != (d,):
        raise ValueError(f"dimension mismatch: a has shape {a.shape}, V is {d}x{d}")
    if d not in (1, 2, 3):
        raise ValueError(f"only dimensions 1-3 are supported, got {d}")
    if not np.allclose(m, m.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(m).max())):
        raise ValueError("V must be symmetric")
    scale = max(1.0, float(np.abs(m).max()))
    if np.linalg.eigvalsh(m).min() < -1e-10 * scale:
        raise ValueError("V must be positive semi-definite")

    if np.isneginf(a).any():
        return 0.0
    keep = ~np.isposinf(a)
    a, m = a[keep], m[np.ix_(keep, keep)]

    # a.s.-constant coordinates reduce to sign checks
    var = np.diag(m).copy()
    degenerate = var <= 1e-14 * scale
    if degenerate.any():
        if (a[degenerate] < 0).any():
            return 0.0
        keep = ~degenerate
        a, m = a[keep], m[np.ix_(keep, keep)]

    d = len(a)
    if d == 0:
        return 1.0
    if d == 1:
        return float(ndtr(a[0] / np.sqrt(m[0, 0])))
    if d == 2:
        return _lower_prob_2d(a, m, accuracy)
    return _lower_prob_3d(a, m, accuracy)


def qinv_boundary(
    v,
    eps: float,
    l1_grid,
    boundary_tol: float = DEFAULT_BOUNDARY_TOL,
) -> RegionBoundary2D:
    """For each a1 on the grid, solve Pr{S1 <= a1, S2 <= a2} = 1 - eps for a2.

    Bisection over the bracket [-10 sqrt(V22), +10 sqrt(V22)] down to
    ``boundary_tol`` in probability.  Grid points whose marginal
    Pr{S1 <= a1} cannot reach 1 - eps are reported as unattainable rather
    than raising.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must be in (0, 1), got {eps}")
    m = np.asarray(getattr(v, "entries", v), dtype=float)
    if m.shape != (2, 2):
        raise ValueError(f"qinv_boundary needs a 2x2 matrix, got {m.shape}")
    if min(m[0, 0], m[1, 1]) <= 0.0:
        raise ValueError("qinv_boundary requires strictly positive diagonal")
    target = 1.0 - eps
    sigma2 = float(np.sqrt(m[1, 1]))
    accuracy = min(DEFAULT_ACCURACY, boundary_tol / 10.0)
    out = RegionBoundary2D(eps=eps, boundary_tol=boundary_tol)
    for a1 in l1_grid:
        a1 = float(a1)
        lo, hi = -10.0 * sigma2, 10.0 * sigma2
        if mvn_lower_prob((a1, hi), m, accuracy) < target:
            out.unattainable.append(a1)
            continue
        a2 = _bisect_prob(
            lambda a2: mvn_lower_prob((a1, a2), m, accuracy), lo, hi, target, boundary_tol
        )
        out.points.append((a1, a2))
    out.points.sort(key=lambda pt: pt[0])
    return out


def _bisect_prob(fn, lo, hi, target, tol) -> float:
    """Root of fn(x) = target for nondecreasing fn, to tol in function value."""
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        val = fn(mid)
        if abs(val - target) <= 0.25 * tol and hi - lo <= 1e-9 * max(1.0, abs(mid)):
            return mid
        if val < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-13 * max(1.0, abs(mid)):
            break
    return 0.5 * (lo + hi)


def _lower_prob_2d(a, m, accuracy) -> float:
    s1, s2 = np.sqrt(m[0, 0]), np.sqrt(m[1, 1])
    z1, z2 = a[0] / s1, a[1] / s2
    rho = float(np.clip(m[0, 1] / (s1 * s2), -1.0, 1.0))
    if rho >= 1.0 - 1e-12:
        # comonotone: S1/s1 = S2/s2 a.s.
        return float(ndtr(min(z1, z2)))
    if rho <= -1.0 + 1e-12:
        return float(max(0.0, ndtr(z1) + ndtr(z2) - 1.0))

    # whitened form: integrate Phi((z2 - rho u) / sqrt(1 - rho^2)) over the
    # image of u <= z1 under v = Phi(u)
    e1 = float(ndtr(z1))
    if e1 <= 0.0:
        return 0.0
    denom = np.sqrt(1.0 - rho * rho)

    def estimate(k: int) -> float:
        nodes, weights = _gauss_legendre(k, 0.0, e1)
        u = ndtri(np.clip(nodes, _TINY, 1.0 - 1e-16))
        return float(weights @ ndtr((z2 - rho * u) / denom))

    return _refine(estimate, _REFINE_1D, accuracy)


def _lower_prob_3d(a, m, accuracy) -> float:
    scale = np.abs(m).max()
    if np.linalg.eigvalsh(m).min() <= 1e-12 * scale:
        raise ValueError("singular 3x3 covariance is not supported")
    chol = np.linalg.cholesky(m)
    e1 = float(ndtr(a[0] / chol[0, 0]))
    if e1 <= 0.0:
        return 0.0
    # conditioned on the first whitened variable u1, (S2, S3) is bivariate
    # normal with mean (l21, l31) u1 and a fixed covariance
    cov23 = np.array(
        [
            [chol[1, 1] ** 2, chol[1, 1] * chol[2, 1]],
            [chol[1, 1] * chol[2, 1], chol[2, 1] ** 2 + chol[2, 2] ** 2],
        ]
    )
    inner_acc = accuracy / 10.0

    def estimate(k: int) -> float:
        nodes, weights = _gauss_legendre(k, 0.0, e1)
        u1 = ndtri(np.clip(nodes, _TINY, 1.0 - 1e-16))
        vals = np.array(
            [
                _lower_prob_2d(
                    np.array([a[1] - chol[1, 0] * u, a[2] - chol[2, 0] * u]),
                    cov23,
                    inner_acc,
                )
                for u in u1
            ]
        )
        return float(weights @ vals)

    return _refine(estimate, _REFINE_1D, accuracy)


def _refine(estimate, schedule, accuracy) -> float:
    prev = estimate(schedule[0])
    for k in schedule[1:]:
        cur = estimate(k)
        if abs(cur - prev) <= 0.5 * accuracy:
            return min(1.0, max(0.0, cur))
        prev = cur
    return min(1.0, max(0.0, prev))


_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gauss_legendre(k: int, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
    if k not in _GL_CACHE:
        _GL_CACHE[k] = np.polynomial.legendre.leggauss(k)
    x, w = _GL_CACHE[k]
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), half * w
