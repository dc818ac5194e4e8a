"""Second-order achievable rate regions for the two-user MAC.

Covers joint nearest-neighbor (JNN) decoding case by case, successive
interference cancellation (SIC) decoding as a union of rectangle corners
over error-probability splits, the unified vector form of the JNN result,
and the JNN-vs-SIC comparison machinery.

A region lives in the (L1, L2) plane of per-user second-order back-offs:
log M_j >= n R_j* - sqrt(n) L_j, so larger L means more back-off and every
region is upward-closed.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field

import numpy as np

from . import analytics
from .analytics import DispersionMatrix, PowerPair
from .mvnormal import DEFAULT_BOUNDARY_TOL, mvn_lower_prob, q, q_inv, qinv_boundary

CASES = ("i", "ii", "iii", "iv", "v")
_TIME_SHARING_CASES = ("i", "iii", "v")


@dataclass(frozen=True)
class BoundaryRatePair:
    """A first-order boundary rate pair, tagged by case.

    Cases i/iii/v carry the time-sharing weight ``alpha``; the rate pair
    always satisfies the three first-order constraints with the
    case-appropriate equalities.
    """

    case: str
    alpha: float | None
    r1_star: float
    r2_star: float


def boundary_rate_pair(case: str, pp: PowerPair, alpha: float | None = None) -> BoundaryRatePair:
    """First-order rate pair on the region boundary for the given case."""
    _check_case(case, alpha)
    c1 = analytics.capacity(pp.p1)
    c2 = analytics.capacity(pp.p2)
    c1_mud = analytics.capacity(pp.p1 / (1.0 + pp.p2))  # user 1 under user-2 interference
    c2_mud = analytics.capacity(pp.p2 / (1.0 + pp.p1))
    if case == "i":
        return BoundaryRatePair(case, alpha, alpha * c1_mud, c2)
    if case == "ii":
        return BoundaryRatePair(case, None, c1_mud, c2)
    if case == "iii":
        ab = 1.0 - alpha
        return BoundaryRatePair(case, alpha, alpha * c1 + ab * c1_mud, alpha * c2_mud + ab * c2)
    if case == "iv":
        return BoundaryRatePair(case, None, c1, c2_mud)
    return BoundaryRatePair(case, alpha, c1, alpha * c2_mud)


@dataclass
class SecondOrderRegion:
    """An achievable set of back-off pairs (L1, L2), upward-closed.

    ``shape`` determines the descriptor in use:
      * ``l2-halfspace``   L2 >= threshold (L1 unconstrained)      [JNN i]
      * ``l1-halfspace``   L1 >= threshold (L2 unconstrained)      [JNN v]
      * ``sum-halfspace``  L1 + L2 >= threshold                    [JNN iii]
      * ``qinv-2d``        bivariate Gaussian level-set constraint [JNN ii/iv]
      * ``corner-union``   staircase of SIC rectangle corners      [SIC all]
    """

    decoder: str
    case: str
    pp: PowerPair
    xi: float
    eps: float
    alpha: float | None = None
    shape: str = ""
    threshold: float | None = None
    matrix: DispersionMatrix | None = None
    corners: list[tuple[float, float]] = field(default_factory=list)
    boundary_tol: float = DEFAULT_BOUNDARY_TOL

    def min_l2(self, l1: float) -> float:
        """Smallest achievable L2 at the given L1.

        Returns ``-inf`` when L2 is unconstrained and ``nan`` when the L1
        value is unattainable for this region.
        """
        if self.shape == "l2-halfspace":
            return self.threshold
        if self.shape == "l1-halfspace":
            return -math.inf if l1 >= self.threshold else math.nan
        if self.shape == "sum-halfspace":
            return self.threshold - l1
        if self.shape == "qinv-2d":
            return self._qinv_min_l2(l1)
        # corner-union: cheapest corner already unlocked at this L1
        c1s = [c[0] for c in self.corners]
        idx = bisect.bisect_right(c1s, l1) - 1
        return self.corners[idx][1] if idx >= 0 else math.nan

    def contains(self, l1: float, l2: float, slack: float = 1e-9) -> bool:
        if self.shape == "l2-halfspace":
            return l2 >= self.threshold - slack
        if self.shape == "l1-halfspace":
            return l1 >= self.threshold - slack
        if self.shape == "sum-halfspace":
            return l1 + l2 >= self.threshold - slack
        if self.shape == "qinv-2d":
            a = self._map(l1, l2)
            prob = mvn_lower_prob(a, self.matrix, self.boundary_tol / 10.0)
            return prob >= 1.0 - self.eps - slack
        return any(l1 >= c1 - slack and l2 >= c2 - slack for c1, c2 in self.corners)

    def boundary_points(self, l1_grid) -> list[tuple[float, float]]:
        """(l1, min_l2) polyline over the grid; unattainable points give nan."""
        return [(float(l1), self.min_l2(float(l1))) for l1 in l1_grid]

    # -- internals ---------------------------------------------------------

    def _map(self, l1: float, l2: float) -> tuple[float, float]:
        # case ii constrains (L2, L1+L2); case iv constrains (L1, L1+L2)
        if self.case == "ii":
            return (l2, l1 + l2)
        return (l1, l1 + l2)

    def _qinv_min_l2(self, l1: float) -> float:
        target = 1.0 - self.eps
        m = self.matrix.entries
        sig1, sig12 = math.sqrt(m[0, 0]), math.sqrt(m[1, 1])
        acc = self.boundary_tol / 10.0
        span = 10.0 * (sig1 + sig12)
        if self.case == "iv":
            # first coordinate is fixed at l1; feasible only if its marginal
            # leaves room for the target probability
            hi = span + max(0.0, -l1)
            if mvn_lower_prob(self._map(l1, hi), m, acc) < target:
                return math.nan
            lo = -span - max(0.0, l1)
        else:
            hi = span + max(0.0, -l1)
            lo = -span - max(0.0, l1)
        return _bisect_monotone(
            lambda l2: mvn_lower_prob(self._map(l1, l2), m, acc),
            lo,
            hi,
            target,
            self.boundary_tol,
        )


def mac_jnn_region(
    case: str,
    pp: PowerPair,
    xi: float,
    eps: float,
    alpha: float | None = None,
    boundary_tol: float = DEFAULT_BOUNDARY_TOL,
) -> SecondOrderRegion:
    """Second-order achievable region under joint nearest-neighbor decoding."""
    _check_case(case, alpha)
    _check_eps(eps)
    d = analytics.dispersions(pp, xi)
    qe = q_inv(eps)
    region = SecondOrderRegion(
        "jnn", case, pp, xi, eps, alpha=alpha, boundary_tol=boundary_tol
    )
    if case == "i":
        region.shape = "l2-halfspace"
        region.threshold = math.sqrt(d.v_p2) * qe
    elif case == "v":
        region.shape = "l1-halfspace"
        region.threshold = math.sqrt(d.v_p1) * qe
    elif case == "iii":
        region.shape = "sum-halfspace"
        region.threshold = math.sqrt(d.v_sum) * qe
    elif case == "ii":
        region.shape = "qinv-2d"
        region.matrix = analytics.dispersion_matrix("V1", pp, xi)
    else:  # iv
        region.shape = "qinv-2d"
        region.matrix = analytics.dispersion_matrix("V2", pp, xi)
    return region


def mac_jnn_curve(
    region: SecondOrderRegion, a1_grid, boundary_tol: float = DEFAULT_BOUNDARY_TOL
) -> list[tuple[float, float]]:
    """Curved-case boundary as (L1, L2) points via the bivariate level set.

    For case ii the level-set coordinates are (L2, L1+L2), so a boundary
    point (a1, a2) maps back to (L1, L2) = (a2 - a1, a1); case iv maps
    (a1, a2) to (L1, L2) = (a1, a2 - a1).
    """
    if region.shape != "qinv-2d":
        raise ValueError("mac_jnn_curve applies to the curved cases (ii, iv) only")
    rb = qinv_boundary(region.matrix, region.eps, a1_grid, boundary_tol)
    if region.case == "ii":
        pts = [(a2 - a1, a1) for a1, a2 in rb.points]
    else:
        pts = [(a1, a2 - a1) for a1, a2 in rb.points]
    pts.sort(key=lambda p: p[0])
    return pts


def default_split_grid(eps: float, points: int = 101) -> np.ndarray:
    """Error-probability splits eps1 for the SIC union, in (0, eps).

    Mixes log spacing toward both degenerate ends (down to 1e-6 and up to
    eps - 1e-6) with a linear mid-range; the union boundary is a lower
    envelope of rectangle corners and converges quickly in grid density.
    """
    _check_eps(eps)
    n_log = max(points // 4, 2)
    lo = np.geomspace(1e-6, eps / 4.0, n_log)
    lin = np.linspace(eps / points, eps * (1.0 - 1.0 / points), points - 2 * n_log)
    grid = np.unique(np.concatenate([lo, lin, eps - lo]))
    return grid[(grid > 0.0) & (grid < eps)]


def mac_sic_region(
    case: str,
    pp: PowerPair,
    xi: float,
    eps: float,
    alpha: float | None = None,
    split_grid=None,
) -> SecondOrderRegion:
    """Second-order achievable region under SIC decoding (user 1 first).

    The union over error splits eps1 + eps2 <= eps is evaluated on a finite
    split grid; the returned region is the staircase of non-dominated
    rectangle corners (L1 >= k1 Qinv(eps1), L2 >= k2 Qinv(eps - eps1)).
    """
    _check_case(case, alpha)
    _check_eps(eps)
    if split_grid is None:
        split_grid = default_split_grid(eps)
    split_grid = np.asarray(list(split_grid), dtype=float)
    if split_grid.size == 0:
        raise ValueError("split_grid must contain at least one eps1 value")
    if ((split_grid <= 0.0) | (split_grid >= eps)).any():
        raise ValueError("every split eps1 must lie strictly inside (0, eps)")

    k1, k2 = _sic_thresholds(case, pp, xi, alpha)
    corners = [
        (k1 * q_inv(float(e1)), k2 * q_inv(float(eps - e1))) for e1 in split_grid
    ]
    corners.sort()
    stair: list[tuple[float, float]] = []
    for c1, c2 in corners:
        if stair and c1 == stair[-1][0]:
            stair[-1] = (c1, min(c2, stair[-1][1]))
        elif not stair or c2 < stair[-1][1]:
            stair.append((c1, c2))
    return SecondOrderRegion(
        "sic", case, pp, xi, eps, alpha=alpha, shape="corner-union", corners=stair
    )


@dataclass(frozen=True)
class UnifiedRatePoint:
    """Vector form of the JNN result at finite blocklength.

    Describes the set of (log M1, log M2) with
    (log M1, log M2, log M1 M2) componentwise inside
    n C - sqrt(n) * {a : Pr{S <= a} >= 1 - eps} + offset * 1, where
    S ~ N(0, Vfull).  ``offset`` is the configurable stand-in for the
    higher-order term and defaults to 0.
    """

    n: int
    pp: PowerPair
    xi: float
    eps: float
    offset: float
    cap_vec: tuple[float, float, float]
    matrix: DispersionMatrix

    def back_off(self, log_m1: float, log_m2: float) -> np.ndarray:
        """The threshold vector a = (n C + offset - v) / sqrt(n)."""
        v = np.array([log_m1, log_m2, log_m1 + log_m2])
        return (self.n * np.asarray(self.cap_vec) + self.offset - v) / math.sqrt(self.n)

    def contains(self, log_m1: float, log_m2: float, accuracy: float = 1e-7) -> bool:
        a = self.back_off(log_m1, log_m2)
        return mvn_lower_prob(a, self.matrix, accuracy) >= 1.0 - self.eps

    def membership_prob(self, log_m1: float, log_m2: float, accuracy: float = 1e-7) -> float:
        return mvn_lower_prob(self.back_off(log_m1, log_m2), self.matrix, accuracy)

    def marginal_backoffs(self) -> np.ndarray:
        """Per-coordinate back-offs sqrt(n V_ii) Qinv(eps) of the marginal constraints."""
        return np.sqrt(self.n * np.diag(self.matrix.entries)) * q_inv(self.eps)

    def symmetric_boundary_log_m(self, tol: float = 1e-9) -> float:
        """Largest s such that (s, s) is still in the set."""
        hi = self.n * max(self.cap_vec) + abs(self.offset) + 1.0
        target = 1.0 - self.eps
        # membership probability decreases in s, so -prob is nondecreasing
        return _bisect_monotone(
            lambda s: -self.membership_prob(s, s, accuracy=tol / 10.0),
            -hi,
            hi,
            -target,
            tol,
        )


def jnn_unified_point(
    n: int, pp: PowerPair, xi: float, eps: float, offset: float = 0.0
) -> UnifiedRatePoint:
    """Build the unified JNN rate-point descriptor at blocklength n."""
    if n < 1:
        raise ValueError(f"blocklength n must be >= 1, got {n}")
    _check_eps(eps)
    return UnifiedRatePoint(
        n=n,
        pp=pp,
        xi=xi,
        eps=eps,
        offset=offset,
        cap_vec=analytics.capacity_vector(pp),
        matrix=analytics.dispersion_matrix("Vfull", pp, xi),
    )


def compare_regions(
    jnn: SecondOrderRegion, sic: SecondOrderRegion, l1_grid
) -> list[tuple[float, float, float, float]]:
    """Minimal L2 per grid L1 for both regions plus gap = l2_sic - l2_jnn.

    Unattainable grid points pass through as nan in the affected column and
    the gap.
    """
    if jnn.decoder != "jnn" or sic.decoder != "sic":
        raise ValueError("compare_regions expects (jnn_region, sic_region)")
    same = (
        jnn.case == sic.case
        and jnn.pp == sic.pp
        and jnn.xi == sic.xi
        and jnn.eps == sic.eps
        and (jnn.case not in _TIME_SHARING_CASES or jnn.alpha == sic.alpha)
    )
    if not same:
        raise ValueError("regions must share case and parameters")
    rows = []
    for l1 in l1_grid:
        l1 = float(l1)
        l2_jnn = jnn.min_l2(l1)
        l2_sic = sic.min_l2(l1)
        rows.append((l1, l2_jnn, l2_sic, l2_sic - l2_jnn))
    return rows


def sic_exact_min_l2(
    case: str, pp: PowerPair, xi: float, eps: float, l1: float, alpha: float | None = None
) -> float:
    """Exact lower envelope of the SIC union at a given L1 (no split grid).

    The cheapest split unlocking L1 is eps1 = Q(L1 / k1); the envelope is
    k2 Qinv(eps - eps1).  Unattainable L1 gives nan.
    """
    _check_case(case, alpha)
    k1, k2 = _sic_thresholds(case, pp, xi, alpha)
    eps1 = float(q(l1 / k1)) if k1 > 0 else 0.0
    if eps1 >= eps:
        return math.nan
    return k2 * q_inv(eps - eps1) if eps1 > 0.0 else k2 * q_inv(eps)


def _sic_thresholds(case: str, pp: PowerPair, xi: float, alpha: float | None):
    d = analytics.dispersions(pp, xi)
    sv1, sv2 = math.sqrt(d.v_1), math.sqrt(d.v_2)
    sp1, sp2 = math.sqrt(d.v_p1), math.sqrt(d.v_p2)
    if case == "i":
        return alpha * sv1, sp2
    if case == "ii":
        return sv1, sp2
    if case == "iii":
        ab = 1.0 - alpha
        return alpha * sv1 + ab * sp1, alpha * sp2 + ab * sv2
    if case == "iv":
        return sp1, sv2
    return sp1, alpha * sv2


def _bisect_monotone(fn, lo, hi, target, tol, iters: int = 200) -> float:
    """Smallest x with fn(x) >= target, fn nondecreasing, to tol in fn."""
    for _ in range(iters):
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


def _check_case(case: str, alpha: float | None = None) -> None:
    if case not in CASES:
        raise ValueError(f"case must be one of {CASES}, got {case!r}")
    if case in _TIME_SHARING_CASES:
        if alpha is None:
            raise ValueError(f"case {case} requires a time-sharing weight alpha")
        if not 0.0 < alpha < 1.0:
            raise ValueError(f"alpha must lie strictly in (0, 1), got {alpha}")


def _check_eps(eps: float) -> None:
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must be in (0, 1), got {eps}")
