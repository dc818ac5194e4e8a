"""Executable coding schemes: spherical codebooks, decoders, densities.

Codebooks are immutable after construction; decoders are pure functions of
(received word, codebook) and break ties by the lexicographically smallest
index tuple, which makes them deterministic even though ties have
probability zero under continuous noise.  Exhaustive decoders stream their
distance computations one conditioning index at a time so memory stays
O(n + M) rather than O(M1 * M2).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .analytics import capacity

DEFAULT_ENUMERATION_BUDGET = 1 << 20

INFO_DENSITY_KINDS = (
    "mac_i1_given_x2",
    "mac_i2_given_x1",
    "mac_i12",
    "sic_i1_treat_as_noise",
    "rac_joint_t",
    "rac_sic_step_r",
)

_HEADER = struct.Struct("<QQd")  # m, n as uint64; p as float64


class EnumerationBudgetError(RuntimeError):
    """Candidate enumeration would exceed the configured budget."""


def sample_sphere(n: int, p: float, rng: np.random.Generator) -> np.ndarray:
    """One point uniform on the radius-sqrt(n p) sphere in R^n.

    Drawn as a normalized standard-normal vector; a zero draw (probability
    zero) is resampled defensively.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not p > 0:
        raise ValueError(f"p must be > 0, got {p}")
    while True:
        g = rng.standard_normal(n)
        norm = np.linalg.norm(g)
        if norm > 0.0:
            return math.sqrt(n * p) / norm * g


def sample_sphere_rows(m: int, n: int, p: float, rng: np.random.Generator) -> np.ndarray:
    """m independent uniform points on the radius-sqrt(n p) sphere, as rows."""
    if m < 1 or n < 1:
        raise ValueError(f"m and n must be >= 1, got m={m}, n={n}")
    if not p > 0:
        raise ValueError(f"p must be > 0, got {p}")
    g = rng.standard_normal((m, n))
    norms = np.linalg.norm(g, axis=1)
    while (bad := norms == 0.0).any():
        g[bad] = rng.standard_normal((int(bad.sum()), n))
        norms = np.linalg.norm(g, axis=1)
    return math.sqrt(n * p) / norms[:, None] * g


@dataclass(frozen=True)
class Codebook:
    """m codewords of length n, each with squared norm exactly n p."""

    p: float
    rows: np.ndarray

    def __post_init__(self):
        rows = np.ascontiguousarray(np.asarray(self.rows, dtype=float))
        if rows.ndim != 2 or rows.shape[0] < 1:
            raise ValueError("rows must be a non-empty (m, n) matrix")
        target = rows.shape[1] * self.p
        sq = np.einsum("ij,ij->i", rows, rows)
        if np.abs(sq / target - 1.0).max() > 1e-9:
            raise ValueError("codeword squared norms must equal n*p to 1e-9 relative")
        rows.flags.writeable = False
        object.__setattr__(self, "rows", rows)

    @property
    def m(self) -> int:
        return self.rows.shape[0]

    @property
    def n(self) -> int:
        return self.rows.shape[1]

    @classmethod
    def sample(cls, m: int, n: int, p: float, rng: np.random.Generator) -> "Codebook":
        if m < 1:
            raise ValueError(f"m must be >= 1, got {m}")
        return cls(p=p, rows=sample_sphere_rows(m, n, p, rng))

    def save(self, path) -> None:
        """Flat binary dump: header (m, n as uint64, p as float64) + row-major float64."""
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(self.m, self.n, self.p))
            fh.write(np.ascontiguousarray(self.rows, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "Codebook":
        with open(path, "rb") as fh:
            m, n, p = _HEADER.unpack(fh.read(_HEADER.size))
            data = np.frombuffer(fh.read(), dtype="<f8")
        if data.size != m * n:
            raise ValueError(f"expected {m * n} values, found {data.size}")
        return cls(p=p, rows=data.reshape(m, n).copy())


@dataclass(frozen=True)
class RacCodebook:
    """Shared RAC codebook: per-row independent sub-codewords per stage.

    ``layout`` holds the sub-codeword lengths (n1, n2 - n1, ...); segment j
    of every row has squared norm exactly layout[j] * p.
    """

    p: float
    layout: tuple[int, ...]
    rows: np.ndarray

    def __post_init__(self):
        layout = tuple(int(l) for l in self.layout)
        if not layout or any(l < 1 for l in layout):
            raise ValueError(f"layout must be positive stage lengths, got {layout}")
        rows = np.ascontiguousarray(np.asarray(self.rows, dtype=float))
        if rows.ndim != 2 or rows.shape[1] != sum(layout):
            raise ValueError("rows must be (m, sum(layout))")
        start = 0
        for seg in layout:
            block = rows[:, start : start + seg]
            sq = np.einsum("ij,ij->i", block, block)
            if np.abs(sq / (seg * self.p) - 1.0).max() > 1e-9:
                raise ValueError("per-segment squared norms must equal len*p")
            start += seg
        rows.flags.writeable = False
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "layout", layout)

    @property
    def m(self) -> int:
        return self.rows.shape[0]

    @property
    def stop_times(self) -> tuple[int, ...]:
        out, total = [], 0
        for seg in self.layout:
            total += seg
            out.append(total)
        return tuple(out)

    @classmethod
    def sample(cls, m: int, layout, p: float, rng: np.random.Generator) -> "RacCodebook":
        if m < 1:
            raise ValueError(f"m must be >= 1, got {m}")
        layout = tuple(int(l) for l in layout)
        if not layout or any(l < 1 for l in layout):
            raise ValueError(f"layout must be positive stage lengths, got {layout}")
        segments = [sample_sphere_rows(m, seg, p, rng) for seg in layout]
        return cls(p=p, layout=layout, rows=np.hstack(segments))


def build_rac_codebook(m: int, layout, p: float, rng: np.random.Generator) -> RacCodebook:
    """Sample a spherical-type RAC codebook (alias for RacCodebook.sample)."""
    return RacCodebook.sample(m, layout, p, rng)


# ---------------------------------------------------------------------------
# decoders
# ---------------------------------------------------------------------------


def jnn_decode_mac(y: np.ndarray, cb1: Codebook, cb2: Codebook) -> tuple[int, int]:
    """Exhaustive minimum-distance decoding over all message pairs."""
    y = np.asarray(y, dtype=float)
    if y.shape != (cb1.n,) or cb1.n != cb2.n:
        raise ValueError("y and both codebooks must share one blocklength")
    x2 = cb2.rows
    sq2 = np.einsum("ij,ij->i", x2, x2)
    best_d = math.inf
    best = (0, 0)
    for w1 in range(cb1.m):
        r = y - cb1.rows[w1]
        d = (r @ r) - 2.0 * (x2 @ r) + sq2
        w2 = int(np.argmin(d))
        if d[w2] < best_d:
            best_d = float(d[w2])
            best = (w1, w2)
    return best


def sic_decode_mac(y: np.ndarray, cb1: Codebook, cb2: Codebook) -> tuple[int, int]:
    """Two-step successive cancellation, user 1 decoded first."""
    y = np.asarray(y, dtype=float)
    if y.shape != (cb1.n,) or cb1.n != cb2.n:
        raise ValueError("y and both codebooks must share one blocklength")
    w1 = _nearest_row(y, cb1.rows)
    w2 = _nearest_row(y - cb1.rows[w1], cb2.rows)
    return w1, w2


def rac_jnn_decode(
    y: np.ndarray,
    cb: RacCodebook,
    t: int,
    budget: int = DEFAULT_ENUMERATION_BUDGET,
) -> tuple[int, ...]:
    """Joint decoding of t distinct messages; returns the sorted index multiset.

    Enumerates unordered distinct t-subsets (the permutation-invariant error
    criterion makes ordering irrelevant; repeated messages are accounted as
    repetition errors upstream).  Refuses outright if comb(m, t) exceeds the
    enumeration budget.
    """
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t}")
    y = np.asarray(y, dtype=float)
    m = cb.m
    if t > m:
        raise ValueError(f"cannot decode {t} distinct messages from m={m}")
    n_candidates = math.comb(m, t)
    if n_candidates > budget:
        raise EnumerationBudgetError(
            f"comb({m}, {t}) = {n_candidates} candidate subsets exceed budget {budget}; "
            "shrink M or t"
        )
    x = cb.rows[:, : y.size]
    if t == 1:
        return (_nearest_row(y, x),)
    sq = np.einsum("ij,ij->i", x, x)
    best_d = math.inf
    best: tuple[int, ...] = ()
    # stream over the first t-1 indices of each ascending tuple, vectorizing
    # the last; combinations() yields ascending heads, so each distinct
    # subset is visited exactly once
    for head in combinations(range(m - 1), t - 1):
        lo = head[-1] + 1
        r = y - x[head[0]]
        for idx in head[1:]:
            r = r - x[idx]
        tail = x[lo:]
        d = (r @ r) - 2.0 * (tail @ r) + sq[lo:]
        j = int(np.argmin(d))
        if d[j] < best_d:
            best_d = float(d[j])
            best = head + (lo + j,)
    return tuple(best)


def rac_sic_decode(y: np.ndarray, cb: RacCodebook, t: int) -> list[int]:
    """Successive decoding of t messages in order; repeats are possible."""
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t}")
    y = np.asarray(y, dtype=float)
    x = cb.rows[:, : y.size]
    resid = y.copy()
    out: list[int] = []
    for _ in range(t):
        w = _nearest_row(resid, x)
        out.append(w)
        resid = resid - x[w]
    return out


def _nearest_row(y: np.ndarray, rows: np.ndarray) -> int:
    sq = np.einsum("ij,ij->i", rows, rows)
    d = -2.0 * (rows @ y) + sq  # ||y||^2 common to all candidates
    return int(np.argmin(d))


# ---------------------------------------------------------------------------
# mismatched information densities (all in nats)
# ---------------------------------------------------------------------------


def info_density_mac_conditional(x_self, x_other, y, p_self: float) -> float:
    """Density of one user's codeword given the other user's codeword.

    n C(P_j) + ||y - x_other||^2 / (2 (1 + P_j)) - ||y - x_self - x_other||^2 / 2.
    """
    x_self, x_other, y = _as_rows(x_self, x_other, y)
    n = y.size
    cond = y - x_other
    resid = cond - x_self
    return (
        n * capacity(p_self)
        + (cond @ cond) / (2.0 * (1.0 + p_self))
        - (resid @ resid) / 2.0
    )


def info_density_mac_joint(x1, x2, y, p1: float, p2: float) -> float:
    """Joint density of the pair: n C(P1+P2) + ||y||^2/(2(1+P1+P2)) - ||resid||^2/2."""
    x1, x2, y = _as_rows(x1, x2, y)
    n = y.size
    resid = y - x1 - x2
    ps = p1 + p2
    return n * capacity(ps) + (y @ y) / (2.0 * (1.0 + ps)) - (resid @ resid) / 2.0


def info_density_sic_first(x1, y, p1: float, p2: float) -> float:
    """First SIC step density, treating user 2 as noise.

    n C(P1 / (1 + P2)) + ||y||^2 / (2 (1+P1+P2)) - ||y - x1||^2 / (2 (1+P2)).
    """
    x1, y = _as_rows(x1, y)
    n = y.size
    resid = y - x1
    return (
        n * capacity(p1 / (1.0 + p2))
        + (y @ y) / (2.0 * (1.0 + p1 + p2))
        - (resid @ resid) / (2.0 * (1.0 + p2))
    )


def info_density_rac_joint(x_new, y, p: float, x_cond=()) -> float:
    """Joint density of t fresh RAC codewords given k - t known ones.

    n C(tP) + ||y - sum(cond)||^2 / (2 (1 + tP)) - ||y - sum(all)||^2 / 2.
    """
    y = np.asarray(y, dtype=float)
    new = np.atleast_2d(np.asarray(x_new, dtype=float))
    t = new.shape[0]
    n = y.size
    cond_resid = y - _sum_rows(x_cond, n)
    resid = cond_resid - new.sum(axis=0)
    return (
        n * capacity(t * p)
        + (cond_resid @ cond_resid) / (2.0 * (1.0 + t * p))
        - (resid @ resid) / 2.0
    )


def info_density_rac_sic(x_r, y, p: float, k: int, x_prev=()) -> float:
    """Density of the r-th successively decoded RAC message among k active.

    With u = k - r users still undecoded:
    n C(P/(1+uP)) + ||y - sum(prev)||^2/(2(1+(u+1)P)) - ||y - sum(prev) - x_r||^2/(2(1+uP)).
    """
    y = np.asarray(y, dtype=float)
    x_r = np.asarray(x_r, dtype=float)
    prev = np.atleast_2d(np.asarray(x_prev, dtype=float)) if len(x_prev) else None
    r = 1 + (prev.shape[0] if prev is not None else 0)
    if not 1 <= r <= k:
        raise ValueError(f"step r={r} out of range for k={k}")
    u = k - r
    n = y.size
    cond_resid = y - (prev.sum(axis=0) if prev is not None else 0.0)
    resid = cond_resid - x_r
    return (
        n * capacity(p / (1.0 + u * p))
        + (cond_resid @ cond_resid) / (2.0 * (1.0 + (u + 1) * p))
        - (resid @ resid) / (2.0 * (1.0 + u * p))
    )


def info_density(kind: str, **inputs) -> float:
    """Dispatch a density evaluation by kind name (see INFO_DENSITY_KINDS)."""
    if kind == "mac_i1_given_x2":
        return info_density_mac_conditional(
            inputs["x1"], inputs["x2"], inputs["y"], inputs["p1"]
        )
    if kind == "mac_i2_given_x1":
        return info_density_mac_conditional(
            inputs["x2"], inputs["x1"], inputs["y"], inputs["p2"]
        )
    if kind == "mac_i12":
        return info_density_mac_joint(
            inputs["x1"], inputs["x2"], inputs["y"], inputs["p1"], inputs["p2"]
        )
    if kind == "sic_i1_treat_as_noise":
        return info_density_sic_first(inputs["x1"], inputs["y"], inputs["p1"], inputs["p2"])
    if kind == "rac_joint_t":
        return info_density_rac_joint(
            inputs["x_new"], inputs["y"], inputs["p"], inputs.get("x_cond", ())
        )
    if kind == "rac_sic_step_r":
        return info_density_rac_sic(
            inputs["x_r"], inputs["y"], inputs["p"], inputs["k"], inputs.get("x_prev", ())
        )
    raise ValueError(f"unknown info density kind {kind!r}; expected one of {INFO_DENSITY_KINDS}")


def stopping_stat(y_prefix, t: int, p: float) -> float:
    """Stopping statistic |(1/n_t) ||y||^2 - (1 + t P)| tested against lambda_t."""
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t}")
    y = np.asarray(y_prefix, dtype=float)
    if y.size == 0:
        raise ValueError("stopping_stat requires a non-empty received prefix")
    return abs((y @ y) / y.size - (1.0 + t * p))


def _as_rows(*arrays):
    out = tuple(np.asarray(a, dtype=float) for a in arrays)
    n = out[-1].size
    for a in out:
        if a.shape != (n,):
            raise ValueError("all vectors must share the received word's length")
    return out


def _sum_rows(rows, n: int):
    if not len(rows):
        return np.zeros(n)
    arr = np.atleast_2d(np.asarray(rows, dtype=float))
    if arr.shape[1] != n:
        raise ValueError("conditioning codewords must match the received word's length")
    return arr.sum(axis=0)
