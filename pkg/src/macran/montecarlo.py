"""Monte Carlo estimation of ensemble error probabilities.

Every trial derives its own RNG stream from (master_seed, stream tag,
trial index) through ``numpy.random.SeedSequence`` spawn keys, so results
are bit-identical for a given master seed no matter how trials are
scheduled across workers.  Codebooks are resampled every trial: the target
quantity is the ensemble average over codebooks, messages, and noise.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import codec
from .analytics import PowerPair
from .codec import (
    Codebook,
    DEFAULT_ENUMERATION_BUDGET,
    EnumerationBudgetError,
    RacCodebook,
)
from .noise import NoiseModel

_STREAM_MAC = 0
_STREAM_RAC = 1
_STREAM_RCU = 2
_STREAM_G = 3

_Z95 = 1.959963984540054


def trial_rng(master_seed: int, stream: int, trial: int) -> np.random.Generator:
    """Independent generator for one (stream, trial) pair; counter-based."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=master_seed, spawn_key=(stream, trial))
    )


def worker_count() -> int:
    """Worker cap from MACRAN_THREADS (default 1; results are unaffected)."""
    raw = os.environ.get("MACRAN_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass(frozen=True)
class MacSimConfig:
    """One MAC simulation campaign (fresh codebooks per trial)."""

    n: int
    m1: int
    m2: int
    pp: PowerPair
    noise: NoiseModel
    decoder: str
    trials: int
    master_seed: int
    budget: int = DEFAULT_ENUMERATION_BUDGET

    def __post_init__(self):
        if self.decoder not in ("jnn", "sic"):
            raise ValueError(f"decoder must be 'jnn' or 'sic', got {self.decoder!r}")
        if self.n < 1 or self.m1 < 1 or self.m2 < 1:
            raise ValueError("n, m1, m2 must all be >= 1")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.decoder == "jnn" and self.m1 * self.m2 > self.budget:
            raise EnumerationBudgetError(
                f"m1*m2 = {self.m1 * self.m2} exceeds the enumeration budget "
                f"{self.budget} for exhaustive joint decoding"
            )

    def echo(self) -> dict:
        return {
            "n": self.n,
            "m1": self.m1,
            "m2": self.m2,
            "p1": self.pp.p1,
            "p2": self.pp.p2,
            "noise": self.noise.to_config(),
            "decoder": self.decoder,
            "trials": self.trials,
        }


@dataclass(frozen=True)
class RacSimConfig:
    """One rateless RAC campaign.

    ``layout`` is the stopping-time sequence (n_1, ..., n_K); ``lambdas``
    the per-stage stopping thresholds, each required to lie in (0, P).
    """

    cap_k: int
    k_active: int
    m: int
    p: float
    layout: tuple[int, ...]
    lambdas: tuple[float, ...]
    noise: NoiseModel
    decoder: str
    trials: int
    master_seed: int
    budget: int = DEFAULT_ENUMERATION_BUDGET

    def __post_init__(self):
        object.__setattr__(self, "layout", tuple(int(v) for v in self.layout))
        object.__setattr__(self, "lambdas", tuple(float(v) for v in self.lambdas))
        if self.decoder not in ("jnn", "sic"):
            raise ValueError(f"decoder must be 'jnn' or 'sic', got {self.decoder!r}")
        if not 1 <= self.k_active <= self.cap_k:
            raise ValueError("need 1 <= k_active <= cap_k")
        if self.m < 1 or self.trials < 1:
            raise ValueError("m and trials must be >= 1")
        if len(self.layout) != self.cap_k or len(self.lambdas) != self.cap_k:
            raise ValueError("layout and lambdas must have cap_k entries")
        if any(b <= a for a, b in zip(self.layout, self.layout[1:])) or self.layout[0] < 1:
            raise ValueError("layout must be strictly increasing stopping times")
        if any(not 0.0 < lam < self.p for lam in self.lambdas):
            raise ValueError("every lambda_t must lie in (0, P)")
        if self.decoder == "jnn" and math.comb(self.m, self.k_active) > self.budget:
            raise EnumerationBudgetError(
                f"comb({self.m}, {self.k_active}) exceeds the enumeration budget"
            )

    @property
    def stage_lengths(self) -> tuple[int, ...]:
        prev = 0
        out = []
        for n_t in self.layout:
            out.append(n_t - prev)
            prev = n_t
        return tuple(out)

    def echo(self) -> dict:
        return {
            "cap_k": self.cap_k,
            "k_active": self.k_active,
            "m": self.m,
            "p": self.p,
            "layout": list(self.layout),
            "lambdas": list(self.lambdas),
            "noise": self.noise.to_config(),
            "decoder": self.decoder,
            "trials": self.trials,
        }


@dataclass(frozen=True)
class SimResult:
    """Estimated error probability with a binomial 95% interval.

    For RAC runs the disjoint error-event counts (repetition, wrong stop
    stage given no repetition, wrong message set given correct stop) are
    reported; they sum to the total error count.
    """

    p_err_hat: float
    ci95_halfwidth: float
    trials: int
    n_errors: int
    rep_count: int | None = None
    time_count: int | None = None
    msg_count: int | None = None

    def to_dict(self, config_echo: dict | None = None, seed: int | None = None) -> dict:
        out = {
            "schema": 1,
            "p_err": self.p_err_hat,
            "ci95": self.ci95_halfwidth,
            "trials": self.trials,
            "n_errors": self.n_errors,
        }
        if self.rep_count is not None:
            out["breakdown"] = {
                "rep": self.rep_count,
                "time": self.time_count,
                "msg": self.msg_count,
            }
        if config_echo is not None:
            out["config_echo"] = config_echo
        if seed is not None:
            out["seed"] = seed
        return out


def _binomial_result(n_errors: int, trials: int, **counts) -> SimResult:
    p = n_errors / trials
    half = _Z95 * math.sqrt(p * (1.0 - p) / trials)
    return SimResult(p, half, trials, n_errors, **counts)


# ---------------------------------------------------------------------------
# MAC simulation
# ---------------------------------------------------------------------------


def _mac_chunk(cfg: MacSimConfig, lo: int, hi: int) -> int:
    errors = 0
    for trial in range(lo, hi):
        rng = trial_rng(cfg.master_seed, _STREAM_MAC, trial)
        cb1 = Codebook.sample(cfg.m1, cfg.n, cfg.pp.p1, rng)
        cb2 = Codebook.sample(cfg.m2, cfg.n, cfg.pp.p2, rng)
        w1 = int(rng.integers(cfg.m1))
        w2 = int(rng.integers(cfg.m2))
        z = cfg.noise.sample(rng, cfg.n)
        y = cb1.rows[w1] + cb2.rows[w2] + z
        if cfg.decoder == "jnn":
            decoded = codec.jnn_decode_mac(y, cb1, cb2)
        else:
            decoded = codec.sic_decode_mac(y, cb1, cb2)
        errors += decoded != (w1, w2)
    return errors


def simulate_mac(cfg: MacSimConfig) -> SimResult:
    """Ensemble error probability of the actual coding scheme."""
    errors = sum(_run_chunks(_mac_chunk, cfg, cfg.trials))
    return _binomial_result(errors, cfg.trials)


# ---------------------------------------------------------------------------
# RAC simulation
# ---------------------------------------------------------------------------


def _rac_chunk(cfg: RacSimConfig, lo: int, hi: int) -> tuple[int, int, int, int]:
    errors = reps = times = msgs = 0
    stop_times = cfg.layout
    for trial in range(lo, hi):
        rng = trial_rng(cfg.master_seed, _STREAM_RAC, trial)
        cb = RacCodebook.sample(cfg.m, cfg.stage_lengths, cfg.p, rng)
        ws = rng.integers(cfg.m, size=cfg.k_active)
        z = cfg.noise.sample(rng, stop_times[-1])
        y = cb.rows[ws].sum(axis=0) + z

        rep = len(set(ws.tolist())) < cfg.k_active
        stop = None
        for t_stage in range(1, cfg.cap_k + 1):
            n_t = stop_times[t_stage - 1]
            if codec.stopping_stat(y[:n_t], t_stage, cfg.p) <= cfg.lambdas[t_stage - 1]:
                stop = t_stage
                break
        time_err = stop != cfg.k_active
        msg_err = False
        if not time_err and not rep:
            n_k = stop_times[cfg.k_active - 1]
            truth = sorted(ws.tolist())
            if cfg.decoder == "jnn":
                decoded = list(codec.rac_jnn_decode(y[:n_k], cb, cfg.k_active, cfg.budget))
            else:
                decoded = sorted(codec.rac_sic_decode(y[:n_k], cb, cfg.k_active))
            msg_err = decoded != truth

        errors += rep or time_err or msg_err
        if rep:
            reps += 1
        elif time_err:
            times += 1
        elif msg_err:
            msgs += 1
    return errors, reps, times, msgs


def simulate_rac(cfg: RacSimConfig) -> SimResult:
    """Full rateless protocol: staged transmission, stopping rule, decoding."""
    parts = _run_chunks(_rac_chunk, cfg, cfg.trials)
    errors, reps, times, msgs = (sum(col) for col in zip(*parts))
    return _binomial_result(
        errors, cfg.trials, rep_count=reps, time_count=times, msg_count=msgs
    )


# ---------------------------------------------------------------------------
# RCU bound and g-function estimation
# ---------------------------------------------------------------------------


def rcu_bound_mc(cfg: MacSimConfig, inner_samples: int) -> float:
    """Nested Monte Carlo evaluation of the random-coding union bound.

    Outer samples follow ``cfg.trials``; each conditions on a fresh
    (X1, X2, Y) draw and estimates the per-competitor beat probabilities
    with ``inner_samples`` fresh codewords.  The JNN form clips the inner
    sum at 1; the SIC form adds two clipped stages (and is finally capped
    at 1, which any error probability trivially satisfies).
    """
    if inner_samples < 100:
        raise ValueError("inner_samples must be >= 100")
    n, p1, p2 = cfg.n, cfg.pp.p1, cfg.pp.p2
    total = 0.0
    for trial in range(cfg.trials):
        rng = trial_rng(cfg.master_seed, _STREAM_RCU, trial)
        x1 = codec.sample_sphere(n, p1, rng)
        x2 = codec.sample_sphere(n, p2, rng)
        z = cfg.noise.sample(rng, n)
        y = x1 + x2 + z
        fresh1 = codec.sample_sphere_rows(inner_samples, n, p1, rng)
        fresh2 = codec.sample_sphere_rows(inner_samples, n, p2, rng)

        if cfg.decoder == "jnn":
            q1 = _beat_frac_conditional(fresh1, x1, x2, y, p1)
            q2 = _beat_frac_conditional(fresh2, x2, x1, y, p2)
            q12 = _beat_frac_joint(fresh1, fresh2, x1, x2, y, p1, p2)
            val = min(
                1.0,
                (cfg.m1 - 1) * q1 + (cfg.m2 - 1) * q2 + (cfg.m1 - 1) * (cfg.m2 - 1) * q12,
            )
        else:
            q1 = _beat_frac_sic_first(fresh1, x1, y, p1, p2)
            q2 = _beat_frac_conditional(fresh2, x2, x1, y, p2)
            val = min(1.0, min(1.0, (cfg.m1 - 1) * q1) + min(1.0, (cfg.m2 - 1) * q2))
        total += val
    return total / cfg.trials


def _beat_frac_conditional(fresh, x_true, x_other, y, p_self) -> float:
    dens = _density_conditional_rows(fresh, np.asarray(x_other, float), y, p_self)
    true_val = codec.info_density_mac_conditional(x_true, x_other, y, p_self)
    return float((dens >= true_val).mean())


def _beat_frac_joint(fresh1, fresh2, x1, x2, y, p1, p2) -> float:
    dens = _density_joint_rows(fresh1, fresh2, y, p1, p2)
    true_val = codec.info_density_mac_joint(x1, x2, y, p1, p2)
    return float((dens >= true_val).mean())


def _beat_frac_sic_first(fresh, x1, y, p1, p2) -> float:
    dens = _density_sic_first_rows(fresh, y, p1, p2)
    true_val = codec.info_density_sic_first(x1, y, p1, p2)
    return float((dens >= true_val).mean())


def estimate_g(
    t_grid,
    kind: str,
    y,
    p1: float,
    p2: float | None = None,
    x_cond=None,
    samples: int = 1000,
    seed: int = 0,
) -> np.ndarray:
    """Exceedance frequencies ghat(t) = Pr{density(fresh codeword) >= t}.

    ``kind`` selects which density the fresh codeword enters:
    ``i1_given_x2`` / ``i2_given_x1`` (conditional, needs ``x_cond``),
    ``i12`` (fresh pair), or ``sic_first``.  The estimate is exactly
    non-increasing in t by construction.
    """
    if samples < 1000:
        raise ValueError("samples must be >= 1000")
    y = np.asarray(y, dtype=float)
    n = y.size
    rng = trial_rng(seed, _STREAM_G, 0)
    if kind in ("i1_given_x2", "i2_given_x1"):
        if x_cond is None:
            raise ValueError(f"kind {kind} requires the conditioning codeword x_cond")
        p_self = p1 if kind == "i1_given_x2" else p2
        fresh = codec.sample_sphere_rows(samples, n, p_self, rng)
        dens = _density_conditional_rows(fresh, np.asarray(x_cond, float), y, p_self)
    elif kind == "i12":
        if p2 is None:
            raise ValueError("kind i12 requires both powers")
        f1 = codec.sample_sphere_rows(samples, n, p1, rng)
        f2 = codec.sample_sphere_rows(samples, n, p2, rng)
        dens = _density_joint_rows(f1, f2, y, p1, p2)
    elif kind == "sic_first":
        if p2 is None:
            raise ValueError("kind sic_first requires both powers")
        fresh = codec.sample_sphere_rows(samples, n, p1, rng)
        dens = _density_sic_first_rows(fresh, y, p1, p2)
    else:
        raise ValueError(f"unknown g-function kind {kind!r}")
    t_grid = np.asarray(list(t_grid), dtype=float)
    return np.array([(dens >= t).mean() for t in t_grid])


# vectorized density evaluations over rows of fresh codewords


def _density_conditional_rows(rows, x_other, y, p_self) -> np.ndarray:
    n = y.size
    cond = y - x_other
    resid = cond[None, :] - rows
    return (
        n * codec.capacity(p_self)
        + (cond @ cond) / (2.0 * (1.0 + p_self))
        - np.einsum("ij,ij->i", resid, resid) / 2.0
    )


def _density_joint_rows(rows1, rows2, y, p1, p2) -> np.ndarray:
    n = y.size
    ps = p1 + p2
    resid = y[None, :] - rows1 - rows2
    return (
        n * codec.capacity(ps)
        + (y @ y) / (2.0 * (1.0 + ps))
        - np.einsum("ij,ij->i", resid, resid) / 2.0
    )


def _density_sic_first_rows(rows, y, p1, p2) -> np.ndarray:
    n = y.size
    resid = y[None, :] - rows
    return (
        n * codec.capacity(p1 / (1.0 + p2))
        + (y @ y) / (2.0 * (1.0 + p1 + p2))
        - np.einsum("ij,ij->i", resid, resid) / (2.0 * (1.0 + p2))
    )


def _run_chunks(chunk_fn, cfg, trials: int) -> list:
    workers = worker_count()
    if workers <= 1 or trials < 2 * workers:
        return [chunk_fn(cfg, 0, trials)]
    bounds = np.linspace(0, trials, workers + 1, dtype=int)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(chunk_fn, cfg, int(lo), int(hi))
            for lo, hi in zip(bounds[:-1], bounds[1:])
            if hi > lo
        ]
        return [f.result() for f in futures]
