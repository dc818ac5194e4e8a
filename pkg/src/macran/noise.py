"""Additive noise models normalized to unit second moment.

Every model produced here satisfies E[Z^2] = 1 exactly (by analytic
normalization, not empirical rescaling) and has finite fourth and sixth
moments.  The fourth moment ``xi`` is the only noise statistic the rate
formulas consume, so it is computed in closed form at construction time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_SQRT3 = math.sqrt(3.0)
_LAPLACE_SCALE = 1.0 / math.sqrt(2.0)  # Laplace(b) has variance 2 b^2

KINDS = ("gaussian", "uniform", "laplace", "custom-discrete")


@dataclass(frozen=True)
class NoiseModel:
    """Samplable real-valued noise with E[Z^2] = 1.

    Immutable after construction and safe to share between threads or
    processes; sampling always goes through a caller-supplied
    ``numpy.random.Generator`` so parallel trials never share RNG state.

    Attributes:
        kind: one of ``KINDS``.
        xi: exact fourth moment E[Z^4] of the normalized distribution.
        m6: exact sixth moment E[Z^6] (finite for every offered kind).
        values/probs: normalized support of a custom-discrete model,
            ``None`` for the continuous kinds.
    """

    kind: str
    xi: float
    m6: float
    values: tuple[float, ...] | None = None
    probs: tuple[float, ...] | None = None

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "gaussian":
            return rng.standard_normal(size)
        if self.kind == "uniform":
            return rng.uniform(-_SQRT3, _SQRT3, size)
        if self.kind == "laplace":
            return rng.laplace(0.0, _LAPLACE_SCALE, size)
        return rng.choice(np.asarray(self.values), size=size, p=np.asarray(self.probs))

    def to_config(self) -> dict:
        """Round-trippable ``{kind, params}`` description for config files."""
        if self.kind == "custom-discrete":
            support = [[v, p] for v, p in zip(self.values, self.probs)]
            return {"kind": self.kind, "params": {"support": support}}
        return {"kind": self.kind, "params": {}}


def make_noise(kind: str, params: dict | None = None) -> NoiseModel:
    """Construct a noise model of the given kind.

    The continuous kinds take no parameters.  ``custom-discrete`` expects
    ``params={"support": [(value, probability), ...]}``; the support is
    mean-centered and then scaled so the second moment is exactly 1 (a
    normalization convention, since only centered-and-scaled moments enter
    the analysis).

    Raises:
        ValueError: unknown kind, malformed parameters, or a degenerate
            (zero-variance) discrete distribution.
    """
    params = dict(params or {})
    if kind not in KINDS:
        raise ValueError(f"unknown noise kind {kind!r}; expected one of {KINDS}")

    if kind == "gaussian":
        _reject_params(kind, params)
        return NoiseModel(kind, xi=3.0, m6=15.0)
    if kind == "uniform":
        _reject_params(kind, params)
        # unit-variance uniform on [-sqrt(3), sqrt(3)]: E[Z^4] = 9/5, E[Z^6] = 27/7
        return NoiseModel(kind, xi=9.0 / 5.0, m6=27.0 / 7.0)
    if kind == "laplace":
        _reject_params(kind, params)
        # Laplace(1/sqrt(2)): E[Z^4] = 24 b^4 = 6, E[Z^6] = 720 b^6 = 90
        return NoiseModel(kind, xi=6.0, m6=90.0)

    support = params.pop("support", None)
    _reject_params(kind, params)
    if not support:
        raise ValueError("custom-discrete requires params={'support': [(value, prob), ...]}")
    values = np.array([float(v) for v, _ in support])
    probs = np.array([float(p) for _, p in support])
    if not (np.isfinite(values).all() and np.isfinite(probs).all()):
        raise ValueError("custom-discrete support must be finite")
    if (probs < 0).any():
        raise ValueError("custom-discrete probabilities must be non-negative")
    total = probs.sum()
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"custom-discrete probabilities sum to {total}, expected 1")
    probs = probs / total

    mean = float(probs @ values)
    centered = values - mean
    second = float(probs @ centered**2)
    if second <= 0.0:
        raise ValueError("custom-discrete distribution is degenerate (zero variance)")
    z = centered / math.sqrt(second)
    xi = float(probs @ z**4)
    m6 = float(probs @ z**6)
    return NoiseModel(kind, xi=xi, m6=m6, values=tuple(z), probs=tuple(probs))


def noise_from_config(cfg: dict) -> NoiseModel:
    """Build a model from a ``{kind, params}`` mapping (config-file form)."""
    if "kind" not in cfg:
        raise ValueError("noise config requires a 'kind' entry")
    return make_noise(cfg["kind"], cfg.get("params"))


def empirical_moments(
    model: NoiseModel, n_samples: int, seed: int
) -> tuple[float, float, float]:
    """Monte Carlo estimates of E[Z^2], E[Z^4], E[Z^6].

    Deterministic given ``seed``.  Used as a validation harness for the
    analytic normalization; requires at least 1000 samples so the standard
    errors are meaningful.
    """
    if n_samples < 1000:
        raise ValueError("n_samples must be >= 1000")
    rng = np.random.default_rng(seed)
    z = model.sample(rng, n_samples)
    z2 = z * z
    return float(z2.mean()), float((z2 * z2).mean()), float((z2 * z2 * z2).mean())


def _reject_params(kind: str, leftover: dict) -> None:
    if leftover:
        raise ValueError(f"unexpected parameters for noise kind {kind!r}: {sorted(leftover)}")
