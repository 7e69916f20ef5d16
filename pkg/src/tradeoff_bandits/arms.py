"""Arm models, bandit instances and reproducible random streams."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

# Relative slack when checking that a Bernoulli (mean, variance) pair is consistent.
_BERNOULLI_RTOL = 1e-9
_BLOCK = 512


class Family(str, enum.Enum):
    GAUSSIAN = "gaussian"
    SCALED_BERNOULLI = "scaled_bernoulli"
    SCALED_BETA = "scaled_beta"


@dataclass(frozen=True)
class ArmModel:
    """A reward distribution described by its first two moments.

    Bounded families live on ``[low, high]``; ``low``/``high`` are ignored for
    the Gaussian family.
    """

    mean: float
    variance: float
    family: Family = Family.GAUSSIAN
    low: float = 0.0
    high: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", Family(self.family))
        if not (math.isfinite(self.mean) and math.isfinite(self.variance)):
            raise ValueError(f"arm moments must be finite, got ({self.mean}, {self.variance})")
        if self.variance < 0:
            raise ValueError(f"variance must be >= 0, got {self.variance}")
        if self.family is not Family.GAUSSIAN:
            self._check_bounded()

    @property
    def sigma(self) -> float:
        return math.sqrt(self.variance)

    def _unit_moments(self) -> tuple[float, float]:
        span = self.high - self.low
        return (self.mean - self.low) / span, self.variance / span**2

    def _check_bounded(self) -> None:
        if not self.high > self.low:
            raise ValueError(f"empty support [{self.low}, {self.high}]")
        m, v = self._unit_moments()
        if not 0.0 <= m <= 1.0:
            raise ValueError(
                f"mean {self.mean} lies outside the support [{self.low}, {self.high}]"
            )
        max_var = m * (1.0 - m)
        if self.family is Family.SCALED_BERNOULLI:
            if not math.isclose(v, max_var, rel_tol=_BERNOULLI_RTOL, abs_tol=1e-15):
                raise ValueError(
                    f"a Bernoulli arm with mean {self.mean} on [{self.low}, {self.high}] "
                    f"has variance {max_var * (self.high - self.low) ** 2}, got {self.variance}"
                )
        elif v > 0 and not v < max_var:
            raise ValueError(
                f"variance {self.variance} infeasible for a Beta arm with mean {self.mean} "
                f"on [{self.low}, {self.high}] (must be < {max_var * (self.high - self.low) ** 2})"
            )

    def sample(self, rng: "RngStream") -> float:
        return sample(self, rng)


@dataclass(frozen=True)
class BanditInstance:
    arms: tuple[ArmModel, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "arms", tuple(self.arms))
        if len(self.arms) < 2:
            raise ValueError(f"a bandit needs at least 2 arms, got {len(self.arms)}")

    @property
    def k(self) -> int:
        return len(self.arms)

    @property
    def means(self) -> np.ndarray:
        return np.array([a.mean for a in self.arms], dtype=float)

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([a.sigma for a in self.arms], dtype=float)

    @property
    def variances(self) -> np.ndarray:
        return np.array([a.variance for a in self.arms], dtype=float)

    def scaled(self, c: float) -> "BanditInstance":
        """Instance with every reward multiplied by ``c > 0``."""
        if c <= 0:
            raise ValueError("scale factor must be positive")
        return BanditInstance(
            tuple(
                ArmModel(a.mean * c, a.variance * c * c, a.family, a.low * c, a.high * c)
                for a in self.arms
            )
        )


def make_instance(specs: Iterable[Sequence | ArmModel | dict]) -> BanditInstance:
    """Build a validated instance from ``(mean, variance[, family])`` tuples,
    mappings with the same keys, or ready-made :class:`ArmModel` objects."""
    arms = []
    for spec in specs:
        if isinstance(spec, ArmModel):
            arms.append(spec)
        elif isinstance(spec, dict):
            arms.append(ArmModel(**spec))
        else:
            arms.append(ArmModel(*spec))
    return BanditInstance(tuple(arms))


class RngStream:
    """Seedable PCG64 stream identified by ``(seed, stream_id)``.

    The generator is keyed through ``numpy.random.SeedSequence`` with the stream
    id as spawn key, so distinct ids give statistically independent streams.
    Draws are buffered in blocks; the n-th value of a given kind does not depend
    on the block size.
    """

    def __init__(self, seed: int, stream_id: int = 0) -> None:
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(self.seed & (2**64 - 1), spawn_key=(self.stream_id & (2**64 - 1),))
        self.generator = np.random.Generator(np.random.PCG64(ss))
        self._normals: list[float] = []
        self._uniforms: list[float] = []
        self.draws = 0

    def standard_normal(self) -> float:
        if not self._normals:
            self._normals = self.generator.standard_normal(_BLOCK).tolist()[::-1]
        self.draws += 1
        return self._normals.pop()

    def random(self) -> float:
        if not self._uniforms:
            self._uniforms = self.generator.random(_BLOCK).tolist()[::-1]
        self.draws += 1
        return self._uniforms.pop()

    def beta(self, a: float, b: float) -> float:
        self.draws += 1
        return float(self.generator.beta(a, b))


def sampler(arm: ArmModel, rng: RngStream):
    """Zero-argument callable drawing successive rewards of ``arm`` from ``rng``.

    Produces exactly the values :func:`sample` would, with the per-draw
    attribute lookups hoisted out of the simulation loop.
    """
    if arm.family is Family.GAUSSIAN:
        mean, sd, normal = arm.mean, arm.sigma, rng.standard_normal
        return lambda: mean + sd * normal()
    return lambda: sample(arm, rng)


def sample(arm: ArmModel, rng: RngStream) -> float:
    """Draw one reward from ``arm`` using ``rng``."""
    if arm.family is Family.GAUSSIAN:
        return arm.mean + arm.sigma * rng.standard_normal()
    span = arm.high - arm.low
    m, v = arm._unit_moments()
    if arm.family is Family.SCALED_BERNOULLI:
        return arm.high if rng.random() < m else arm.low
    if v == 0.0:
        return arm.mean
    common = m * (1.0 - m) / v - 1.0
    return arm.low + span * rng.beta(m * common, (1.0 - m) * common)
