"""Model parameters, execution geometry and regime classification.

Volumes are in units where the queue diffusion coefficient is 1; prices are
counted in half ticks, so every queue depletion moves the mid-price by +-1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from enum import Enum
from typing import Any, Mapping


class ParameterError(ValueError):
    """Invalid model or simulation parameter; ``field`` names the culprit."""

    def __init__(self, field_name: str, message: str):
        super().__init__(message)
        self.field = field_name


@dataclass(frozen=True)
class ModelParams:
    """Queue dynamics ``dV = -mu dt + dW`` on both best queues, with resets.

    After the ask empties the book reverts to ``(v_sml, v_lrg)`` (bid, ask);
    after the bid empties, to ``(v_lrg, v_sml)``.
    """

    mu: float = 0.0
    v_sml: float = 1.0
    v_lrg: float = 3.0
    v0_bid: float = 2.0
    v0_ask: float = 2.0
    diffusion: float = field(default=1.0)
    tick: float = field(default=1.0)

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ParameterError(f.name, f"{f.name} must be a finite number")
            object.__setattr__(self, f.name, float(value))
        if self.mu < 0:
            raise ParameterError("mu", "mu must be >= 0")
        if self.diffusion != 1.0:
            raise ParameterError("diffusion", "diffusion is fixed at 1")
        if self.tick != 1.0:
            raise ParameterError("tick", "tick is fixed at 1 (half-tick units)")
        if self.v_sml <= 0:
            raise ParameterError("v_sml", "v_sml must be > 0")
        if not self.v_sml < self.v_lrg:
            raise ParameterError("v_sml", "v_sml < v_lrg required")
        if self.v0_bid <= 0:
            raise ParameterError("v0_bid", "v0_bid must be > 0")
        if self.v0_ask <= 0:
            raise ParameterError("v0_ask", "v0_ask must be > 0")

    @property
    def up_state(self) -> tuple[float, float]:
        """(bid, ask) right after the ask queue is depleted."""
        return (self.v_sml, self.v_lrg)

    @property
    def down_state(self) -> tuple[float, float]:
        """(bid, ask) right after the bid queue is depleted."""
        return (self.v_lrg, self.v_sml)

    @property
    def start_state(self) -> tuple[float, float]:
        return (self.v0_bid, self.v0_ask)


_REQUIRED = ("mu", "v_sml", "v_lrg", "v0_bid", "v0_ask")


def validate_params(raw: Mapping[str, Any] | ModelParams) -> ModelParams:
    """Build a :class:`ModelParams` from a plain mapping.

    ``v0`` may be given as a ``(bid, ask)`` pair instead of ``v0_bid`` and
    ``v0_ask``.  Unknown keys are rejected.
    """
    if isinstance(raw, ModelParams):
        return ModelParams(**{f.name: getattr(raw, f.name) for f in fields(raw)})
    data = dict(raw)
    if "v0" in data:
        v0 = data.pop("v0")
        try:
            data.setdefault("v0_bid", v0[0])
            data.setdefault("v0_ask", v0[1])
        except (TypeError, IndexError):
            data.setdefault("v0_bid", v0)
            data.setdefault("v0_ask", v0)
    known = {f.name for f in fields(ModelParams)}
    for key in data:
        if key not in known:
            raise ParameterError(key, f"unknown parameter: {key}")
    for key in _REQUIRED:
        if key not in data:
            raise ParameterError(key, f"missing parameter: {key}")
    return ModelParams(**data)


@dataclass(frozen=True)
class StripGeometry:
    """Execution threshold: the order is filled when the ask volume reaches ``q``."""

    q: float

    def __post_init__(self):
        if not isinstance(self.q, (int, float)) or math.isnan(self.q) or self.q <= 0:
            raise ParameterError("q", "q must be > 0")
        object.__setattr__(self, "q", float(self.q))


class Regime(str, Enum):
    INSTANT = "instant"
    BELOW_VLRG = "below_vlrg"
    GENERAL = "general"


_REGIME_ORDER = {Regime.INSTANT: 0, Regime.BELOW_VLRG: 1, Regime.GENERAL: 2}


def regime_rank(regime: Regime) -> int:
    return _REGIME_ORDER[regime]


def classify_regime(params: ModelParams, geom: StripGeometry) -> Regime:
    """``instant`` if the order can be filled at once; ``below_vlrg`` if a
    single up move fills it; otherwise ``general``."""
    if geom.q <= params.v0_ask:
        return Regime.INSTANT
    if geom.q <= params.v_lrg:
        return Regime.BELOW_VLRG
    return Regime.GENERAL


@dataclass(frozen=True)
class ResetDistribution:
    """Volumes drawn after a depletion.

    ``lrg_support``/``sml_support`` are sampled uniformly and independently.
    The deterministic mode has one-point supports.
    """

    mode: str
    lrg_support: tuple[float, ...]
    sml_support: tuple[float, ...]

    def __post_init__(self):
        if self.mode not in ("deterministic", "discrete-uniform"):
            raise ParameterError("mode", f"unknown reset mode: {self.mode}")
        lrg = tuple(float(v) for v in self.lrg_support)
        sml = tuple(float(v) for v in self.sml_support)
        if not lrg or not sml:
            raise ParameterError("support", "reset supports must be nonempty")
        if any(v <= 0 or not math.isfinite(v) for v in lrg + sml):
            raise ParameterError("support", "reset volumes must be positive")
        if self.mode == "deterministic" and (len(lrg) != 1 or len(sml) != 1):
            raise ParameterError("support", "deterministic mode takes single values")
        object.__setattr__(self, "lrg_support", lrg)
        object.__setattr__(self, "sml_support", sml)

    @classmethod
    def deterministic(cls, params: ModelParams) -> "ResetDistribution":
        return cls("deterministic", (params.v_lrg,), (params.v_sml,))

    @classmethod
    def stochastic(cls) -> "ResetDistribution":
        """Uniform resets with large volumes in {2,...,4} and small in {0.5,1,1.5}."""
        return cls("discrete-uniform", (2.0, 2.5, 3.0, 3.5, 4.0), (0.5, 1.0, 1.5))

    @property
    def mean_lrg(self) -> float:
        return sum(self.lrg_support) / len(self.lrg_support)

    @property
    def mean_sml(self) -> float:
        return sum(self.sml_support) / len(self.sml_support)
