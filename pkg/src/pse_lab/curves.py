"""The five progress functions as normalized displacement curves.

Each curve maps normalized time u in [0, 1] to a fill fraction p(u) with
p(0) = 0 and p(1) = 1. The non-constant curves differ in how speed is
distributed over the animation; `final_second_ordering` ranks them by mean
velocity over the last fifth of the animation (the last second of a 5 s bar),
which is the quantity that drives the perceived-duration ordering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum


class CurveId(str, Enum):
    CONSTANT = "constant"
    BEZIER = "bezier"
    SLOW_DOWN = "slow_down"
    SPEED_UP = "speed_up"
    ELASTICITY = "elasticity"


#: The four experimental curves in canonical (report) order.
NON_CONSTANT_CURVES = (
    CurveId.BEZIER,
    CurveId.SPEED_UP,
    CurveId.SLOW_DOWN,
    CurveId.ELASTICITY,
)

ALL_CURVES = (CurveId.CONSTANT,) + NON_CONSTANT_CURVES

# Normalizer for the elasticity curve: p(u) = (e^u (1+u) - 1) / (2e - 1).
_ELASTIC_NORM = 2.0 * math.e - 1.0


class DomainError(ValueError):
    """Argument outside the curve's domain."""


class EmptyWindowError(ValueError):
    """Velocity window with u0 >= u1."""


@dataclass(frozen=True)
class CurveSpec:
    """One configured progress curve.

    bezier_controls are the two interior control values (c1, c2) of the
    cubic Bernstein form and only affect CurveId.BEZIER; the default (0, 1)
    gives the canonical speeds-up-then-slows-down ease 3u^2 - 2u^3.
    """

    id: CurveId
    bezier_controls: tuple[float, float] = (0.0, 1.0)
    track_px: int = 600
    duration_s: float = 5.0

    def __post_init__(self):
        if self.track_px <= 0:
            raise ValueError(f"track_px must be positive, got {self.track_px}")
        if self.duration_s <= 0:
            raise ValueError(f"duration_s must be positive, got {self.duration_s}")


def default_curves() -> dict[CurveId, CurveSpec]:
    """The five default-parameterized curves."""
    return {cid: CurveSpec(id=cid) for cid in ALL_CURVES}


def progress_fraction(spec: CurveSpec, u: float) -> float:
    """Fill fraction p(u) for normalized time u in [0, 1]."""
    if not 0.0 <= u <= 1.0:
        raise DomainError(f"u must be in [0, 1], got {u}")
    cid = spec.id
    if cid is CurveId.CONSTANT:
        return u
    if cid is CurveId.SPEED_UP:
        return u * u
    if cid is CurveId.SLOW_DOWN:
        return 2.0 * u - u * u
    if cid is CurveId.BEZIER:
        c1, c2 = spec.bezier_controls
        omu = 1.0 - u
        return 3.0 * u * omu * omu * c1 + 3.0 * u * u * omu * c2 + u ** 3
    if cid is CurveId.ELASTICITY:
        return (math.exp(u) * (1.0 + u) - 1.0) / _ELASTIC_NORM
    raise DomainError(f"unknown curve id {cid!r}")


def progress_rate(spec: CurveSpec, u: float) -> float:
    """Instantaneous rate dp/du at u (closed form)."""
    if not 0.0 <= u <= 1.0:
        raise DomainError(f"u must be in [0, 1], got {u}")
    cid = spec.id
    if cid is CurveId.CONSTANT:
        return 1.0
    if cid is CurveId.SPEED_UP:
        return 2.0 * u
    if cid is CurveId.SLOW_DOWN:
        return 2.0 - 2.0 * u
    if cid is CurveId.BEZIER:
        c1, c2 = spec.bezier_controls
        omu = 1.0 - u
        return 3.0 * omu * omu * c1 + 6.0 * u * omu * (c2 - c1) + 3.0 * u * u * (1.0 - c2)
    if cid is CurveId.ELASTICITY:
        return math.exp(u) * (2.0 + u) / _ELASTIC_NORM
    raise DomainError(f"unknown curve id {cid!r}")


def pixel_position(spec: CurveSpec, elapsed: float) -> int:
    """Bar fill width in pixels after `elapsed` seconds.

    Rendering clamps to [0, track_px] so overshooting parameterizations
    never paint outside the track; at elapsed == duration_s the fill is
    exactly track_px.
    """
    if not 0.0 <= elapsed <= spec.duration_s:
        raise DomainError(f"elapsed must be in [0, {spec.duration_s}], got {elapsed}")
    frac = progress_fraction(spec, elapsed / spec.duration_s)
    frac = min(max(frac, 0.0), 1.0)
    return int(math.floor(spec.track_px * frac + 0.5))


def mean_velocity(spec: CurveSpec, u0: float, u1: float) -> float:
    """Mean velocity (p(u1) - p(u0)) / (u1 - u0) in fraction per unit time."""
    if u0 >= u1:
        raise EmptyWindowError(f"empty window [{u0}, {u1}]")
    if u0 < 0.0 or u1 > 1.0:
        raise DomainError(f"window [{u0}, {u1}] outside [0, 1]")
    return (progress_fraction(spec, u1) - progress_fraction(spec, u0)) / (u1 - u0)


#: Window over which the final-period velocity is evaluated (the last second
#: of a 5 s animation in normalized time).
FINAL_WINDOW = (0.8, 1.0)


def final_second_ordering(
    specs: dict[CurveId, CurveSpec] | None = None,
    include_constant: bool = False,
) -> list[tuple[CurveId, float]]:
    """Curves ranked by mean velocity over the final window, descending.

    With defaults the non-constant ranking is
    speed_up > elasticity > bezier > slow_down; the constant curve sits at
    exactly 1.0, between elasticity and bezier.
    """
    specs = specs if specs is not None else default_curves()
    ids = [cid for cid in specs if include_constant or cid is not CurveId.CONSTANT]
    ranked = [(cid, mean_velocity(specs[cid], *FINAL_WINDOW)) for cid in ids]
    ranked.sort(key=lambda pair: pair[1], reverse=True)
    return ranked


def velocity_ordering(specs: dict[CurveId, CurveSpec] | None = None) -> list[CurveId]:
    """Non-constant curve ids ordered by final-window velocity, descending."""
    return [cid for cid, _ in final_second_ordering(specs, include_constant=False)]


def sample_curves(
    specs: dict[CurveId, CurveSpec] | None = None,
    samples: int = 501,
) -> list[tuple[str, float, float, float]]:
    """(curve, u, fraction, velocity) rows on a uniform grid, for CSV export."""
    if samples < 2:
        raise ValueError(f"samples must be >= 2, got {samples}")
    specs = specs if specs is not None else default_curves()
    rows = []
    for cid, spec in specs.items():
        for i in range(samples):
            u = i / (samples - 1)
            rows.append((cid.value, u, progress_fraction(spec, u), progress_rate(spec, u)))
    return rows
