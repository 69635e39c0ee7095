"""Grid-based Bayesian adaptive estimation of the point of subjective equality.

A posterior over candidate PSE values T is maintained on a uniform grid.
Each forced-choice response is scored with a shifted-Weibull psychometric
likelihood and the next stimulus is placed at the posterior mean, so the
procedure homes in on the duration judged equal to the standard. All state
is immutable: `update` returns a new state, and replaying a trial log from
the prior reproduces the live posterior bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

_LN10 = math.log(10.0)

#: Stimulus quantum: proposals are snapped to whole frames of a 120 Hz display.
DEFAULT_QUANTUM_S = 1.0 / 120.0


class Response(str, Enum):
    """Judgment about the variable (constant-speed) bar relative to the standard."""

    VARIABLE_LONGER = "variable_longer"
    VARIABLE_SHORTER = "variable_shorter"


class InvalidParamsError(ValueError):
    """Psychometric parameters outside their valid ranges."""


class InvalidGridError(ValueError):
    """Grid with non-positive grain or empty span."""


class NoSolutionError(ValueError):
    """p_threshold not reachable between the asymptotes."""


class DegeneratePosteriorError(RuntimeError):
    """All likelihood-weighted posterior mass underflowed to zero."""


class OutOfGridError(ValueError):
    """Trial intensity outside the posterior grid."""


@dataclass(frozen=True)
class PsychometricParams:
    """Shifted-Weibull psychometric model parameters.

    beta is the slope per second of duration difference; gamma the lower
    asymptote; delta the lapse rate; p_threshold the response probability
    that defines the PSE.
    """

    beta: float = 3.5
    gamma: float = 0.01
    delta: float = 0.01
    p_threshold: float = 0.5

    def __post_init__(self):
        if not (self.beta > 0.0 and math.isfinite(self.beta)):
            raise InvalidParamsError(f"beta must be > 0, got {self.beta}")
        if not 0.0 <= self.gamma < 1.0:
            raise InvalidParamsError(f"gamma must be in [0, 1), got {self.gamma}")
        if not 0.0 <= self.delta < 0.5:
            raise InvalidParamsError(f"delta must be in [0, 0.5), got {self.delta}")
        if not 0.0 < self.p_threshold < 1.0:
            raise InvalidParamsError(f"p_threshold must be in (0, 1), got {self.p_threshold}")

    def to_dict(self) -> dict:
        return {"beta": self.beta, "gamma": self.gamma, "delta": self.delta,
                "p_threshold": self.p_threshold}

    @classmethod
    def from_dict(cls, payload: dict) -> "PsychometricParams":
        extra = set(payload) - {"beta", "gamma", "delta", "p_threshold"}
        if extra:
            raise InvalidParamsError(f"unknown psychometric fields: {sorted(extra)}")
        return cls(**payload)


def calibration_offset(params: PsychometricParams) -> float:
    """Offset epsilon such that psi(x=T; T) equals p_threshold exactly.

    Closed form: epsilon = log10(-ln q) / beta with
    q = (1 - delta - p_threshold + delta*gamma) / ((1 - delta)(1 - gamma)).
    q must fall strictly inside (0, 1), i.e. p_threshold must sit strictly
    between the asymptotes gamma and 1 - delta*(1 - gamma).
    """
    upper = 1.0 - params.delta * (1.0 - params.gamma)
    # compare against the asymptotes directly: the q numerator cancels
    # catastrophically near the boundaries and can leave q at ~1e-17 instead
    # of 0, slipping past a bare range check
    if not params.gamma < params.p_threshold < upper:
        raise NoSolutionError(
            f"p_threshold={params.p_threshold} is not strictly between the asymptotes "
            f"({params.gamma}, {upper})"
        )
    q = (1.0 - params.delta - params.p_threshold + params.delta * params.gamma) / (
        (1.0 - params.delta) * (1.0 - params.gamma)
    )
    if not 0.0 < q < 1.0:
        raise NoSolutionError(f"degenerate threshold fraction q={q}")
    return math.log10(-math.log(q)) / params.beta


def psi(params: PsychometricParams, x, T, epsilon: float):
    """Probability of a variable-longer response at intensity x, threshold T.

    psi(x; T) = delta*gamma
              + (1 - delta) * (1 - (1 - gamma) * exp(-10**(beta*(x - T + epsilon))))

    Accepts scalars or numpy arrays for x and T (broadcast).
    """
    arg = np.exp(_LN10 * (params.beta * (np.asarray(x) - np.asarray(T) + epsilon)))
    p = params.delta * params.gamma + (1.0 - params.delta) * (
        1.0 - (1.0 - params.gamma) * np.exp(-arg)
    )
    if np.ndim(p) == 0:
        return float(p)
    return p


@dataclass(frozen=True)
class PosteriorGrid:
    """Discretized posterior density over candidate PSE values (seconds)."""

    t_min: float
    t_max: float
    grain: float
    density: np.ndarray

    def __post_init__(self):
        if self.grain <= 0.0 or self.t_min >= self.t_max:
            raise InvalidGridError(
                f"need grain > 0 and t_min < t_max, got grain={self.grain}, "
                f"[{self.t_min}, {self.t_max}]"
            )
        n = grid_size(self.t_min, self.t_max, self.grain)
        if len(self.density) != n:
            raise InvalidGridError(f"density length {len(self.density)} != grid size {n}")
        object.__setattr__(self, "density", np.asarray(self.density, dtype=float))

    @property
    def values(self) -> np.ndarray:
        """Grid points T_i = t_min + i*grain."""
        return self.t_min + self.grain * np.arange(len(self.density))


def grid_size(t_min: float, t_max: float, grain: float) -> int:
    """floor((t_max - t_min)/grain) + 1, robust to float division jitter."""
    if grain <= 0.0 or t_min >= t_max:
        raise InvalidGridError(f"need grain > 0 and t_min < t_max, got grain={grain}, [{t_min}, {t_max}]")
    return int(math.floor((t_max - t_min) / grain + 1e-9)) + 1


@dataclass(frozen=True)
class TrialObservation:
    """One scored trial: the shown variable duration and the judgment."""

    intensity: float
    response: Response


@dataclass(frozen=True)
class QuestState:
    """Posterior, psychometric model, and trial history for one curve."""

    params: PsychometricParams
    grid: PosteriorGrid
    history: tuple[TrialObservation, ...] = ()
    epsilon: float = 0.0

    @property
    def t_min(self) -> float:
        return self.grid.t_min

    @property
    def t_max(self) -> float:
        return self.grid.t_max


def create_quest(
    prior_mean: float,
    prior_sd: float,
    t_min: float,
    t_max: float,
    grain: float,
    params: PsychometricParams | None = None,
) -> QuestState:
    """Fresh state with a Gaussian prior over the PSE, normalized on the grid."""
    params = params if params is not None else PsychometricParams()
    if prior_sd <= 0.0:
        raise InvalidParamsError(f"prior_sd must be > 0, got {prior_sd}")
    n = grid_size(t_min, t_max, grain)  # raises InvalidGridError first
    if not t_min < prior_mean < t_max:
        raise InvalidParamsError(
            f"prior_mean {prior_mean} outside grid ({t_min}, {t_max})"
        )
    epsilon = calibration_offset(params)
    values = t_min + grain * np.arange(n)
    z = (values - prior_mean) / prior_sd
    log_density = -0.5 * z * z
    density = np.exp(log_density - log_density.max())
    density /= density.sum()
    grid = PosteriorGrid(t_min=t_min, t_max=t_max, grain=grain, density=density)
    return QuestState(params=params, grid=grid, history=(), epsilon=epsilon)


def update(state: QuestState, obs: TrialObservation) -> QuestState:
    """Posterior update for one observation; returns a new state.

    Computed in log space: log posterior = log prior + log likelihood, then
    renormalized. Raises DegeneratePosteriorError only if the renormalization
    constant underflows.
    """
    if not math.isfinite(obs.intensity):
        raise OutOfGridError(f"intensity must be finite, got {obs.intensity}")
    values = state.grid.values
    likelihood = psi(state.params, obs.intensity, values, state.epsilon)
    if obs.response is Response.VARIABLE_SHORTER:
        likelihood = 1.0 - likelihood
    with np.errstate(divide="ignore"):
        log_post = np.log(state.grid.density) + np.log(likelihood)
    peak = log_post.max()
    if not np.isfinite(peak):
        raise DegeneratePosteriorError("all posterior mass underflowed to zero")
    density = np.exp(log_post - peak)
    norm = density.sum()
    if norm <= 0.0 or not np.isfinite(norm):
        raise DegeneratePosteriorError("posterior renormalization constant underflowed")
    density /= norm
    grid = replace(state.grid, density=density)
    return replace(state, grid=grid, history=state.history + (obs,))


def estimate_pse(state: QuestState) -> float:
    """Posterior mean of the PSE in seconds."""
    return float(np.dot(state.grid.values, state.grid.density))


def posterior_sd(state: QuestState) -> float:
    """Posterior standard deviation of the PSE in seconds."""
    values = state.grid.values
    mean = float(np.dot(values, state.grid.density))
    var = float(np.dot(values * values, state.grid.density)) - mean * mean
    return math.sqrt(max(var, 0.0))


def posterior_mode(state: QuestState) -> float:
    """Grid point with maximal posterior density."""
    return float(state.grid.values[int(np.argmax(state.grid.density))])


def posterior_quantile(state: QuestState, q: float = 0.5) -> float:
    """Smallest grid point whose cumulative posterior mass reaches q."""
    if not 0.0 < q < 1.0:
        raise ValueError(f"quantile must be in (0, 1), got {q}")
    cdf = np.cumsum(state.grid.density)
    idx = int(np.searchsorted(cdf, q))
    return float(state.grid.values[min(idx, len(cdf) - 1)])


def quantize(value: float, t_min: float, t_max: float, quantum: float) -> float:
    """Clamp to [t_min, t_max], then snap to the nearest in-range quantum multiple."""
    value = min(max(value, t_min), t_max)
    snapped = round(value / quantum) * quantum
    if snapped > t_max:
        snapped -= quantum
    elif snapped < t_min:
        snapped += quantum
    return min(max(snapped, t_min), t_max)


def next_intensity(
    state: QuestState,
    quantum: float = DEFAULT_QUANTUM_S,
    rule: str = "mean",
    quantile: float = 0.5,
) -> float:
    """Placement for the next trial: a posterior statistic snapped to the quantum.

    The default rule is the posterior mean; "mode" and "quantile" are
    available but non-default. Stimuli are frame-locked, so the returned
    duration is the value actually shown and later scored.
    """
    if rule == "mean":
        target = estimate_pse(state)
    elif rule == "mode":
        target = posterior_mode(state)
    elif rule == "quantile":
        target = posterior_quantile(state, quantile)
    else:
        raise ValueError(f"unknown placement rule {rule!r}")
    return quantize(target, state.t_min, state.t_max, quantum)


def rebuild(
    trials: Iterable[TrialObservation],
    prior_mean: float,
    prior_sd: float,
    t_min: float,
    t_max: float,
    grain: float,
    params: PsychometricParams | None = None,
) -> QuestState:
    """Replay a logged trial sequence from the prior (audit path).

    Identical arithmetic to the live run: fold `update` over a fresh state.
    Raises OutOfGridError for intensities outside [t_min, t_max].
    """
    state = create_quest(prior_mean, prior_sd, t_min, t_max, grain, params)
    for obs in trials:
        if not t_min <= obs.intensity <= t_max:
            raise OutOfGridError(
                f"trial intensity {obs.intensity} outside grid [{t_min}, {t_max}]"
            )
        state = update(state, obs)
    return state


@dataclass(frozen=True)
class QuestConfig:
    """Bundle of engine settings shared by sessions, simulations, and the CLI.

    Defaults: Gaussian prior 5.0 +/- 1.5 s on a [1, 11] s grid with 5 ms
    grain, covering the plausible PSE range by more than four prior sds;
    proposals snap to 120 Hz frames.
    """

    prior_mean_s: float = 5.0
    prior_sd_s: float = 1.5
    t_min_s: float = 1.0
    t_max_s: float = 11.0
    grain_s: float = 0.005
    params: PsychometricParams = field(default_factory=PsychometricParams)
    quantum_s: float = DEFAULT_QUANTUM_S
    placement: str = "mean"

    def create_state(self) -> QuestState:
        return create_quest(
            self.prior_mean_s, self.prior_sd_s, self.t_min_s, self.t_max_s,
            self.grain_s, self.params,
        )

    def propose(self, state: QuestState) -> float:
        return next_intensity(state, self.quantum_s, self.placement)

    def rebuild(self, trials: Sequence[TrialObservation]) -> QuestState:
        return rebuild(
            trials, self.prior_mean_s, self.prior_sd_s, self.t_min_s,
            self.t_max_s, self.grain_s, self.params,
        )

    def to_dict(self) -> dict:
        return {
            "prior_mean_s": self.prior_mean_s,
            "prior_sd_s": self.prior_sd_s,
            "t_min_s": self.t_min_s,
            "t_max_s": self.t_max_s,
            "grain_s": self.grain_s,
            "params": self.params.to_dict(),
            "quantum_s": self.quantum_s,
            "placement": self.placement,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "QuestConfig":
        data = dict(payload)
        params = data.pop("params", None)
        known = {"prior_mean_s", "prior_sd_s", "t_min_s", "t_max_s", "grain_s",
                 "quantum_s", "placement"}
        extra = set(data) - known
        if extra:
            raise InvalidGridError(f"unknown quest config fields: {sorted(extra)}")
        if params is not None:
            data["params"] = PsychometricParams.from_dict(params)
        return cls(**data)
