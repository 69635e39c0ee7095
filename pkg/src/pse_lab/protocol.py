"""Experiment state machine: practice, main blocks, rests, persistence.

A session walks Practice -> Block(0..3) with Rest phases between blocks ->
Done. Each main trial pairs the constant standard with the current block's
curve at the duration proposed by that curve's adaptive staircase. The
participant answers in interval terms (first/second shorter); the protocol
derives the variable-longer judgment from presentation order.

Persistence is a per-session directory holding a manifest plus an
append-only JSON-lines trial log; `rebuild_session` replays a log through
the staircase to verify the recorded posteriors.
"""

from __future__ import annotations

import json
import re
import time
import uuid
from dataclasses import dataclass, field, asdict
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from .curves import NON_CONSTANT_CURVES, CurveId
from .quest import (
    QuestConfig,
    QuestState,
    Response,
    TrialObservation,
    estimate_pse,
    posterior_sd,
    update,
)

SCHEMA_VERSION = 1

# main trials between rests; with 40 trials per curve this puts a rest at
# every block boundary except the last
REST_EVERY_N_TRIALS = 40


class ProtocolError(Exception):
    """Base for session state machine violations."""


class InvalidConfigError(ProtocolError, ValueError):
    pass


class WrongPhaseError(ProtocolError):
    def __init__(self, message: str, phase: "Phase", remaining_rest_s: float | None = None):
        super().__init__(message)
        self.phase = phase
        self.remaining_rest_s = remaining_rest_s


class TrialInFlightError(ProtocolError):
    def __init__(self, plan: "TrialPlan"):
        super().__init__(f"trial {plan.trial_index} already in flight")
        self.plan = plan


class NoTrialInFlightError(ProtocolError):
    pass


class IncompleteSessionError(ProtocolError):
    pass


class LogTamperError(ProtocolError):
    """Replay of a persisted log contradicts its recorded values."""


class Phase(str, Enum):
    PRACTICE = "practice"
    BLOCK = "block"
    REST = "rest"
    DONE = "done"


class TrialPhase(str, Enum):
    PRACTICE = "practice"
    MAIN = "main"


class IntervalResponse(str, Enum):
    FIRST_SHORTER = "first_shorter"
    SECOND_SHORTER = "second_shorter"


_PARTICIPANT_ID_RE = re.compile(r"^[A-Za-z0-9._-]{1,64}$")
_SESSION_ID_RE = re.compile(r"^[A-Za-z0-9._-]{1,128}$")

# feedback trials must be objectively decidable, so the candidate set never
# contains the standard duration
_PRACTICE_POOL = (4.0, 5.0, 6.0)
_PRACTICE_FALLBACKS = (6.5, 7.0, 3.5)


def practice_durations(standard_duration_s: float) -> tuple[float, ...]:
    """Practice variable durations, excluding ties with the standard."""
    kept = [d for d in _PRACTICE_POOL if d != standard_duration_s]
    for fallback in _PRACTICE_FALLBACKS:
        if len(kept) >= len(_PRACTICE_POOL):
            break
        if fallback != standard_duration_s and fallback not in kept:
            kept.append(fallback)
    return tuple(kept)


@dataclass(frozen=True)
class SessionConfig:
    participant_id: str
    curves: tuple[CurveId, ...] | None = None
    trials_per_curve: int = 40
    practice_trials: int = 3
    standard_duration_s: float = 5.0
    fixation_s: float = 2.0
    rest_s: float = 60.0
    isi_s: float = 0.5
    quest: QuestConfig = field(default_factory=QuestConfig)
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.participant_id, str) or not _PARTICIPANT_ID_RE.match(self.participant_id):
            raise InvalidConfigError(
                "participant_id must be 1-64 chars of [A-Za-z0-9._-] "
                f"(it names the session directory), got {self.participant_id!r}"
            )
        if self.trials_per_curve < 1:
            raise InvalidConfigError(f"trials_per_curve must be >= 1, got {self.trials_per_curve}")
        if self.practice_trials < 0:
            raise InvalidConfigError(f"practice_trials must be >= 0, got {self.practice_trials}")
        for name in ("standard_duration_s", "fixation_s"):
            if not getattr(self, name) > 0.0:
                raise InvalidConfigError(f"{name} must be > 0, got {getattr(self, name)}")
        # rest_s = 0 disables the enforced wait (the rest minute was only
        # "allowed" in the source procedure); isi_s = 0 removes the blank
        if self.rest_s < 0.0 or self.isi_s < 0.0:
            raise InvalidConfigError("rest_s and isi_s must be >= 0")
        if self.curves is not None:
            curves = tuple(CurveId(c) for c in self.curves)
            if sorted(c.value for c in curves) != sorted(c.value for c in NON_CONSTANT_CURVES):
                raise InvalidConfigError(
                    f"curves must be a permutation of the four non-constant curves, got {curves}"
                )
            object.__setattr__(self, "curves", curves)

    def to_dict(self) -> dict:
        cfg = {
            "participant_id": self.participant_id,
            "curves": None if self.curves is None else [c.value for c in self.curves],
            "trials_per_curve": self.trials_per_curve,
            "practice_trials": self.practice_trials,
            "standard_duration_s": self.standard_duration_s,
            "fixation_s": self.fixation_s,
            "rest_s": self.rest_s,
            "isi_s": self.isi_s,
            "quest": self.quest.to_dict(),
            "seed": self.seed,
        }
        return cfg

    @classmethod
    def from_dict(cls, payload: Mapping) -> "SessionConfig":
        data = dict(payload)
        quest = data.pop("quest", None)
        curves = data.pop("curves", None)
        kwargs = {}
        for f in ("participant_id", "trials_per_curve", "practice_trials",
                  "standard_duration_s", "fixation_s", "rest_s", "isi_s", "seed"):
            if f in data:
                kwargs[f] = data.pop(f)
        if data:
            raise InvalidConfigError(f"unknown config fields: {sorted(data)}")
        if curves is not None:
            kwargs["curves"] = tuple(CurveId(c) for c in curves)
        if quest is not None:
            kwargs["quest"] = QuestConfig.from_dict(quest)
        return cls(**kwargs)


@dataclass(frozen=True)
class TrialPlan:
    trial_index: int
    phase: TrialPhase
    curve: CurveId
    standard_duration_s: float
    variable_duration_s: float
    standard_first: bool
    fixation_s: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["phase"] = self.phase.value
        d["curve"] = self.curve.value
        return d


@dataclass(frozen=True)
class TrialRecord:
    trial_index: int
    phase: TrialPhase
    curve: CurveId
    standard_duration_s: float
    variable_duration_s: float
    standard_first: bool
    fixation_s: float
    response: IntervalResponse
    derived_response: Response
    response_latency_ms: float
    timestamp: str
    posterior_mean_after: float | None
    posterior_sd_after: float | None

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("phase", "curve", "response", "derived_response"):
            d[key] = getattr(self, key).value
        return d

    @classmethod
    def from_dict(cls, payload: Mapping) -> "TrialRecord":
        return cls(
            trial_index=int(payload["trial_index"]),
            phase=TrialPhase(payload["phase"]),
            curve=CurveId(payload["curve"]),
            standard_duration_s=float(payload["standard_duration_s"]),
            variable_duration_s=float(payload["variable_duration_s"]),
            standard_first=bool(payload["standard_first"]),
            fixation_s=float(payload["fixation_s"]),
            response=IntervalResponse(payload["response"]),
            derived_response=Response(payload["derived_response"]),
            response_latency_ms=float(payload["response_latency_ms"]),
            timestamp=str(payload["timestamp"]),
            posterior_mean_after=(None if payload["posterior_mean_after"] is None
                                  else float(payload["posterior_mean_after"])),
            posterior_sd_after=(None if payload["posterior_sd_after"] is None
                                else float(payload["posterior_sd_after"])),
        )


def derive_response(response: IntervalResponse, standard_first: bool) -> Response:
    """Interval judgment -> variable-relative judgment.

    "First shorter" with the standard first means the variable (second) ran
    longer, and symmetrically for the other three combinations.
    """
    first_shorter = response is IntervalResponse.FIRST_SHORTER
    return Response.VARIABLE_LONGER if first_shorter == standard_first else Response.VARIABLE_SHORTER


@dataclass(frozen=True)
class CurveResult:
    curve: CurveId
    pse_s: float
    posterior_sd_s: float
    n_trials: int


@dataclass(frozen=True)
class SessionResults:
    per_curve: dict[CurveId, CurveResult]
    log: tuple[TrialRecord, ...]
    complete: bool


def _now_or(now: float | None) -> float:
    return time.time() if now is None else float(now)


def _iso_utc(epoch_s: float) -> str:
    return datetime.fromtimestamp(epoch_s, tz=timezone.utc).isoformat(timespec="milliseconds")


class SessionState:
    """Mutable session: config, phase, per-curve staircases, trial log."""

    def __init__(self, config: SessionConfig):
        self.config = config
        if config.curves is not None:
            self.curves: tuple[CurveId, ...] = config.curves
        else:
            order_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0]))
            perm = order_rng.permutation(len(NON_CONSTANT_CURVES))
            self.curves = tuple(NON_CONSTANT_CURVES[i] for i in perm)
        self._trial_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
        self.quest_states: dict[CurveId, QuestState] = {
            curve: config.quest.create_state() for curve in self.curves
        }
        self.phase = Phase.PRACTICE if config.practice_trials > 0 else Phase.BLOCK
        self.block_index = 0
        self.practice_done = 0
        self.trials_done_in_block = 0
        self.main_trials_since_rest = 0
        self.rest_until: float | None = None
        self.log: list[TrialRecord] = []
        self.in_flight: TrialPlan | None = None

    # -- read-only helpers -------------------------------------------------

    @property
    def pending_trial(self) -> TrialPlan | None:
        return self.in_flight

    @property
    def main_trials_done(self) -> int:
        return sum(1 for r in self.log if r.phase is TrialPhase.MAIN)

    @property
    def total_main_trials(self) -> int:
        return len(self.curves) * self.config.trials_per_curve

    def current_curve(self) -> CurveId:
        return self.curves[self.block_index]

    def remaining_rest_s(self, now: float | None = None) -> float:
        if self.phase is not Phase.REST or self.rest_until is None:
            return 0.0
        return max(0.0, self.rest_until - _now_or(now))


def create_session(config: SessionConfig) -> SessionState:
    return SessionState(config)


def next_trial(state: SessionState, now: float | None = None) -> TrialPlan:
    """Plan the next trial, advancing out of an elapsed Rest if needed."""
    if state.in_flight is not None:
        raise TrialInFlightError(state.in_flight)
    if state.phase is Phase.REST:
        remaining = state.remaining_rest_s(now)
        if remaining > 0.0:
            raise WrongPhaseError(
                f"resting for another {remaining:.1f} s", Phase.REST, remaining
            )
        state.phase = Phase.BLOCK
        state.block_index += 1
        state.rest_until = None
    if state.phase is Phase.DONE:
        raise WrongPhaseError("session is complete", Phase.DONE)

    cfg = state.config
    rng = state._trial_rng
    if state.phase is Phase.PRACTICE:
        curve = state.curves[int(rng.integers(len(state.curves)))]
        pool = practice_durations(cfg.standard_duration_s)
        variable = float(pool[int(rng.integers(len(pool)))])
        trial_phase = TrialPhase.PRACTICE
    else:
        curve = state.current_curve()
        variable = cfg.quest.propose(state.quest_states[curve])
        trial_phase = TrialPhase.MAIN
    plan = TrialPlan(
        trial_index=len(state.log),
        phase=trial_phase,
        curve=curve,
        standard_duration_s=cfg.standard_duration_s,
        variable_duration_s=variable,
        standard_first=bool(rng.random() < 0.5),
        fixation_s=cfg.fixation_s,
    )
    state.in_flight = plan
    return plan


def submit_response(
    state: SessionState,
    response: IntervalResponse,
    latency_ms: float,
    now: float | None = None,
) -> bool | None:
    """Record the in-flight trial; returns correctness for practice only."""
    if state.in_flight is None:
        raise NoTrialInFlightError("no trial in flight")
    response = IntervalResponse(response)
    latency_ms = float(latency_ms)
    if not latency_ms >= 0.0:
        raise ValueError(f"latency_ms must be >= 0, got {latency_ms}")
    plan = state.in_flight
    derived = derive_response(response, plan.standard_first)
    feedback: bool | None = None
    posterior_mean = posterior_spread = None

    if plan.phase is TrialPhase.PRACTICE:
        first_s = plan.standard_duration_s if plan.standard_first else plan.variable_duration_s
        second_s = plan.variable_duration_s if plan.standard_first else plan.standard_duration_s
        shorter_is_first = first_s < second_s
        feedback = (response is IntervalResponse.FIRST_SHORTER) == shorter_is_first
    else:
        obs = TrialObservation(intensity=plan.variable_duration_s, response=derived)
        new_state = update(state.quest_states[plan.curve], obs)
        state.quest_states[plan.curve] = new_state
        posterior_mean = estimate_pse(new_state)
        posterior_spread = posterior_sd(new_state)

    record = TrialRecord(
        trial_index=plan.trial_index,
        phase=plan.phase,
        curve=plan.curve,
        standard_duration_s=plan.standard_duration_s,
        variable_duration_s=plan.variable_duration_s,
        standard_first=plan.standard_first,
        fixation_s=plan.fixation_s,
        response=response,
        derived_response=derived,
        response_latency_ms=latency_ms,
        timestamp=_iso_utc(_now_or(now)),
        posterior_mean_after=posterior_mean,
        posterior_sd_after=posterior_spread,
    )
    state.log.append(record)
    state.in_flight = None

    if plan.phase is TrialPhase.PRACTICE:
        state.practice_done += 1
        if state.practice_done >= state.config.practice_trials:
            state.phase = Phase.BLOCK
    else:
        state.trials_done_in_block += 1
        state.main_trials_since_rest += 1
        if state.trials_done_in_block >= state.config.trials_per_curve:
            state.trials_done_in_block = 0
            if state.block_index + 1 >= len(state.curves):
                state.phase = Phase.DONE
            elif state.main_trials_since_rest >= REST_EVERY_N_TRIALS:
                state.phase = Phase.REST
                state.rest_until = _now_or(now) + state.config.rest_s
                state.main_trials_since_rest = 0
            else:
                state.block_index += 1
    return feedback


def session_results(state: SessionState, allow_partial: bool = False) -> SessionResults:
    if state.phase is not Phase.DONE and not allow_partial:
        raise IncompleteSessionError(
            f"session is in phase {state.phase.value}; results need a complete session"
        )
    per_curve = {}
    for curve in state.curves:
        qs = state.quest_states[curve]
        per_curve[curve] = CurveResult(
            curve=curve,
            pse_s=estimate_pse(qs),
            posterior_sd_s=posterior_sd(qs),
            n_trials=len(qs.history),
        )
    return SessionResults(
        per_curve=per_curve,
        log=tuple(state.log),
        complete=state.phase is Phase.DONE,
    )


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

MANIFEST_NAME = "manifest.json"
TRIALS_NAME = "trials.jsonl"


class SessionStore:
    """One directory per session: manifest.json + append-only trials.jsonl."""

    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)

    def session_dir(self, session_id: str) -> Path:
        if not _SESSION_ID_RE.match(session_id):
            raise ValueError(f"unsafe session id {session_id!r}")
        return self.data_dir / session_id

    def create(self, session_id: str, state: SessionState, now: float | None = None) -> None:
        directory = self.session_dir(session_id)
        directory.mkdir(parents=True, exist_ok=False)
        manifest = {
            "schema_version": SCHEMA_VERSION,
            "session_id": session_id,
            "participant_id": state.config.participant_id,
            "created_at": _iso_utc(_now_or(now)),
            "curve_order": [c.value for c in state.curves],
            "config": state.config.to_dict(),
        }
        path = directory / MANIFEST_NAME
        with path.open("w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def append_record(self, session_id: str, record: TrialRecord) -> None:
        path = self.session_dir(session_id) / TRIALS_NAME
        with path.open("a") as fh:
            fh.write(json.dumps(record.to_dict(), sort_keys=True))
            fh.write("\n")
            fh.flush()

    def list_sessions(self) -> list[str]:
        out = []
        for child in sorted(self.data_dir.iterdir()):
            if child.is_dir() and (child / MANIFEST_NAME).exists():
                out.append(child.name)
        return out

    def load(self, session_id: str) -> tuple[dict, list[TrialRecord]]:
        directory = self.session_dir(session_id)
        with (directory / MANIFEST_NAME).open() as fh:
            manifest = json.load(fh)
        records: list[TrialRecord] = []
        trials_path = directory / TRIALS_NAME
        if trials_path.exists():
            with trials_path.open() as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        records.append(TrialRecord.from_dict(json.loads(line)))
        return manifest, records


@dataclass(frozen=True)
class ReplayDiff:
    curve: CurveId
    logged_pse_s: float
    rebuilt_pse_s: float

    @property
    def abs_diff_s(self) -> float:
        return abs(self.logged_pse_s - self.rebuilt_pse_s)


def rebuild_session(manifest: Mapping, records: list[TrialRecord]) -> dict[CurveId, ReplayDiff]:
    """Replay a persisted log and diff final PSEs against the logged ones.

    Raises LogTamperError for structural damage (duplicate indices, missing
    posterior fields); value tampering shows up as a nonzero diff.
    """
    indices = [r.trial_index for r in records]
    if len(set(indices)) != len(indices):
        raise LogTamperError("duplicate trial indices in log")
    quest = QuestConfig.from_dict(manifest["config"]["quest"])
    diffs: dict[CurveId, ReplayDiff] = {}
    for curve_name in manifest["curve_order"]:
        curve = CurveId(curve_name)
        main = [r for r in records if r.curve is curve and r.phase is TrialPhase.MAIN]
        if not main:
            continue
        last = max(main, key=lambda r: r.trial_index)
        if last.posterior_mean_after is None:
            raise LogTamperError(f"main trial {last.trial_index} lacks a posterior mean")
        replayed = quest.rebuild([
            TrialObservation(intensity=r.variable_duration_s, response=r.derived_response)
            for r in sorted(main, key=lambda r: r.trial_index)
        ])
        diffs[curve] = ReplayDiff(
            curve=curve,
            logged_pse_s=last.posterior_mean_after,
            rebuilt_pse_s=estimate_pse(replayed),
        )
    return diffs


def new_session_id(participant_id: str) -> str:
    return f"{participant_id}-{uuid.uuid4().hex[:12]}"


# ---------------------------------------------------------------------------
# Scripted sessions (simulation and service tests)
# ---------------------------------------------------------------------------

class SimClock:
    """Deterministic clock for scripted sessions and replayable logs."""

    def __init__(self, start_epoch_s: float = 1_700_000_000.0):
        self.now_s = float(start_epoch_s)

    def now(self) -> float:
        return self.now_s

    def advance(self, dt_s: float) -> None:
        self.now_s += float(dt_s)


def run_scripted_session(
    config: SessionConfig,
    responder: Callable[[TrialPlan], IntervalResponse],
    store: SessionStore | None = None,
    session_id: str | None = None,
    clock: SimClock | None = None,
    latency_ms: float = 500.0,
) -> SessionState:
    """Drive a full session with a programmatic responder.

    The clock advances through fixation, both stimuli, the blank, and the
    response latency per trial, and skips rests, so persisted timestamps are
    reproducible for a fixed config.
    """
    clock = clock if clock is not None else SimClock()
    state = create_session(config)
    if store is not None:
        session_id = session_id if session_id is not None else config.participant_id
        store.create(session_id, state, now=clock.now())
    while state.phase is not Phase.DONE:
        try:
            plan = next_trial(state, now=clock.now())
        except WrongPhaseError as exc:
            if exc.phase is Phase.REST:
                clock.advance(exc.remaining_rest_s or state.config.rest_s)
                continue
            raise
        clock.advance(
            plan.fixation_s + plan.standard_duration_s + plan.variable_duration_s
            + state.config.isi_s + latency_ms / 1000.0
        )
        submit_response(state, responder(plan), latency_ms, now=clock.now())
        if store is not None:
            store.append_record(session_id, state.log[-1])
    return state
