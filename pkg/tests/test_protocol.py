"""Session state machine: practice, blocks, rests, persistence, replay."""

import dataclasses
import itertools
import json
from pathlib import Path

import numpy as np
import pytest

from pse_lab.curves import NON_CONSTANT_CURVES, CurveId
from pse_lab.observers import ObserverModel, interval_responder, observer_seed
from pse_lab.protocol import (
    REST_EVERY_N_TRIALS,
    IncompleteSessionError,
    IntervalResponse,
    InvalidConfigError,
    LogTamperError,
    NoTrialInFlightError,
    Phase,
    SessionConfig,
    SessionStore,
    SimClock,
    TrialInFlightError,
    TrialPhase,
    TrialRecord,
    WrongPhaseError,
    create_session,
    derive_response,
    new_session_id,
    next_trial,
    practice_durations,
    rebuild_session,
    run_scripted_session,
    session_results,
    submit_response,
)
from pse_lab.quest import QuestConfig, Response

FAST_QUEST = QuestConfig(grain_s=0.05)


def fast_config(**kwargs):
    defaults = dict(participant_id="p0", quest=FAST_QUEST, seed=0)
    defaults.update(kwargs)
    return SessionConfig(**defaults)


def reference_observer(seed=0):
    return ObserverModel(
        true_pse_s={CurveId.BEZIER: 5.238, CurveId.SPEED_UP: 5.104,
                    CurveId.SLOW_DOWN: 5.672, CurveId.ELASTICITY: 5.232},
        lapse=0.02, seed=seed,
    )


def drive_session(config, responder, clock=None):
    """Hand-rolled loop mirroring run_scripted_session, reporting rest points."""
    clock = clock if clock is not None else SimClock()
    state = create_session(config)
    rest_at_main_counts = []
    while state.phase is not Phase.DONE:
        try:
            plan = next_trial(state, now=clock.now())
        except WrongPhaseError as exc:
            assert exc.phase is Phase.REST
            rest_at_main_counts.append(state.main_trials_done)
            clock.advance(exc.remaining_rest_s or config.rest_s)
            continue
        clock.advance(0.5)
        submit_response(state, responder(plan), 500.0, now=clock.now())
    return state, rest_at_main_counts


# --- configuration -------------------------------------------------------------

def test_config_requires_curve_permutation():
    with pytest.raises(InvalidConfigError):
        fast_config(curves=(CurveId.BEZIER, CurveId.BEZIER,
                            CurveId.SLOW_DOWN, CurveId.ELASTICITY))
    with pytest.raises(InvalidConfigError):
        fast_config(curves=(CurveId.BEZIER, CurveId.SPEED_UP, CurveId.SLOW_DOWN))
    cfg = fast_config(curves=(CurveId.SLOW_DOWN, CurveId.BEZIER,
                              CurveId.ELASTICITY, CurveId.SPEED_UP))
    assert cfg.curves[0] is CurveId.SLOW_DOWN


def test_config_validation():
    with pytest.raises(InvalidConfigError):
        fast_config(trials_per_curve=0)
    with pytest.raises(InvalidConfigError):
        fast_config(standard_duration_s=0.0)
    with pytest.raises(InvalidConfigError):
        fast_config(rest_s=-1.0)
    with pytest.raises(InvalidConfigError):
        fast_config(participant_id="bad/../id")
    with pytest.raises(InvalidConfigError):
        fast_config(participant_id="")
    # zero rest and isi are allowed overrides for scripted runs
    fast_config(rest_s=0.0, isi_s=0.0)


def test_config_round_trip_and_unknown_field():
    cfg = fast_config(trials_per_curve=7, seed=5,
                      curves=tuple(reversed(NON_CONSTANT_CURVES)))
    again = SessionConfig.from_dict(cfg.to_dict())
    assert again == cfg
    payload = cfg.to_dict()
    payload["trials_per_block"] = 40
    with pytest.raises(InvalidConfigError):
        SessionConfig.from_dict(payload)


def test_practice_durations_exclude_the_standard():
    assert practice_durations(5.0) == (4.0, 6.0, 6.5)
    assert practice_durations(4.5) == (4.0, 5.0, 6.0)
    assert practice_durations(4.0) == (5.0, 6.0, 6.5)
    for standard in (3.5, 4.0, 5.0, 6.0, 6.5, 7.0):
        pool = practice_durations(standard)
        assert len(pool) == 3
        assert standard not in pool


def test_derive_response_truth_table():
    assert derive_response(IntervalResponse.FIRST_SHORTER, True) is Response.VARIABLE_LONGER
    assert derive_response(IntervalResponse.FIRST_SHORTER, False) is Response.VARIABLE_SHORTER
    assert derive_response(IntervalResponse.SECOND_SHORTER, True) is Response.VARIABLE_SHORTER
    assert derive_response(IntervalResponse.SECOND_SHORTER, False) is Response.VARIABLE_LONGER


# --- protocol shape --------------------------------------------------------------

def test_full_session_counts_and_rest_positions():
    config = fast_config()
    state, rest_points = drive_session(config, interval_responder(reference_observer()))
    assert len(state.log) == 3 + 160
    assert sum(1 for r in state.log if r.phase is TrialPhase.PRACTICE) == 3
    assert state.main_trials_done == 160
    # a rest after each non-final 40-trial block
    assert rest_points == [40, 80, 120]
    assert state.phase is Phase.DONE
    # every curve got exactly trials_per_curve main trials
    for curve in state.curves:
        n = sum(1 for r in state.log
                if r.phase is TrialPhase.MAIN and r.curve is curve)
        assert n == 40


def test_single_trial_blocks_have_no_rests():
    config = fast_config(trials_per_curve=1)
    state, rest_points = drive_session(config, interval_responder(reference_observer()))
    assert rest_points == []
    assert len(state.log) == 3 + 4


def test_small_blocks_rest_only_after_forty_main_trials():
    config = fast_config(trials_per_curve=20)
    state, rest_points = drive_session(config, interval_responder(reference_observer()))
    # 4 blocks of 20: the 40-trial counter fires at the second block boundary
    assert rest_points == [40]
    assert len(state.log) == 3 + 80


def test_first_main_trial_uses_fresh_posterior_proposal():
    config = fast_config(practice_trials=0)
    state = create_session(config)
    plan = next_trial(state)
    assert plan.phase is TrialPhase.MAIN
    fresh = config.quest.create_state()
    assert plan.variable_duration_s == config.quest.propose(fresh)
    assert plan.variable_duration_s == pytest.approx(5.0, abs=0.05)


def test_variable_duration_is_frame_quantized():
    config = fast_config()
    state, _ = drive_session(config, interval_responder(reference_observer(3)))
    for record in state.log:
        frames = record.variable_duration_s * 120.0
        assert abs(frames - round(frames)) < 1e-6


def test_monotone_shift_after_variable_shorter():
    config = fast_config(practice_trials=0)
    state = create_session(config)
    plan = next_trial(state)
    # choose the interval answer that derives to VariableShorter
    response = (IntervalResponse.SECOND_SHORTER if plan.standard_first
                else IntervalResponse.FIRST_SHORTER)
    assert derive_response(response, plan.standard_first) is Response.VARIABLE_SHORTER
    submit_response(state, response, 350.0)
    assert next_trial(state).variable_duration_s > plan.variable_duration_s


def test_practice_feedback_correctness():
    config = fast_config(seed=11)
    state = create_session(config)
    plan = next_trial(state)
    assert plan.phase is TrialPhase.PRACTICE
    assert plan.variable_duration_s != plan.standard_duration_s
    first = plan.standard_duration_s if plan.standard_first else plan.variable_duration_s
    second = plan.variable_duration_s if plan.standard_first else plan.standard_duration_s
    correct = (IntervalResponse.FIRST_SHORTER if first < second
               else IntervalResponse.SECOND_SHORTER)
    assert submit_response(state, correct, 400.0) is True
    plan2 = next_trial(state)
    first = plan2.standard_duration_s if plan2.standard_first else plan2.variable_duration_s
    second = plan2.variable_duration_s if plan2.standard_first else plan2.standard_duration_s
    wrong = (IntervalResponse.SECOND_SHORTER if first < second
             else IntervalResponse.FIRST_SHORTER)
    assert submit_response(state, wrong, 400.0) is False


def test_main_trials_return_no_feedback():
    config = fast_config(practice_trials=0)
    state = create_session(config)
    next_trial(state)
    assert submit_response(state, IntervalResponse.FIRST_SHORTER, 300.0) is None


def test_done_after_final_main_response():
    config = fast_config(trials_per_curve=2, practice_trials=0)
    state, _ = drive_session(config, interval_responder(reference_observer()))
    assert state.phase is Phase.DONE
    assert state.main_trials_done == 8
    with pytest.raises(WrongPhaseError):
        next_trial(state)


def test_rest_phase_blocks_until_elapsed():
    config = fast_config(rest_s=60.0)
    clock = SimClock()
    state = create_session(config)
    responder = interval_responder(reference_observer())
    while state.phase is not Phase.REST:
        plan = next_trial(state, now=clock.now())
        clock.advance(0.5)
        submit_response(state, responder(plan), 400.0, now=clock.now())
    with pytest.raises(WrongPhaseError) as exc_info:
        next_trial(state, now=clock.now())
    assert exc_info.value.phase is Phase.REST
    assert 0.0 < exc_info.value.remaining_rest_s <= 60.0
    clock.advance(30.0)
    with pytest.raises(WrongPhaseError):
        next_trial(state, now=clock.now())
    clock.advance(30.0)
    plan = next_trial(state, now=clock.now())
    assert plan.phase is TrialPhase.MAIN


def test_single_writer_per_trial():
    config = fast_config()
    state = create_session(config)
    plan = next_trial(state)
    with pytest.raises(TrialInFlightError):
        next_trial(state)
    submit_response(state, IntervalResponse.FIRST_SHORTER, 300.0)
    with pytest.raises(NoTrialInFlightError):
        submit_response(state, IntervalResponse.FIRST_SHORTER, 300.0)
    indices = [r.trial_index for r in state.log]
    assert len(indices) == len(set(indices))
    assert plan.trial_index == 0


def test_in_flight_plan_is_reserved_verbatim():
    state = create_session(fast_config())
    plan = next_trial(state)
    assert state.pending_trial == plan


# --- counterbalancing -------------------------------------------------------------

def test_standard_first_frequency_over_ten_thousand_trials():
    config = fast_config(trials_per_curve=2500, practice_trials=0, seed=17)
    state, _ = drive_session(config, lambda plan: IntervalResponse.FIRST_SHORTER)
    assert len(state.log) == 10_000
    freq = np.mean([r.standard_first for r in state.log])
    assert abs(freq - 0.5) <= 0.015


def test_curve_order_uniform_over_sessions():
    counts = {perm: 0 for perm in itertools.permutations(NON_CONSTANT_CURVES)}
    n_sessions = 10_000
    tiny = QuestConfig(grain_s=0.5)
    for seed in range(n_sessions):
        state = create_session(SessionConfig(participant_id="p", quest=tiny, seed=seed))
        counts[state.curves] += 1
    assert len(counts) == 24
    for perm, count in counts.items():
        assert abs(count / n_sessions - 1.0 / 24.0) <= 0.01, (perm, count)


def test_session_is_reproducible_for_fixed_seed():
    config = fast_config(seed=21)
    responder = interval_responder(reference_observer(5))
    first, _ = drive_session(config, responder)
    second, _ = drive_session(config, interval_responder(reference_observer(5)))
    assert [r.to_dict() for r in first.log] == [r.to_dict() for r in second.log]


# --- results and persistence --------------------------------------------------------

def test_results_require_completion_unless_partial():
    state = create_session(fast_config())
    with pytest.raises(IncompleteSessionError):
        session_results(state)
    partial = session_results(state, allow_partial=True)
    assert partial.complete is False
    assert set(partial.per_curve) == set(state.curves)


def test_results_after_completion():
    config = fast_config(trials_per_curve=5)
    state, _ = drive_session(config, interval_responder(reference_observer(7)))
    results = session_results(state)
    assert results.complete is True
    for curve, res in results.per_curve.items():
        assert res.n_trials == 5
        assert 1.0 <= res.pse_s <= 11.0
        assert res.posterior_sd_s > 0.0
    assert results.log == tuple(state.log)


def test_scripted_session_persists_byte_identically(tmp_path):
    config = fast_config(trials_per_curve=4)
    responder_factory = lambda: interval_responder(reference_observer(9))
    for rep in ("a", "b"):
        store = SessionStore(tmp_path / rep)
        run_scripted_session(config, responder_factory(), store=store,
                             session_id="s0", clock=SimClock())
    for name in ("manifest.json", "trials.jsonl"):
        a = (tmp_path / "a" / "s0" / name).read_bytes()
        b = (tmp_path / "b" / "s0" / name).read_bytes()
        assert a == b, name


def test_store_round_trip_preserves_records(tmp_path):
    store = SessionStore(tmp_path)
    config = fast_config(trials_per_curve=3)
    state = run_scripted_session(config, interval_responder(reference_observer(2)),
                                 store=store, session_id="sess1", clock=SimClock())
    manifest, records = store.load("sess1")
    assert manifest["participant_id"] == "p0"
    assert manifest["curve_order"] == [c.value for c in state.curves]
    assert [r.to_dict() for r in records] == [r.to_dict() for r in state.log]
    assert store.list_sessions() == ["sess1"]


def test_store_rejects_unsafe_session_ids(tmp_path):
    store = SessionStore(tmp_path)
    with pytest.raises(ValueError):
        store.session_dir("../escape")


def test_new_session_id_is_storable():
    sid = new_session_id("a" * 64)
    assert len(sid) <= 128
    assert sid.startswith("a" * 64 + "-")


def test_replay_reproduces_logged_pse(tmp_path):
    store = SessionStore(tmp_path)
    config = fast_config(trials_per_curve=6)
    run_scripted_session(config, interval_responder(reference_observer(4)),
                         store=store, session_id="r0", clock=SimClock())
    manifest, records = store.load("r0")
    diffs = rebuild_session(manifest, records)
    assert set(diffs) == set(CurveId(c) for c in manifest["curve_order"])
    for diff in diffs.values():
        assert diff.abs_diff_s <= 1e-9


def test_replay_detects_value_tampering(tmp_path):
    store = SessionStore(tmp_path)
    config = fast_config(trials_per_curve=6)
    run_scripted_session(config, interval_responder(reference_observer(4)),
                         store=store, session_id="r1", clock=SimClock())
    manifest, records = store.load("r1")
    main_idx = next(i for i, r in enumerate(records) if r.phase is TrialPhase.MAIN)
    tampered = records[main_idx]
    flipped = (Response.VARIABLE_SHORTER
               if tampered.derived_response is Response.VARIABLE_LONGER
               else Response.VARIABLE_LONGER)
    records[main_idx] = dataclasses.replace(tampered, derived_response=flipped)
    diffs = rebuild_session(manifest, records)
    assert max(d.abs_diff_s for d in diffs.values()) > 1e-9


def test_replay_detects_structural_tampering(tmp_path):
    store = SessionStore(tmp_path)
    config = fast_config(trials_per_curve=3)
    run_scripted_session(config, interval_responder(reference_observer(4)),
                         store=store, session_id="r2", clock=SimClock())
    manifest, records = store.load("r2")
    with pytest.raises(LogTamperError):
        rebuild_session(manifest, records + [records[-1]])
    wiped = list(records)
    last_main = max((i for i, r in enumerate(wiped) if r.phase is TrialPhase.MAIN),
                    key=lambda i: wiped[i].trial_index)
    wiped[last_main] = dataclasses.replace(wiped[last_main], posterior_mean_after=None)
    with pytest.raises(LogTamperError):
        rebuild_session(manifest, wiped)


def test_trial_record_round_trip():
    record = TrialRecord(
        trial_index=7, phase=TrialPhase.MAIN, curve=CurveId.BEZIER,
        standard_duration_s=5.0, variable_duration_s=5.125, standard_first=False,
        fixation_s=2.0, response=IntervalResponse.SECOND_SHORTER,
        derived_response=Response.VARIABLE_LONGER, response_latency_ms=431.0,
        timestamp="2024-06-01T10:00:00.000+00:00",
        posterior_mean_after=5.21, posterior_sd_after=0.4,
    )
    assert TrialRecord.from_dict(json.loads(json.dumps(record.to_dict()))) == record


def test_scripted_sessions_match_bare_cohort_estimates():
    # the protocol path must not perturb the adaptive estimates
    from pse_lab.observers import run_session

    obs = reference_observer(observer_seed(3, 1))
    config = SessionConfig(participant_id="m0", trials_per_curve=12, seed=33)
    state = run_scripted_session(config, interval_responder(obs))
    results = session_results(state)
    for curve in state.curves:
        bare = run_session(obs, curve, n_trials=12)
        assert results.per_curve[curve].pse_s == bare.pse_estimate_s
