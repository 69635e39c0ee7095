"""Progress-curve shapes, velocities, and the final-window ordering."""

import math

import mpmath as mp
import pytest

from pse_lab.curves import (
    ALL_CURVES,
    FINAL_WINDOW,
    NON_CONSTANT_CURVES,
    CurveId,
    CurveSpec,
    DomainError,
    EmptyWindowError,
    default_curves,
    final_second_ordering,
    mean_velocity,
    pixel_position,
    progress_fraction,
    progress_rate,
    sample_curves,
    velocity_ordering,
)

mp.mp.dps = 30

GRID_N = 10_001


@pytest.mark.parametrize("cid", ALL_CURVES)
def test_endpoints_exact(cid):
    spec = CurveSpec(id=cid)
    assert abs(progress_fraction(spec, 0.0) - 0.0) <= 1e-12
    assert abs(progress_fraction(spec, 1.0) - 1.0) <= 1e-12


@pytest.mark.parametrize("cid", ALL_CURVES)
def test_monotone_on_dense_grid(cid):
    spec = CurveSpec(id=cid)
    prev = progress_fraction(spec, 0.0)
    for i in range(1, GRID_N):
        cur = progress_fraction(spec, i / (GRID_N - 1))
        assert cur >= prev, (cid, i)
        prev = cur


def test_known_midpoint_values():
    assert progress_fraction(CurveSpec(id=CurveId.CONSTANT), 0.5) == 0.5
    assert progress_fraction(CurveSpec(id=CurveId.SPEED_UP), 0.5) == 0.25
    assert progress_fraction(CurveSpec(id=CurveId.SLOW_DOWN), 0.5) == 0.75
    # 3u^2 - 2u^3 at 0.5
    assert progress_fraction(CurveSpec(id=CurveId.BEZIER), 0.5) == pytest.approx(0.5, abs=1e-12)


def test_elasticity_midpoint_against_oracle():
    # (e^0.5 * 1.5 - 1) / (2e - 1), mpmath at 30 digits
    ref = float((mp.e ** mp.mpf("0.5") * mp.mpf("1.5") - 1) / (2 * mp.e - 1))
    got = progress_fraction(CurveSpec(id=CurveId.ELASTICITY), 0.5)
    assert got == pytest.approx(ref, abs=1e-14)
    assert got == pytest.approx(0.33203218075168683, abs=1e-12)


@pytest.mark.parametrize("cid", ALL_CURVES)
def test_rate_matches_central_difference(cid):
    spec = CurveSpec(id=cid)
    h = 1e-6
    for u in (0.1, 0.25, 0.5, 0.75, 0.9):
        numeric = (progress_fraction(spec, u + h) - progress_fraction(spec, u - h)) / (2 * h)
        assert progress_rate(spec, u) == pytest.approx(numeric, abs=1e-6)


def test_pixel_position_examples():
    const = CurveSpec(id=CurveId.CONSTANT, track_px=600, duration_s=5.0)
    assert pixel_position(const, 2.5) == 300
    assert pixel_position(const, 0.0) == 0
    assert pixel_position(const, 5.0) == 600
    assert pixel_position(CurveSpec(id=CurveId.CONSTANT, track_px=300), 2.5) == 150


def test_pixel_position_domain():
    spec = CurveSpec(id=CurveId.CONSTANT)
    with pytest.raises(DomainError):
        pixel_position(spec, -0.1)
    with pytest.raises(DomainError):
        pixel_position(spec, 5.1)


def test_fraction_domain():
    spec = CurveSpec(id=CurveId.BEZIER)
    with pytest.raises(DomainError):
        progress_fraction(spec, -1e-9)
    with pytest.raises(DomainError):
        progress_fraction(spec, 1.0 + 1e-9)


def test_mean_velocity_constant_any_window():
    spec = CurveSpec(id=CurveId.CONSTANT)
    for lo, hi in ((0.0, 1.0), (0.8, 1.0), (0.3, 0.31)):
        assert mean_velocity(spec, lo, hi) == pytest.approx(1.0, abs=1e-12)


def test_mean_velocity_empty_window():
    spec = CurveSpec(id=CurveId.CONSTANT)
    with pytest.raises(EmptyWindowError):
        mean_velocity(spec, 0.5, 0.5)
    with pytest.raises(DomainError):
        mean_velocity(spec, -0.1, 0.5)


def test_final_window_values():
    vals = {cid: mean_velocity(CurveSpec(id=cid), *FINAL_WINDOW) for cid in ALL_CURVES}
    assert vals[CurveId.SPEED_UP] == pytest.approx(1.8, abs=1e-12)
    assert vals[CurveId.BEZIER] == pytest.approx(0.52, abs=1e-12)
    assert vals[CurveId.SLOW_DOWN] == pytest.approx(0.2, abs=1e-12)
    assert vals[CurveId.CONSTANT] == pytest.approx(1.0, abs=1e-12)
    # exact integral: 5 * (f(1) - f(0.8)) with f the elasticity displacement
    f = lambda u: (mp.e ** u * (1 + u) - 1) / (2 * mp.e - 1)
    ref = float((f(mp.mpf(1)) - f(mp.mpf("0.8"))) / mp.mpf("0.2"))
    assert vals[CurveId.ELASTICITY] == pytest.approx(ref, abs=1e-12)
    assert vals[CurveId.ELASTICITY] == pytest.approx(1.6122725788019285, abs=1e-10)


def test_final_second_ordering():
    ranked = final_second_ordering()
    assert [cid for cid, _ in ranked] == [
        CurveId.SPEED_UP, CurveId.ELASTICITY, CurveId.BEZIER, CurveId.SLOW_DOWN]
    assert velocity_ordering() == [cid for cid, _ in ranked]
    # constant slots between elasticity and bezier at exactly 1.0
    with_const = final_second_ordering(include_constant=True)
    ids = [cid for cid, _ in with_const]
    assert ids.index(CurveId.ELASTICITY) < ids.index(CurveId.CONSTANT) < ids.index(CurveId.BEZIER)
    assert dict(with_const)[CurveId.CONSTANT] == 1.0


def test_ordering_negative_control():
    # flipping the bezier controls to (1, 0) front-loads the slowdown and
    # makes its final-window velocity the largest, changing the ranking
    specs = default_curves()
    specs[CurveId.BEZIER] = CurveSpec(id=CurveId.BEZIER, bezier_controls=(1.0, 0.0))
    flipped = velocity_ordering(specs)
    assert flipped != [CurveId.SPEED_UP, CurveId.ELASTICITY, CurveId.BEZIER, CurveId.SLOW_DOWN]
    assert flipped[0] == CurveId.BEZIER


def test_sample_curves_shape_and_endpoints():
    rows = sample_curves(samples=501)
    assert len(rows) == 5 * 501
    by_curve = {}
    for name, u, frac, vel in rows:
        by_curve.setdefault(name, []).append((u, frac, vel))
    assert set(by_curve) == {cid.value for cid in ALL_CURVES}
    for name, pts in by_curve.items():
        assert len(pts) == 501
        assert pts[0][0] == 0.0 and pts[0][1] == 0.0
        assert pts[-1][0] == 1.0 and abs(pts[-1][1] - 1.0) <= 1e-12


def test_sample_curves_rejects_degenerate_grid():
    with pytest.raises(ValueError):
        sample_curves(samples=1)


def test_spec_validation():
    with pytest.raises(ValueError):
        CurveSpec(id=CurveId.CONSTANT, track_px=0)
    with pytest.raises(ValueError):
        CurveSpec(id=CurveId.CONSTANT, duration_s=0.0)


def test_non_constant_tuple_is_the_four_experimental_curves():
    assert CurveId.CONSTANT not in NON_CONSTANT_CURVES
    assert len(NON_CONSTANT_CURVES) == 4
    assert set(NON_CONSTANT_CURVES) | {CurveId.CONSTANT} == set(ALL_CURVES)
