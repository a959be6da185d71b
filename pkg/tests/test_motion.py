"""Motion predictor: windowing, exact integration vs Euler oracle, forecasting."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from teleview.errors import InvalidInputError
from teleview.motion import (AxlePose, DelayBookkeeping, PoseDelta, SteerHistory,
                             VehicleGeometry, camera_pose_change, forecast,
                             integrate_trajectory, window_history,
                             evaluate_prediction_error)

GEOM = VehicleGeometry(wheelbase=1.76)


def euler_oracle(segments, v0, a, geom, dt=1e-5):
    """Independent fine-step forward-Euler integration (vectorized per segment)."""
    x = z = psi = 0.0
    t = 0.0
    for delta, seg_dt in segments:
        delta = min(max(delta, -math.radians(35.0)), math.radians(35.0))
        n = max(int(round(seg_dt / dt)), 1)
        h = seg_dt / n
        tk = t + h * np.arange(n)
        vk = np.maximum(v0 + a * (tk + 0.5 * h), 0.0)
        dpsi = vk * math.tan(delta) / geom.wheelbase * h
        psik = psi + np.concatenate(([0.0], np.cumsum(dpsi[:-1]))) + 0.5 * dpsi
        chord = vk * h * np.sinc(0.5 * dpsi / np.pi)
        x += float(np.sum(chord * np.sin(psik)))
        z += float(np.sum(chord * np.cos(psik)))
        psi += float(np.sum(dpsi))
        t += seg_dt
    return x, z, psi


def compose(p1: AxlePose, p2: AxlePose) -> AxlePose:
    """Rigid composition of two body-frame pose changes."""
    return AxlePose(
        x=p1.x + p2.z * math.sin(p1.psi) + p2.x * math.cos(p1.psi),
        z=p1.z + p2.z * math.cos(p1.psi) - p2.x * math.sin(p1.psi),
        psi=p1.psi + p2.psi,
    )


class TestWindowHistory:
    def test_aligned_window(self):
        h = SteerHistory()
        for i in range(10):
            h.append(i * 0.020, 0.01 * i)
        segs, warned = window_history(h, 0.020, 0.120)
        assert not warned
        assert len(segs) == 5
        assert all(dt == pytest.approx(0.020) for _, dt in segs)
        assert sum(dt for _, dt in segs) == pytest.approx(0.100, abs=1e-15)

    def test_mid_interval_start(self):
        h = SteerHistory()
        for i in range(10):
            h.append(i * 0.020, 0.01 * i)
        segs, _ = window_history(h, 0.015, 0.115)
        assert segs[0][1] == pytest.approx(0.005)
        assert segs[0][0] == 0.0  # sample active at 0.015 is the one at t=0
        assert sum(dt for _, dt in segs) == pytest.approx(0.100, abs=1e-15)

    def test_empty_history(self):
        segs, warned = window_history(SteerHistory(), 0.0, 0.4)
        assert warned
        assert segs == [(0.0, 0.4)]

    def test_degenerate_window_rejected(self):
        with pytest.raises(InvalidInputError):
            window_history(SteerHistory(), 1.0, 1.0)

    def test_durations_sum_exactly(self):
        rng = np.random.default_rng(0)
        h = SteerHistory()
        t = 0.0
        for _ in range(50):
            t += rng.uniform(0.005, 0.04)
            h.append(t, rng.uniform(-0.3, 0.3))
        t0, t1 = 0.3123, 1.1741
        segs, _ = window_history(h, t0, t1)
        assert sum(dt for _, dt in segs) == t1 - t0  # exact, not approximate


class TestSteerHistory:
    def test_strictly_increasing_enforced(self):
        h = SteerHistory()
        h.append(0.0, 0.1)
        with pytest.raises(InvalidInputError):
            h.append(0.0, 0.2)

    def test_zero_order_hold(self):
        h = SteerHistory()
        h.append(0.0, 0.1)
        h.append(1.0, 0.2)
        assert h.value_at(0.5) == 0.1
        assert h.value_at(1.0) == 0.2
        assert h.value_at(-1.0) == 0.1  # edge extrapolation

    def test_retention_trims_old_samples(self):
        h = SteerHistory(retention=2.0)
        for i in range(100):
            h.append(i * 0.1, 0.0)
        assert len(h) <= 22

    def test_short_retention_rejected(self):
        with pytest.raises(InvalidInputError):
            SteerHistory(retention=1.0)


class TestIntegrateTrajectory:
    def test_straight_line_paper_example(self):
        pose = integrate_trajectory([(0.0, 0.4)], 4.0, 0.0, GEOM)
        assert pose.x == 0.0
        assert pose.z == pytest.approx(1.6, abs=1e-12)
        assert pose.psi == 0.0

    def test_circle_closed_form(self):
        r0 = 8.0
        delta = math.atan(GEOM.wheelbase / r0)
        v0, t = 3.0, 2.0
        pose = integrate_trajectory([(delta, t)], v0, 0.0, GEOM)
        psi = v0 * t / r0
        assert pose.psi == pytest.approx(psi, abs=1e-12)
        assert pose.x == pytest.approx(r0 * (1 - math.cos(psi)), abs=1e-12)
        assert pose.z == pytest.approx(r0 * math.sin(psi), abs=1e-12)

    def test_zero_duration_window(self):
        assert integrate_trajectory([], 4.0, 0.0, GEOM) == AxlePose(0.0, 0.0, 0.0)

    def test_matches_euler_oracle_random_programs(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            n = rng.integers(1, 6)
            segs = [(float(rng.uniform(-0.7, 0.7)), float(rng.uniform(0.01, 0.2)))
                    for _ in range(n)]
            v0 = float(rng.uniform(0.0, 15.0))
            a = float(rng.uniform(-3.0, 3.0))
            pose = integrate_trajectory(segs, v0, a, GEOM)
            ex, ez, epsi = euler_oracle(segs, v0, a, GEOM)
            assert abs(pose.x - ex) < 1e-5
            assert abs(pose.z - ez) < 1e-5
            assert abs(pose.psi - epsi) < 1e-6

    def test_straight_branch_continuity(self):
        near = integrate_trajectory([(1e-9, 0.5)], 5.0, 0.0, GEOM)
        straight = integrate_trajectory([(0.0, 0.5)], 5.0, 0.0, GEOM)
        assert abs(near.x - straight.x) < 1e-8
        assert abs(near.z - straight.z) < 1e-8

    def test_steer_saturates_at_limit(self):
        hard = integrate_trajectory([(math.radians(80), 0.5)], 5.0, 0.0, GEOM)
        limit = integrate_trajectory([(math.radians(35), 0.5)], 5.0, 0.0, GEOM)
        assert hard == limit

    def test_speed_clamped_at_zero(self):
        pose = integrate_trajectory([(0.0, 2.0)], 1.0, -5.0, GEOM)
        later = integrate_trajectory([(0.0, 4.0)], 1.0, -5.0, GEOM)
        assert later.z == pytest.approx(pose.z, abs=0.15)  # vehicle has stopped

    def test_invalid_inputs_rejected(self):
        with pytest.raises(InvalidInputError):
            integrate_trajectory([(0.0, 0.1)], float("nan"), 0.0, GEOM)
        with pytest.raises(InvalidInputError):
            integrate_trajectory([(0.0, -0.1)], 1.0, 0.0, GEOM)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.tuples(st.floats(-0.6, 0.6), st.floats(0.01, 0.3)),
                    min_size=1, max_size=5),
           st.floats(0.0, 12.0))
    def test_mirror_symmetry(self, segs, v0):
        pose = integrate_trajectory(segs, v0, 0.0, GEOM)
        mirrored = integrate_trajectory([(-d, dt) for d, dt in segs], v0, 0.0, GEOM)
        assert mirrored.x == pytest.approx(-pose.x, abs=1e-12)
        assert mirrored.z == pytest.approx(pose.z, abs=1e-12)
        assert mirrored.psi == pytest.approx(-pose.psi, abs=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.tuples(st.floats(-0.6, 0.6), st.floats(0.01, 0.3)),
                    min_size=2, max_size=6),
           st.floats(0.5, 12.0), st.floats(-2.0, 2.0), st.integers(1, 5))
    def test_concatenation(self, segs, v0, a, cut):
        cut = min(cut, len(segs) - 1)
        s1, s2 = segs[:cut], segs[cut:]
        t1 = sum(dt for _, dt in s1)
        whole = integrate_trajectory(segs, v0, a, GEOM)
        p1 = integrate_trajectory(s1, v0, a, GEOM)
        # the tail integration resumes at the speed reached after s1
        p2 = integrate_trajectory(s2, v0 + a * t1, a, GEOM)
        glued = compose(p1, p2)
        # exact unless the speed clamp engaged mid-way (then the tail's
        # piecewise speed profile differs); restrict to unclamped programs
        if v0 + a * t1 > 0 and v0 + a * sum(dt for _, dt in segs) > 0:
            assert glued.x == pytest.approx(whole.x, abs=1e-9)
            assert glued.z == pytest.approx(whole.z, abs=1e-9)
            assert glued.psi == pytest.approx(whole.psi, abs=1e-9)


class TestCameraPoseChange:
    def test_zero_yaw_passthrough(self):
        d = camera_pose_change(AxlePose(1.0, 2.0, 0.0), VehicleGeometry(cam_offset=0.8))
        assert (d.dx_cam, d.dz_cam, d.dpsi_cam) == (1.0, 2.0, 0.0)

    def test_pure_rotation_offsets_camera(self):
        d = camera_pose_change(AxlePose(0.0, 0.0, math.radians(15)),
                               VehicleGeometry(cam_offset=0.8))
        assert d.dx_cam == pytest.approx(0.8 * math.sin(math.radians(15)), abs=1e-9)
        assert d.dz_cam == pytest.approx(-0.8 * (1 - math.cos(math.radians(15))), abs=1e-9)
        assert d.dpsi_cam == pytest.approx(math.radians(15))

    def test_zero_offset_equals_axle(self):
        d = camera_pose_change(AxlePose(0.3, 1.2, 0.1), VehicleGeometry(cam_offset=0.0))
        assert (d.dx_cam, d.dz_cam, d.dpsi_cam) == (0.3, 1.2, 0.1)


class TestForecast:
    def test_zero_delay_is_identity(self):
        bk = DelayBookkeeping(t0=5.0, t1=5.0, tau2=0.0)
        assert forecast(bk, SteerHistory(), 4.0, 0.0, 0.0, GEOM).is_zero

    def test_straight_drive_paper_example(self):
        h = SteerHistory()
        h.append(0.0, 0.0)
        bk = DelayBookkeeping(t0=5.0, t1=5.2, tau2=0.2)
        d = forecast(bk, h, 4.0, 0.0, 0.2, GEOM)
        assert d.dz_cam == pytest.approx(1.6, abs=1e-12)
        assert d.dx_cam == 0.0

    def test_equals_manual_composition(self):
        h = SteerHistory()
        for i in range(30):
            h.append(4.5 + i * 0.02, 0.1 * math.sin(i * 0.4))
        bk = DelayBookkeeping(t0=5.0, t1=5.15, tau2=0.1)
        geom = VehicleGeometry(wheelbase=1.76, cam_offset=0.8)
        got = forecast(bk, h, 3.0, 0.5, 0.1, geom)
        segs, _ = window_history(h, bk.t1 - (bk.tau1 + 0.1), bk.t1)
        want = camera_pose_change(integrate_trajectory(segs, 3.0, 0.5, geom), geom)
        assert got == want

    def test_bad_bookkeeping_rejected(self):
        with pytest.raises(InvalidInputError):
            DelayBookkeeping(t0=5.0, t1=4.0, tau2=0.0)
        with pytest.raises(InvalidInputError):
            DelayBookkeeping(t0=5.0, t1=5.1, tau2=-0.1)


class TestPoseDelta:
    def test_non_finite_rejected(self):
        with pytest.raises(InvalidInputError):
            PoseDelta(dx_cam=float("nan"))

    def test_yaw_range_enforced(self):
        with pytest.raises(InvalidInputError):
            PoseDelta(dpsi_cam=4.0)


class TestEvaluatePredictionError:
    def test_identical_series_zero(self):
        t = np.arange(10.0)
        series = np.random.default_rng(0).normal(size=(10, 3))
        out = evaluate_prediction_error(t, series, series)
        assert out["all"] == {"x": 0.0, "y": 0.0, "yaw": 0.0}

    def test_constant_lateral_offset(self):
        t = np.arange(10.0)
        realized = np.zeros((10, 3))
        predicted = realized.copy()
        predicted[:, 1] += 0.1
        out = evaluate_prediction_error(t, predicted, realized)
        assert out["all"]["y"] == pytest.approx(0.1)
        assert out["all"]["x"] == 0.0

    def test_sections_split(self):
        t = np.arange(10.0)
        realized = np.zeros((10, 3))
        predicted = realized.copy()
        predicted[5:, 0] = 1.0
        out = evaluate_prediction_error(t, predicted, realized,
                                        sections=[(0, 4), (5, 9)])
        assert out["0-4s"]["x"] == 0.0
        assert out["5-9s"]["x"] == pytest.approx(1.0)

    def test_empty_overlap_rejected(self):
        with pytest.raises(InvalidInputError):
            evaluate_prediction_error([], np.zeros((0, 3)), np.zeros((0, 3)))
