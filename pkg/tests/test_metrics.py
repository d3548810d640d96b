import numpy as np
import pytest

from qrf_sim.channels import average_channel, selective_channel, unitary_channel
from qrf_sim.metrics import (
    UnpolarizedFrame,
    axis_angle_fit,
    background_moments,
    mean_angular_momentum,
    p_succ,
    p_succ_trace,
    rotation_between,
    summarize_frame,
    usable_lifetime,
)
from qrf_sim.spin import build_spin_operators, coherent_state, dicke_state, rotated_dicke_state
from qrf_sim.trajectory import LifetimeCapExceeded

from helpers import random_density


def test_summary_of_coherent_state_is_identity():
    ops = build_spin_operators(16)
    for theta in (0.05, 1.0, 2.4):
        s = summarize_frame(coherent_state(16, theta), ops)
        assert abs(s.r - 1.0) <= 1e-10
        assert abs(s.theta - theta) <= 1e-10
        assert s.in_plane


def test_summary_rejects_unpolarized():
    ops = build_spin_operators(4)
    with pytest.raises(UnpolarizedFrame):
        summarize_frame(np.eye(ops.d) / ops.d, ops)


def test_summary_quad_matches_dicke_moments():
    ops = build_spin_operators(50)
    s = summarize_frame(rotated_dicke_state(50, 25, np.pi / 3), ops)
    ket = dicke_state(50, 25)
    mats = (ops.Lx, ops.Ly, ops.Lz)
    for a in range(3):
        for b in range(3):
            want = 0.5 * np.trace(ket @ (mats[a] @ mats[b] + mats[b] @ mats[a])).real
            assert abs(s.quad[a, b] - want) <= 1e-9


def test_summary_quad_trace_is_casimir():
    ops = build_spin_operators(20)
    rng = np.random.default_rng(8)
    rho = random_density(ops.d, rng)
    s = summarize_frame(rho, ops)
    assert abs(np.trace(s.quad) - 20 * 21) <= 1e-9


def test_summary_flags_out_of_plane_after_unitary():
    ops = build_spin_operators(16)
    rho = coherent_state(16, np.pi / 2)
    for _ in range(5):
        rho = unitary_channel(rho, 1.0, ops, np.pi / 2)
    s = summarize_frame(rho, ops)
    assert s.out_of_plane > 1e-8
    assert not s.in_plane


def test_background_moments_consistency():
    ops = build_spin_operators(14)
    rho = rotated_dicke_state(14, 5, 0.8)
    s = summarize_frame(rho, ops)
    lz2, lzlx = background_moments(s)
    assert abs(lz2 - np.trace(rho @ ops.Lz @ ops.Lz).real) <= 1e-9
    direct = np.trace(rho @ (ops.Lz @ ops.Lx + ops.Lx @ ops.Lz)).real
    assert abs(lzlx - direct) <= 1e-9


def test_rotation_between_basics():
    ops = build_spin_operators(16)
    s = summarize_frame(coherent_state(16, 1.0), ops)
    assert rotation_between(s, s) == 0.0
    s2 = summarize_frame(coherent_state(16, 1.2), ops)
    assert abs(rotation_between(s, s2) - 0.2) < 1e-10
    assert rotation_between(s, s2) == -rotation_between(s2, s)


def test_rotation_between_average_step():
    ops = build_spin_operators(16)
    rho = coherent_state(16, np.pi / 2)
    before = summarize_frame(rho, ops)
    after = summarize_frame(average_channel(rho, 1.0, ops), ops)
    assert abs(rotation_between(before, after) - (-0.03125)) < 2e-3


def test_rotation_between_minus_branch_coherent():
    ops = build_spin_operators(16)
    rho = coherent_state(16, 0.9)
    before = summarize_frame(rho, ops)
    after = summarize_frame(selective_channel(rho, 1.0, ops, -1).post_state, ops)
    assert abs(rotation_between(before, after)) <= 1e-9


def test_rotation_between_rejects_out_of_plane():
    ops = build_spin_operators(16)
    rho = coherent_state(16, np.pi / 2)
    tilted = unitary_channel(rho, 1.0, ops, np.pi / 2)
    s1 = summarize_frame(rho, ops)
    s2 = summarize_frame(tilted, ops)
    with pytest.raises(ValueError):
        rotation_between(s1, s2)


def test_axis_angle_fit_geometry():
    fit = axis_angle_fit(np.array([16.0, 0, 0]), np.array([0, 0, 16.0]))
    assert np.abs(fit.axis - np.array([0.0, -1.0, 0.0])).max() < 1e-12
    assert abs(fit.omega - np.pi / 2) < 1e-12
    same = axis_angle_fit(np.array([1.0, 2.0, 3.0]), np.array([2.0, 4.0, 6.0]))
    assert same.omega == 0.0
    with pytest.raises(ValueError):
        axis_angle_fit(np.array([1.0, 0, 0]), np.array([-1.0, 0, 0]))


def test_axis_angle_fit_pi_kick_is_y_axis():
    ops = build_spin_operators(32)
    rho = coherent_state(32, 1.1)
    before = mean_angular_momentum(rho, ops)
    after = mean_angular_momentum(unitary_channel(rho, 1.0, ops, np.pi), ops)
    fit = axis_angle_fit(before, after)
    assert min(np.abs(fit.axis - [0, 1, 0]).max(), np.abs(fit.axis + [0, 1, 0]).max()) < 1e-6


def test_p_succ_values():
    ops = build_spin_operators(16)
    rho = coherent_state(16, np.pi / 2)
    x_hat = np.array([1.0, 0.0, 0.0])
    assert abs(p_succ(rho, ops, x_hat) - (0.5 * (1 + 16 / 16.5))) < 1e-12
    assert abs(p_succ(rho, ops, np.array([0.0, 0.0, 1.0])) - 0.5) < 1e-12
    ops400 = build_spin_operators(400)
    anti = p_succ(coherent_state(400, np.pi), ops400, np.array([0.0, 0.0, 1.0]))
    assert anti < 1e-3


def test_p_succ_dual_paths_agree():
    rng = np.random.default_rng(12)
    for _ in range(100):
        twice_l = int(rng.integers(1, 41))
        ops = build_spin_operators(twice_l / 2)
        rho = random_density(ops.d, rng)
        n = rng.normal(size=3)
        n /= np.linalg.norm(n)
        assert abs(p_succ(rho, ops, n) - p_succ_trace(rho, ops, n)) <= 1e-12


def test_p_succ_requires_unit_direction():
    ops = build_spin_operators(4)
    rho = coherent_state(4, 0.3)
    with pytest.raises(ValueError):
        p_succ(rho, ops, np.array([1.0, 1.0, 0.0]))
    with pytest.raises(ValueError):
        p_succ_trace(rho, ops, np.array([0.5, 0.0, 0.0]))


def test_average_alignment_is_monotone():
    ops = build_spin_operators(16)
    rho = coherent_state(16, 2.0)
    thetas = [2.0]
    for _ in range(60):
        rho = average_channel(rho, 1.0, ops)
        thetas.append(summarize_frame(rho, ops).theta)
    assert all(a > b for a, b in zip(thetas, thetas[1:]))
    assert thetas[-1] > 0.0


def test_usable_lifetime_threshold_validation_and_cap():
    ops = build_spin_operators(8)
    rho = coherent_state(8, np.pi / 2)
    with pytest.raises(ValueError):
        usable_lifetime(rho, 1.0, ops, 0.99, None)
    with pytest.raises(ValueError):
        usable_lifetime(rho, 1.0, ops, 0.4, None)
    with pytest.raises(LifetimeCapExceeded):
        usable_lifetime(rho, 0.0, ops, 0.9, None, step_cap=3)


def test_usable_lifetime_scales_with_threshold():
    ops = build_spin_operators(8)
    rho = coherent_state(8, np.pi / 2)
    loose = usable_lifetime(rho, 1.0, ops, 0.85, None)
    tight = usable_lifetime(rho, 1.0, ops, 0.93, None)
    assert 0 < tight < loose
