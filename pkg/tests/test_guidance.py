"""Guidance combinators, the suppression schedule, and blur-based guidance."""

import math

import numpy as np
import pytest

from tilevsr.guidance import (
    GuidanceConfig,
    cfg,
    combine,
    dssag_combine,
    gamma_schedule,
    pag_combine,
    sag,
)


def arrays(seed=0, shape=(2, 3, 4, 4)):
    rng = np.random.default_rng(seed)
    return rng.standard_normal(shape), rng.standard_normal(shape)


# --- combinators ------------------------------------------------------------

def test_scale_minus_one_returns_base_exactly():
    base, target = arrays(0)
    for fn in (cfg, pag_combine, dssag_combine):
        out = fn(base, target, -1.0)
        assert np.array_equal(out, base)


def test_scale_zero_returns_target_exactly():
    base, target = arrays(1)
    # magnitudes chosen so a naive base + (target - base) would round
    base = base * 1e16
    for fn in (cfg, pag_combine, dssag_combine):
        out = fn(base, target, 0.0)
        assert np.array_equal(out, target)


def test_equal_inputs_fixed_point_for_any_scale():
    base, _ = arrays(2)
    for s in (-3.0, -1.0, 0.0, 0.7, 1.0, 5.0):
        out = combine(base, base.copy(), s)
        assert np.all(out == base)


def test_forced_arithmetic_cases():
    z = np.zeros((2, 2))
    o = np.ones((2, 2))
    assert np.allclose(cfg(z, o, 1.0), 2.0)
    out = dssag_combine(np.full((1,), 1.0), np.full((1,), 3.0), 0.5)
    assert abs(out[0] - 4.0) < 1e-12


def test_combine_is_affine_in_scale():
    base, target = arrays(3)
    s1, s2 = 0.25, 1.75
    mid = combine(base, target, (s1 + s2) / 2.0)
    avg = 0.5 * (combine(base, target, s1) + combine(base, target, s2))
    assert np.max(np.abs(mid - avg)) < 1e-12


def test_combine_shape_mismatch():
    with pytest.raises(ValueError):
        combine(np.zeros((2, 2)), np.zeros((2, 3)), 1.0)


# --- suppression schedule ---------------------------------------------------

def test_gamma_schedule_endpoints_exact():
    assert gamma_schedule(700.0, 700.0, 0.002) == 1.0
    assert gamma_schedule(0.002, 700.0, 0.002) == 0.0


def test_gamma_schedule_log_midpoint():
    a, b = 700.0, 0.002
    mid = math.sqrt(a * b)
    got = gamma_schedule(mid, a, b, rho=0.5)
    assert abs(got - math.sqrt(0.5)) < 1e-12


def test_gamma_schedule_monotone_and_bounded():
    sigmas = np.geomspace(700.0, 0.002, 40)
    gammas = [gamma_schedule(float(s), 700.0, 0.002) for s in sigmas]
    assert all(0.0 <= g <= 1.0 for g in gammas)
    assert all(a >= b for a, b in zip(gammas, gammas[1:]))


def test_gamma_schedule_rho_bends_the_curve():
    mid = math.sqrt(700.0 * 0.002)
    g_half = gamma_schedule(mid, 700.0, 0.002, rho=0.5)
    g_two = gamma_schedule(mid, 700.0, 0.002, rho=2.0)
    assert abs(g_half - 0.5 ** 0.5) < 1e-12
    assert abs(g_two - 0.25) < 1e-12


def test_gamma_schedule_validation():
    with pytest.raises(ValueError):
        gamma_schedule(800.0, 700.0, 0.002)
    with pytest.raises(ValueError):
        gamma_schedule(0.001, 700.0, 0.002)
    with pytest.raises(ValueError):
        gamma_schedule(1.0, 0.002, 700.0)


# --- config validation ------------------------------------------------------

def test_guidance_config_validation():
    GuidanceConfig(mode="none")
    GuidanceConfig(mode="sag", sag_mask_quantile=1.0)
    with pytest.raises(ValueError):
        GuidanceConfig(mode="super")
    with pytest.raises(ValueError):
        GuidanceConfig(rho=0.0)
    with pytest.raises(ValueError):
        GuidanceConfig(sag_mask_quantile=0.0)
    with pytest.raises(ValueError):
        GuidanceConfig(sag_mask_quantile=1.5)


# --- blur-based guidance ----------------------------------------------------

class EpsRecorder:
    """Deterministic stand-in denoiser: eps(x) = 0.1 * x, uniform attention."""

    def __init__(self, shape):
        self.calls = []
        self.shape = shape

    def __call__(self, x, collect_attention=False, conditional=False):
        self.calls.append((x.copy(), collect_attention, conditional))
        eps = 0.1 * x
        if collect_attention:
            f, _, h, w = self.shape
            return eps, np.full((f, h, w), 1.0 / (h * w))
        return eps


def test_sag_blur_zero_reduces_to_plain_eps():
    rng = np.random.default_rng(20)
    x = rng.standard_normal((2, 1, 8, 8))
    run = EpsRecorder(x.shape)
    conf = GuidanceConfig(mode="sag", scale=2.0, sag_blur_sigma=0.0)
    out = sag(run, x, 1.5, conf)
    assert np.all(out == 0.1 * x)
    assert len(run.calls) == 2
    assert run.calls[0][1] is True
    # perturbed input equals the original when blur is disabled
    assert np.array_equal(run.calls[1][0], x)


def test_sag_quantile_one_gives_empty_mask():
    rng = np.random.default_rng(21)
    x = rng.standard_normal((2, 1, 8, 8))
    run = EpsRecorder(x.shape)
    conf = GuidanceConfig(mode="sag", scale=1.0, sag_blur_sigma=3.0, sag_mask_quantile=1.0)
    out = sag(run, x, 1.0, conf)
    # strict threshold at the max leaves no token masked, so b(x) == x
    assert np.array_equal(run.calls[1][0], x)
    assert np.all(out == 0.1 * x)


def test_sag_constant_signal_blur_is_identity():
    x = np.full((1, 1, 6, 6), 3.0)
    run = EpsRecorder(x.shape)
    conf = GuidanceConfig(mode="sag", scale=1.0, sag_blur_sigma=2.0, sag_mask_quantile=0.5)
    out = sag(run, x, 2.0, conf)
    # x0 = x - sigma * 0.1x is constant, so blurring changes nothing
    assert np.max(np.abs(out - 0.1 * x)) < 1e-12


def test_sag_conditional_uses_three_passes():
    rng = np.random.default_rng(22)
    x = rng.standard_normal((2, 1, 8, 8))
    run = EpsRecorder(x.shape)
    conf = GuidanceConfig(mode="sag", scale=1.0, sag_blur_sigma=2.0)
    sag(run, x, 1.0, conf, conditional=True)
    assert len(run.calls) == 3
    flags = [c[2] for c in run.calls]
    assert flags == [False, False, True]


def test_sag_perturbs_masked_regions_only():
    # one bright block attracts the attention mass; everything else is flat
    f, h, w = 1, 8, 8
    x = np.zeros((f, 1, h, w))
    x[0, 0, 2:4, 2:4] = 50.0

    hot = np.zeros((f, h, w))
    hot[0, 2:4, 2:4] = 1.0

    recorded = []

    def run(x_in, collect_attention=False, conditional=False):
        recorded.append(x_in.copy())
        eps = np.zeros_like(x_in)
        if collect_attention:
            return eps, hot
        return eps

    conf = GuidanceConfig(mode="sag", scale=1.0, sag_blur_sigma=1.0, sag_mask_quantile=0.9)
    sag(run, x, 1.0, conf)
    perturbed = recorded[1]
    changed = np.abs(perturbed - x)[0, 0]
    assert changed[2:4, 2:4].max() > 0.0
    untouched = changed.copy()
    untouched[2:4, 2:4] = 0.0
    assert untouched.max() == 0.0
