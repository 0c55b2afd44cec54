import itertools

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from risofdma.beamforming import compute_rates, mrt_direction, solve_beamforming, water_fill
from risofdma.exceptions import NoSignalError
from risofdma.scenario import ScenarioConfig


def bisect_water_fill(c, p_max, iters=200):
    """Water level by bisection on the budget equation."""
    c = np.asarray(c, dtype=float)
    active = c > 0
    inv = 1.0 / c[active]
    lo, hi = 0.0, p_max + inv.max()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.maximum(mid - inv, 0).sum() > p_max:
            hi = mid
        else:
            lo = mid
    p = np.zeros_like(c)
    p[active] = np.maximum(lo - inv, 0)
    return p, lo


def test_water_fill_examples():
    p, level = water_fill(np.array([4.0, 1.0]), 1.0)
    np.testing.assert_allclose(p, [0.875, 0.125], atol=1e-12)
    assert level == pytest.approx(1.125, abs=1e-12)

    p, _ = water_fill(np.array([10.0, 0.1]), 0.5)
    np.testing.assert_allclose(p, [0.5, 0.0], atol=1e-12)

    p, _ = water_fill(np.array([3.0, 3.0]), 2.0)
    np.testing.assert_allclose(p, [1.0, 1.0], atol=1e-12)


def test_water_fill_zero_gain_silent():
    p, _ = water_fill(np.array([0.0, 2.0, 1.0]), 1.0)
    assert p[0] == 0.0
    assert p.sum() == pytest.approx(1.0, abs=1e-12)


def test_water_fill_errors():
    with pytest.raises(NoSignalError):
        water_fill(np.zeros(3), 1.0)
    with pytest.raises(ValueError):
        water_fill(np.array([1.0, -1.0]), 1.0)


def test_water_fill_matches_bisection():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = rng.integers(1, 17)
        c = rng.exponential(1.0, n) * (rng.random(n) > 0.2)
        if not np.any(c > 0):
            c[0] = 1.0
        p_max = rng.uniform(0.01, 10)
        p, level = water_fill(c, p_max)
        p_ref, level_ref = bisect_water_fill(c, p_max)
        np.testing.assert_allclose(p, p_ref, atol=1e-9)
        assert level == pytest.approx(level_ref, rel=1e-9)


def test_water_fill_batched_torch():
    rng = np.random.default_rng(1)
    c = rng.exponential(1.0, (5, 3, 8))
    p_np, lv_np = water_fill(c, 2.0)
    p_t, lv_t = water_fill(torch.as_tensor(c), 2.0)
    np.testing.assert_allclose(p_t.numpy(), p_np)
    np.testing.assert_allclose(lv_t.numpy(), lv_np)
    np.testing.assert_allclose(p_np.sum(-1), 2.0, rtol=1e-12)


def test_water_fill_monotone_in_budget():
    c = np.array([5.0, 1.0, 0.2, 0.05])
    rates = [np.log2(1 + c * water_fill(c, p)[0]).sum() for p in np.linspace(0.1, 20, 40)]
    assert np.all(np.diff(rates) >= 0)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.integers(1, 16), elements=st.floats(1e-3, 1e3)),
       st.floats(1e-3, 1e3))
def test_water_fill_kkt(c, p_max):
    p, level = water_fill(c, p_max)
    assert np.all(p >= 0)
    assert p.sum() == pytest.approx(p_max, rel=1e-9)
    active = p > 0
    np.testing.assert_allclose(p[active] + 1 / c[active], level, rtol=1e-9)
    assert np.all(1 / c[~active] >= level * (1 - 1e-9))


def test_mrt_examples():
    w, deg = mrt_direction(np.array([1.0, 0, 0, 0], dtype=complex))
    np.testing.assert_allclose(w, [1, 0, 0, 0])
    assert not deg

    h = np.array([1 + 1j, 0])
    w, _ = mrt_direction(h)
    np.testing.assert_allclose(w, [(1 - 1j) / np.sqrt(2), 0], atol=1e-15)
    assert abs(h @ w) == pytest.approx(np.sqrt(2), abs=1e-15)

    w, deg = mrt_direction(np.zeros(3, complex))
    np.testing.assert_array_equal(w, 0)
    assert deg


def test_mrt_beats_random_directions():
    rng = np.random.default_rng(2)
    h = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    w, _ = mrt_direction(h)
    assert abs(h @ w) ** 2 == pytest.approx(np.linalg.norm(h) ** 2, rel=1e-12)
    v = rng.standard_normal((100, 4)) + 1j * rng.standard_normal((100, 4))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    assert np.all(np.abs(v @ h) ** 2 <= abs(h @ w) ** 2 + 1e-12)


def _one_hot(users, K):
    """``users`` shaped (N, Q) -> alloc (N, K, Q)."""
    return np.moveaxis(np.eye(K)[users], -1, -2)


def test_single_rb_closed_form():
    cfg = ScenarioConfig(N=1, K=1, Q=1, N_t=2, M=0, L0=1, L1=1, L2=1)
    h = np.array([[[[1e-6 + 2e-6j, -3e-6j]]]])  # (Q, N, K, N_t)
    alloc = np.ones((1, 1, 1))
    sol = solve_beamforming(h, alloc, cfg)
    assert sol.powers[0, 0] == pytest.approx(cfg.p_max_mw)
    report = compute_rates(h, alloc, sol, cfg)
    expect = cfg.W * np.log2(1 + np.linalg.norm(h) ** 2 * cfg.p_max_mw / cfg.noise_power)
    assert report.per_user[0] == pytest.approx(expect, rel=1e-9)
    assert report.sum_rate == pytest.approx(expect, rel=1e-9)


def test_identical_subcarriers_uniform_power():
    cfg = ScenarioConfig(N=4, K=2, Q=1, N_t=2, L0=1, L1=1, L2=1)
    h = np.tile(np.array([1e-6, 2e-6j])[None, None, None], (1, 4, 2, 1))
    sol = solve_beamforming(h, _one_hot(np.zeros((4, 1), int), 2), cfg)
    np.testing.assert_allclose(sol.powers, cfg.p_max_mw / 4, rtol=1e-12)


def test_budget_and_unit_directions(rng):
    cfg = ScenarioConfig(N=4, K=3, Q=2, N_t=3, L0=1, L1=1, L2=1)
    h = (rng.standard_normal((2, 4, 3, 3)) + 1j * rng.standard_normal((2, 4, 3, 3))) * 1e-6
    alloc = _one_hot(rng.integers(0, 3, (4, 2)), 3)
    sol = solve_beamforming(h, alloc, cfg)
    np.testing.assert_allclose(sol.powers.sum(-1), cfg.p_max_mw, rtol=1e-9)
    norms = np.linalg.norm(sol.directions, axis=-1)
    np.testing.assert_allclose(norms[sol.powers > 0], 1.0, rtol=1e-12)
    np.testing.assert_array_equal(sol.serving, alloc.argmax(1).T)


def test_unassigned_rb_gets_no_power(rng):
    cfg = ScenarioConfig(N=3, K=2, Q=1, N_t=2, L0=1, L1=1, L2=1)
    h = rng.standard_normal((1, 3, 2, 2)) + 0j
    alloc = _one_hot(np.zeros((3, 1), int), 2)
    alloc[1] = 0
    sol = solve_beamforming(h, alloc, cfg)
    assert sol.powers[0, 1] == 0 and sol.serving[0, 1] == -1


def test_no_signal_timeslot():
    cfg = ScenarioConfig(N=2, K=1, Q=1, N_t=2, L0=1, L1=1, L2=1)
    with pytest.raises(NoSignalError):
        solve_beamforming(np.zeros((1, 2, 1, 2), complex), np.ones((2, 1, 1)), cfg)


def test_grid_search_power_oracle(rng):
    # N=2, K=2, Q=1, N_t=2, M=2: water-filling beats every power split on a 1e-3 grid
    cfg = ScenarioConfig(N=2, K=2, Q=1, N_t=2, M=2, L0=1, L1=1, L2=1)
    hd = (rng.standard_normal((2, 2, 2)) + 1j * rng.standard_normal((2, 2, 2))) * 3e-7
    hr = (rng.standard_normal((2, 2, 2, 2)) + 1j * rng.standard_normal((2, 2, 2, 2))) * 1e-7
    from risofdma.channel import effective_channel

    h = effective_channel(hd, hr, np.array([[0.0], [np.pi]]))
    alloc = _one_hot(np.array([[0], [1]]), 2)
    sol = solve_beamforming(h, alloc, cfg)
    best = compute_rates(h, alloc, sol, cfg).sum_rate
    gains = np.array([np.linalg.norm(h[0, 0, 0]) ** 2, np.linalg.norm(h[0, 1, 1]) ** 2])
    frac = np.arange(0, 1.0 + 5e-4, 1e-3)
    p = np.stack([frac, 1 - frac], 1) * cfg.p_max_mw
    grid = (cfg.W * np.log2(1 + p * gains / cfg.noise_power)).sum(1)
    assert best >= grid.max() - 1e-6 * best
    assert best == pytest.approx(grid.max(), rel=1e-5)


def test_rates_zero_power(rng):
    cfg = ScenarioConfig(N=2, K=2, Q=1, N_t=2, L0=1, L1=1, L2=1)
    h = rng.standard_normal((1, 2, 2, 2)) + 0j
    alloc = _one_hot(np.array([[0], [1]]), 2)
    sol = solve_beamforming(h, alloc, cfg)
    sol.powers[:] = 0
    assert np.all(compute_rates(h, alloc, sol, cfg).per_user == 0)


def test_rates_snr_invariance(rng):
    cfg = ScenarioConfig(N=4, K=2, Q=2, N_t=2, L0=1, L1=1, L2=1)
    h = (rng.standard_normal((2, 4, 2, 2)) + 1j * rng.standard_normal((2, 4, 2, 2))) * 1e-6
    alloc = _one_hot(rng.integers(0, 2, (4, 2)), 2)
    base = compute_rates(h, alloc, solve_beamforming(h, alloc, cfg), cfg).per_user
    loud = cfg.replace(P_max=cfg.P_max + 10 * np.log10(4), noise_psd=cfg.noise_psd + 10 * np.log10(4))
    scaled = compute_rates(h, alloc, solve_beamforming(h, alloc, loud), loud).per_user
    np.testing.assert_allclose(scaled, base, rtol=1e-9)


def test_one_hot_rates_match_assigned_triples(rng):
    cfg = ScenarioConfig(N=3, K=3, Q=2, N_t=2, L0=1, L1=1, L2=1)
    h = (rng.standard_normal((2, 3, 3, 2)) + 1j * rng.standard_normal((2, 3, 3, 2))) * 1e-6
    users = rng.integers(0, 3, (3, 2))
    alloc = _one_hot(users, 3)
    sol = solve_beamforming(h, alloc, cfg)
    report = compute_rates(h, alloc, sol, cfg)
    expect = np.zeros(3)
    for n, q in itertools.product(range(3), range(2)):
        k = users[n, q]
        g = abs(h[q, n, k] @ sol.directions[q, n]) ** 2
        expect[k] += cfg.W / 2 * np.log2(1 + sol.powers[q, n] * g / cfg.noise_power)
    np.testing.assert_allclose(report.per_user, expect, rtol=1e-12)
    np.testing.assert_allclose(report.per_rb_rate.sum(), report.sum_rate, rtol=1e-12)
    own = compute_rates(h, alloc, sol, cfg, snr="own").per_user
    np.testing.assert_allclose(own, report.per_user, rtol=1e-12)


def test_rates_differentiable():
    cfg = ScenarioConfig(N=2, K=2, Q=1, N_t=2, L0=1, L1=1, L2=1)
    g = torch.Generator().manual_seed(0)
    h = torch.randn(1, 2, 2, 2, dtype=torch.complex128, generator=g) * 1e-6
    logits = torch.randn(2, 2, 1, dtype=torch.float64, generator=g, requires_grad=True)
    alloc = torch.softmax(logits, dim=-2)
    sol = solve_beamforming(h, alloc, cfg)
    compute_rates(h, alloc, sol, cfg).sum_rate.backward()
    assert torch.all(torch.isfinite(logits.grad)) and logits.grad.abs().sum() > 0
    with pytest.raises(ValueError):
        compute_rates(h, alloc, sol, cfg, snr="bogus")
