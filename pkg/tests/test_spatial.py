import math

import numpy as np
import pytest

from blockaloha import (
    AccessPolicy,
    NetworkParams,
    default_disk_radius,
    effective_densities,
    episode_rng,
    interference_integral,
    parse_power_watts,
    sample_sinr_success,
    slot_success_prob,
)

DEFAULTS = dict(lam=1e-4, alpha=3.0, gamma=0.1, xi=10.0, N0=1e-17, r0=25.0)


def params(**over):
    kw = dict(DEFAULTS)
    kw.update(over)
    return NetworkParams(**kw)


def test_network_params_validation():
    with pytest.raises(ValueError):
        params(alpha=2.0)  # integral diverges
    with pytest.raises(ValueError):
        params(lam=0.0)
    with pytest.raises(ValueError):
        params(gamma=-0.1)


def test_access_policy_validation():
    with pytest.raises(ValueError):
        AccessPolicy(1.2, 0.0, 0.0)
    with pytest.raises(ValueError):
        AccessPolicy(0.5, -0.1, 0.0)


def test_effective_densities_examples():
    p = params()
    d = effective_densities(p, AccessPolicy(1.0, 0.0, 0.3), 0.0)
    assert (d.lambda_B, d.lambda_S, d.lambda_C) == (1e-4, 0.0, 0.0)
    d = effective_densities(p, AccessPolicy(0.5, 0.5, 0.5), 0.0)
    assert d.lambda_B == pytest.approx(5e-5)
    assert d.lambda_S == pytest.approx(2.5e-5)
    assert d.lambda_C == 0.0
    d = effective_densities(p, AccessPolicy(0.5, 0.5, 0.4), 1.0)
    assert (d.lambda_B, d.lambda_S) == (0.0, 0.0)
    assert d.lambda_C == pytest.approx(4e-5)


def test_effective_densities_sum_and_bounds():
    p = params()
    rng = np.random.default_rng(7)
    for _ in range(200):
        pol = AccessPolicy(*rng.random(3))
        po = float(rng.random())
        d = effective_densities(p, pol, po)
        assert d.lambda_eff == pytest.approx(d.lambda_B + d.lambda_S + d.lambda_C)
        assert 0.0 <= d.lambda_eff <= p.lam + 1e-18


def test_effective_densities_domain_error():
    with pytest.raises(ValueError):
        effective_densities(params(), AccessPolicy(0.5, 0.5, 0.5), 1.5)


def test_interference_integral_closed_form_value():
    # alpha=3, gamma=0.1, r0=25: I = r0^2 * gamma^(2/3) * (pi/3)/sin(2pi/3)
    expected = 625.0 * 0.1 ** (2.0 / 3.0) * (math.pi / 3.0) / math.sin(2.0 * math.pi / 3.0)
    assert interference_integral(params()) == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("alpha", [2.5, 3.0, 3.5, 4.0])
def test_backends_agree(alpha):
    p = params(alpha=alpha)
    for lam_eff in (0.0, 5e-5, 1e-4, 3e-4):
        a = slot_success_prob(p, lam_eff)
        b = slot_success_prob(p, lam_eff, backend="quadrature")
        assert abs(a - b) / a <= 1e-9


def test_interference_free_limit():
    p = params()
    expected = math.exp(-p.gamma * p.N0 * p.r0**p.alpha / p.xi)
    assert slot_success_prob(p, 0.0) == pytest.approx(expected, rel=1e-15)


def test_slot_success_monotonicities():
    p = params()
    lams = np.linspace(0.0, 5e-4, 20)
    vals = [slot_success_prob(p, float(l)) for l in lams]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    gammas = np.linspace(0.05, 2.0, 15)
    vals = [slot_success_prob(params(gamma=float(g)), 1e-4) for g in gammas]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    n0s = np.geomspace(1e-18, 1e-10, 10)
    vals = [slot_success_prob(params(N0=float(n)), 1e-4) for n in n0s]
    assert all(a >= b for a, b in zip(vals, vals[1:]))
    xis = np.geomspace(1e-3, 10.0, 10)
    vals = [slot_success_prob(params(xi=float(x)), 1e-4) for x in xis]
    assert all(a <= b for a, b in zip(vals, vals[1:]))


def test_slot_success_rejects_negative_density():
    with pytest.raises(ValueError):
        slot_success_prob(params(), -1e-5)


def test_default_disk_radius():
    assert default_disk_radius(1e-4) == 5000.0
    assert default_disk_radius(0.0) == 5000.0
    r = default_disk_radius(1e-2)
    assert r == pytest.approx(10.0 / math.sqrt(math.pi * 1e-2 * 0.01))


def test_parse_power_watts():
    assert parse_power_watts("40dBm") == pytest.approx(10.0)
    assert parse_power_watts("40 dBm") == pytest.approx(10.0)
    assert parse_power_watts("0dBm") == pytest.approx(1e-3)
    assert parse_power_watts("10W") == 10.0
    assert parse_power_watts("1e-17") == 1e-17
    assert parse_power_watts(2.5) == 2.5


def test_sample_sinr_noise_free_limit():
    # no interferers and negligible noise: success almost surely
    p = params(N0=1e-30)
    rng = episode_rng(0)
    hits = sum(sample_sinr_success(p, 0.0, rng, disk_radius=100.0) for _ in range(500))
    assert hits == 500


def test_sample_sinr_huge_threshold():
    p = params(gamma=1e12)
    rng = episode_rng(1)
    hits = sum(sample_sinr_success(p, 1e-4, rng, disk_radius=500.0) for _ in range(200))
    assert hits == 0


def test_sample_sinr_matches_analytic():
    # modest disk: truncation bias ~6e-4 at these parameters, well under 3 sigma
    p = params()
    lam_eff = 1e-4
    analytic = slot_success_prob(p, lam_eff)
    rng = episode_rng(42)
    n = 4000
    hits = sum(sample_sinr_success(p, lam_eff, rng, disk_radius=1500.0) for _ in range(n))
    rate = hits / n
    se = math.sqrt(analytic * (1 - analytic) / n)
    assert abs(rate - analytic) < 3 * se + 1e-3
