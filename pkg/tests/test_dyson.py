import numpy as np
import pytest

from kgwave.dyson import DysonStack, IntegratorConfig, _fft_pairsum, correlations_mc
from kgwave.ensemble import draw_mu

from conftest import EPS, relerr


def test_fft_pairsum_matches_direct(spec5):
    rng = np.random.default_rng(12)
    f = rng.normal(size=spec5.nmodes) + 1j * rng.normal(size=spec5.nmodes)
    g = rng.normal(size=spec5.nmodes) + 1j * rng.normal(size=spec5.nmodes)
    direct = np.zeros(spec5.nmodes, dtype=complex)
    for i in range(spec5.nmodes):
        for j in range(spec5.nmodes):
            out = spec5.pair_out[i, j]
            if out >= 0:
                direct[out] += f[i] * g[j]
    assert relerr(_fft_pairsum(spec5, f, g), direct) < 1e-13


def test_rk4_self_convergence_is_order_four(spec5, model, cutoff, spectrum):
    stack = DysonStack(spec5, model, cutoff, EPS)
    mu = draw_mu(spec5, spectrum, 3, 0)
    t = 0.8
    sols = {}
    for dt in (0.1, 0.05, 0.025):
        sols[dt] = stack.direct_integrate(mu, IntegratorConfig(dt=dt, t_final=t), [t])[0]
    e1 = np.max(np.abs(sols[0.1] - sols[0.025]))
    e2 = np.max(np.abs(sols[0.05] - sols[0.025]))
    # halving dt should shrink the dominant error term about 16x (within 30%)
    ratio = e1 / e2
    assert 0.7 * 16 < ratio < 1.3 * 17


def test_normal_form_route_matches_direct(spec5, model, cutoff, spectrum):
    # small version of the acceptance check: same trajectory through the
    # pair-term change of variables and back
    stack = DysonStack(spec5, model, cutoff, EPS)
    mu = draw_mu(spec5, spectrum, 5, 0)
    t = 0.6
    dt = IntegratorConfig.stable_dt(stack)
    a = stack.direct_integrate(mu, IntegratorConfig(dt=dt, t_final=t), [t])[0]
    b = stack.direct_integrate(mu, IntegratorConfig(dt=dt, t_final=t, scheme="rk4-normal-form"), [t])[0]
    assert relerr(a, b) < 1e-6


def test_dyson_iterate_zero_model_is_static(spec5, cutoff, spectrum):
    from kgwave.kernels import make_model

    stack = DysonStack(spec5, make_model("zero"), cutoff, EPS)
    mu = draw_mu(spec5, spectrum, 9, 0)[0]
    stack.set_realisation(mu)
    assert np.array_equal(stack.X(0, 1.7), mu)
    assert np.allclose(stack.X(1, 1.7), 0.0)
    assert np.allclose(stack.X(2, 1.7), 0.0)


def test_correlations_mc_shapes_and_trim():
    rng = np.random.default_rng(1)
    snaps = rng.normal(size=(3, 40, 2, 5)) + 1j * rng.normal(size=(3, 40, 2, 5))
    out = correlations_mc(snaps)
    assert out["rho0"].shape == (3, 5)
    assert np.all(out["rho0"].real >= 0.0)
    assert np.all(out["rho0_stderr"] > 0.0)
    # one huge sample dominates the raw mean but not the trimmed one
    snaps[:, 17] *= 100.0
    raw = correlations_mc(snaps)
    trimmed = correlations_mc(snaps, trim=0.05)
    assert np.max(trimmed["rho0"].real) < np.max(raw["rho0"].real) / 10
