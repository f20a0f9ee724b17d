import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from critnls.errors import DomainOverflowError
from critnls.profiles import (
    PhaseCorrection,
    ScatteringDatum,
    eval_G,
    eval_H,
    eval_profile,
    free_minus_profile_decay,
    free_minus_profile_identity,
    modulated_transform,
    profile_grid,
)
from critnls.spectral import Grid, fourier, strichartz_norm

UNIT = ScatteringDatum.gauss(1, 1.0, 1.0)
# independent values (scipy.quad) of ||(e^{i xi^2/4t} - 1) e^{-xi^2/2}||_2
DECAY_ORACLE = {10.0: 0.02881769076016361, 100.0: 0.002882419047018603, 1000.0: 0.0002882425549339069}
# nested scipy.quad of G(x) = int_1^2 (2s)^{-3/2} e^{-3 x^2 / 8 s^2} ds, then its L2 norm
G_NORM_ORACLE = 0.3472488428420592


@pytest.mark.parametrize("lam", [0.0, 0.7, -1.3])
@pytest.mark.parametrize("t", [2.0, 50.0])
def test_profile_norm_is_unitary(lam, t):
    v = eval_profile(t, UNIT, PhaseCorrection.constant(lam), profile_grid(UNIT, t))
    assert v.l2() == pytest.approx(UNIT.l2, rel=1e-8)


def test_profile_modulus_independent_of_lambda():
    grid = profile_grid(UNIT, 20.0)
    a = eval_profile(20.0, UNIT, PhaseCorrection.constant(0.0), grid)
    b = eval_profile(20.0, UNIT, PhaseCorrection.constant(1.7), grid)
    assert np.max(np.abs(np.abs(a.values) - np.abs(b.values))) < 1e-15


def test_modulated_transform_modulus_lambda_invariant():
    xg = UNIT.native_grid().dual()
    a = modulated_transform(30.0, UNIT, PhaseCorrection.constant(0.0), xg)
    b = modulated_transform(30.0, UNIT, PhaseCorrection.constant(-0.9), xg)
    assert np.max(np.abs(np.abs(a.values) - np.abs(b.values))) < 1e-15


def test_lp_scaling_ratio():
    phase = PhaseCorrection.constant(0.8)
    for t in (10.0, 100.0):
        grid = profile_grid(UNIT, 2 * t)
        a = eval_profile(t, UNIT, phase, grid).lp(4)
        b = eval_profile(2 * t, UNIT, phase, grid).lp(4)
        assert b / a == pytest.approx(2 ** -0.25, abs=1e-6)


def test_strichartz_window_scaling_constant():
    phase = PhaseCorrection.constant(0.5)
    consts = []
    for t in (10.0, 100.0, 1000.0):
        grid = profile_grid(UNIT, 2 * t)
        s = np.linspace(t, 2 * t, 32)
        fields = [eval_profile(si, UNIT, phase, grid) for si in s]
        consts.append(t ** (1 / 6) * strichartz_norm(s, fields))
    assert max(consts) / min(consts) - 1 < 0.01


def test_direct_and_dilation_routes_agree():
    for datum in (ScatteringDatum.gauss(1, 0.3, 0.5), ScatteringDatum.bump(1, 1.0, 1.5)):
        grid = profile_grid(datum, 40.0)
        phase = PhaseCorrection.constant(0.7)
        a = eval_profile(40.0, datum, phase, grid, route="direct")
        b = eval_profile(40.0, datum, phase, grid, route="dilation")
        assert (a - b).l2() < 1e-10 * a.l2()


def test_gridded_datum_matches_closed_form():
    closed = ScatteringDatum.gauss(1, 1.0, 1.0)
    gridded = ScatteringDatum.gridded(closed.u_plus())
    grid = profile_grid(closed, 10.0)
    a = eval_profile(10.0, closed, PhaseCorrection.constant(0.3), grid)
    b = eval_profile(10.0, gridded, PhaseCorrection.constant(0.3), grid)
    assert (a - b).l2() < 1e-10


def test_profile_domain_overflow():
    with pytest.raises(DomainOverflowError):
        eval_profile(100.0, UNIT, PhaseCorrection.constant(0.0), Grid(1, 20.0, 256), route="dilation")


def test_G_zero_datum():
    g = eval_G(ScatteringDatum.gauss(1, 0.0, 1.0), Grid(1, 10.0, 64))
    assert np.all(g.values == 0)


def test_G_support_of_bump():
    r = 1.0
    grid = Grid(1, 8.0, 512)
    g = eval_G(ScatteringDatum.bump(1, 1.0, r), grid).values
    x = np.abs(grid.axis)
    assert np.all(g[x >= 4 * r] == 0)
    assert np.all(g[x < 2 * r] > 0)


def test_G_real_nonnegative():
    g = eval_G(ScatteringDatum.gauss(2, 1.0, 0.8), Grid(2, 10.0, 64))
    assert np.isrealobj(g.values) or np.all(g.values.imag == 0)
    assert np.all(g.values.real >= 0)


def test_G_norm_against_nested_quadrature():
    assert eval_G(UNIT, Grid(1, 40.0, 1024)).l2() == pytest.approx(G_NORM_ORACLE, abs=1e-6)


def test_H_norm_and_unit_scale():
    grid = Grid(1, 200.0, 4096)
    G = eval_G(UNIT, grid)
    for t in (0.5, 1.0, 3.0, 7.0):
        assert eval_H(t, UNIT, grid).l2() == pytest.approx(G.l2(), rel=1e-8)
    # H(t) = -i D(t/2) G, so the identity scale sits at t = 1
    assert np.max(np.abs(eval_H(1.0, UNIT, grid).values + 1j * G.values)) < 1e-15


def test_H_matches_time_integral_of_profile_power():
    t = 20.0
    datum = ScatteringDatum.gauss(1, 1.0, 1.0)
    phase = PhaseCorrection.constant(0.6)
    grid = profile_grid(datum, 2 * t)
    nodes, weights = np.polynomial.legendre.leggauss(128)
    s = t + (nodes + 1) * t / 2
    acc = np.zeros(grid.shape)
    for si, wi in zip(s, weights * t / 2):
        acc += wi * np.abs(eval_profile(si, datum, phase, grid).values) ** 3
    H = eval_H(t, datum, grid)
    assert np.max(np.abs(H.values + 1j * acc)) <= 1e-4 * np.max(acc)


def test_decay_table_decreasing_and_small():
    times = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0]
    vals = [v for _, v in free_minus_profile_decay(UNIT, times)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    last = free_minus_profile_decay(UNIT, [1000.0])[0][1]
    assert last < 1e-3 * UNIT.l2


def test_decay_two_routes_and_oracle():
    times = sorted(DECAY_ORACLE)
    direct = dict(free_minus_profile_decay(UNIT, times))
    ident = dict(free_minus_profile_identity(UNIT, times))
    for t in times:
        assert direct[t] == pytest.approx(ident[t], abs=1e-6)
        assert ident[t] == pytest.approx(DECAY_ORACLE[t], rel=1e-9)


def test_decay_zero_datum():
    z = ScatteringDatum.gauss(1, 0.0, 1.0)
    assert all(v == 0 for _, v in free_minus_profile_decay(z, [1.0, 10.0]))


def test_regularity_finite():
    assert np.isfinite(UNIT.regularity) and UNIT.regularity > UNIT.l2


def test_gauss_fourier_side_consistency():
    d = ScatteringDatum.gauss(1, 0.4, 0.7)
    grid = d.native_grid()
    uh = fourier(d.u_plus(grid))
    assert np.max(np.abs(uh.values - d.fourier_field(grid).values)) < 1e-12


def test_phase_correction_validation():
    with pytest.raises(ValueError):
        PhaseCorrection(kind="nonsense")
    bad = PhaseCorrection.general(lambda t, xi: 1j * xi)
    with pytest.raises(ValueError):
        bad.phase(2.0, (np.linspace(-1, 1, 5),), np.ones(5), 1)
    adv = PhaseCorrection.adversarial()
    xi = np.array([0.5, 2.0])
    assert np.allclose(adv.phase(3.0, (xi,), np.ones(2), 1), [-0.75, 0.0])
    assert not adv.oscillation_declared


@given(lam=st.floats(-2, 2), t=st.floats(1.5, 200))
def test_profile_modulus_property(lam, t):
    grid = Grid(1, 2 * t * 10, 1024)
    d = ScatteringDatum.gauss(1, 1.0, 1.0)
    v = eval_profile(t, d, PhaseCorrection.constant(lam), grid)
    x = grid.axis
    expected = (2 * t) ** -0.5 * np.exp(-((x / (2 * t)) ** 2) / 2)
    assert np.max(np.abs(np.abs(v.values) - expected)) < 1e-14
