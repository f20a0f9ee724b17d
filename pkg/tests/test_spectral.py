import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from critnls.errors import DomainOverflowError, UndersampledError
from critnls.spectral import (
    Field,
    Grid,
    apply_D,
    apply_M,
    boundary_fraction,
    dealias_mask,
    fourier,
    free_propagate,
    inner,
    inverse_fourier,
    norms,
    profile_of,
    strichartz_exponent,
    strichartz_norm,
)

G1 = Grid(1, 20.0, 512)
G2 = Grid(2, 12.0, 128)


def gauss(grid, w=1.0):
    return grid.sample(lambda *x: np.exp(-sum(c * c for c in x) / (2 * w * w)) + 0j)


def random_field(grid, seed):
    rng = np.random.default_rng(seed)
    return Field(grid, rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape))


def test_grid_invariants():
    g = Grid(1, 4.0, 16)
    assert g.h == 0.5
    assert np.allclose(np.diff(g.axis), 0.5)
    assert g.dual().h == pytest.approx(np.pi / 4.0)
    assert g.dual().points_per_axis == 16
    with pytest.raises(ValueError):
        Grid(3, 1.0, 16)
    with pytest.raises(ValueError):
        Grid(1, 1.0, 12)
    with pytest.raises(ValueError):
        Grid(1, -1.0, 16)


def test_gaussian_self_dual():
    fhat = fourier(gauss(G1))
    xi = fhat.grid.axis
    resolved = np.abs(xi) < 10
    assert np.max(np.abs(fhat.values - np.exp(-xi**2 / 2))[resolved]) < 1e-8


def test_impulse_has_flat_spectrum():
    v = np.zeros(64, complex)
    v[32] = 1.0
    mod = np.abs(fourier(Field(Grid(1, 8.0, 64), v)).values)
    assert np.ptp(mod) < 1e-15


@pytest.mark.parametrize("grid", [G1, G2])
def test_plancherel_and_inverse(grid):
    f = random_field(grid, 1)
    assert fourier(f).l2() == pytest.approx(f.l2(), rel=1e-12)
    assert np.max(np.abs(inverse_fourier(fourier(f)).values - f.values)) < 1e-12 * f.linf()


def test_free_propagate_identity_and_group_law():
    f = random_field(G1, 2)
    assert np.max(np.abs(free_propagate(f, 0.0).values - f.values)) < 1e-14
    a = free_propagate(free_propagate(f, 0.3), 1.1)
    b = free_propagate(f, 1.4)
    assert np.max(np.abs(a.values - b.values)) < 1e-12 * f.linf()


# quadrature oracle: (2 pi)^{-1/2} int exp(-xi^2/2 - i xi^2 + i x xi) d xi by scipy.quad
PROPAGATED_AT_T1 = {
    0.0: 0.5688644810057832 - 0.351577584254143j,
    0.7: 0.5718175793341898 - 0.2801613322146262j,
    2.5: 0.2745984328027044 + 0.22961825065558122j,
}


def test_gaussian_spreading_closed_form():
    grid = Grid(1, 40.0, 1024)
    u = free_propagate(gauss(grid), 1.0)
    x = grid.axis
    closed = (1 + 2j) ** -0.5 * np.exp(-x**2 / (2 * (1 + 2j)))
    assert np.max(np.abs(u.values - closed)) < 1e-8
    # the closed form itself is pinned to the quadrature oracle
    for x0, val in PROPAGATED_AT_T1.items():
        exact = (1 + 2j) ** -0.5 * np.exp(-x0**2 / (2 * (1 + 2j)))
        assert abs(exact - val) < 1e-14


@given(t=st.floats(-5, 5).filter(lambda t: abs(t) > 1e-3), seed=st.integers(0, 10))
def test_unitarity_property(t, seed):
    f = random_field(Grid(1, 10.0, 128), seed)
    assert free_propagate(f, t).l2() == pytest.approx(f.l2(), rel=1e-12)
    assert apply_M(f, t).l2() == pytest.approx(f.l2(), rel=1e-12)


def test_apply_D_identity_scale():
    f = gauss(G1)
    assert np.max(np.abs(apply_D(f, 0.5).values - f.values)) < 1e-15


@pytest.mark.parametrize("t", [0.37, 0.5, 1.3, 2.0])
def test_apply_D_matches_rescaled_gaussian(t):
    f = gauss(G1)
    out = apply_D(f, t)
    x = G1.axis
    exact = (2 * t) ** -0.5 * np.exp(-(x / (2 * t)) ** 2 / 2)
    assert np.max(np.abs(out.values - exact)) < 1e-10
    assert out.l2() == pytest.approx(f.l2(), rel=1e-8)


def test_apply_D_lattice_path_agrees_with_chirp_path():
    f = gauss(Grid(1, 20.0, 256), w=2.0)
    lattice = apply_D(f, 0.25)  # s = 2 maps lattice onto lattice
    chirp = apply_D(f, 0.25 * (1 + 1e-10))
    assert np.max(np.abs(lattice.values - chirp.values)) < 1e-8


def test_apply_D_two_dimensional():
    f = gauss(G2)
    out = apply_D(f, 0.8)
    X, Y = G2.coords()
    exact = (1.6) ** -1 * np.exp(-((X / 1.6) ** 2 + (Y / 1.6) ** 2) / 2)
    assert np.max(np.abs(out.values - exact)) < 1e-10


def test_apply_D_domain_overflow():
    with pytest.raises(DomainOverflowError):
        apply_D(gauss(G1, w=3.0), 5.0)


def test_apply_D_rejects_zero_time():
    with pytest.raises(ValueError):
        apply_D(gauss(G1), 0.0)


def test_profile_of_inverts_MD():
    # profile_of(M(t) D(t) g * e^{-i pi/4}, t) == g on the frequency grid
    t = 3.0
    g = gauss(Grid(1, 10.0, 256))
    out_grid = Grid(1, 2 * t * 10.0, 256)
    u = apply_M(apply_D(g, t, out_grid=out_grid), t) * np.exp(-1j * np.pi / 4)
    back = profile_of(u, t)
    assert back.grid.half_width == pytest.approx(10.0)
    assert np.max(np.abs(back.values - g.values)) < 1e-13


def test_norms_examples():
    z = norms(G1.zeros(), ps=[4], sobolev_orders=[(1, 1)])
    assert z.l2 == 0 and z.lp[4] == 0 and z.sobolev[(1, 1)] == 0 and z.linf == 0
    f = gauss(Grid(1, 20.0, 512))
    rep = norms(f, ps=[2, 4], sobolev_orders=[(0, 0), (1, 0.5)])
    assert rep.l2 == pytest.approx(np.pi**0.25, abs=1e-12)
    assert rep.sobolev[(0, 0)] == pytest.approx(rep.l2, rel=1e-15)
    assert rep.lp[2] == pytest.approx(rep.l2, rel=1e-13)
    assert rep.lp[4] == pytest.approx((np.pi / 2) ** 0.125, rel=1e-12)


def test_norms_resolution_convergence():
    a = norms(gauss(Grid(1, 20.0, 256)), ps=[4], sobolev_orders=[(1, 1)])
    b = norms(gauss(Grid(1, 20.0, 512)), ps=[4], sobolev_orders=[(1, 1)])
    assert abs(a.l2 - b.l2) < 1e-8
    assert abs(a.lp[4] - b.lp[4]) < 1e-8
    assert abs(a.sobolev[(1, 1)] - b.sobolev[(1, 1)]) < 1e-8


def test_strichartz_examples():
    grid = Grid(1, 10.0, 128)
    zeros = [grid.zeros()] * 5
    assert strichartz_norm(np.linspace(1, 2, 5), zeros) == 0.0
    f = gauss(grid)
    q = strichartz_exponent(1)
    assert q == 6
    assert strichartz_norm(np.linspace(1, 2, 5), [f] * 5) == pytest.approx(f.lp(q), rel=1e-13)
    with pytest.raises(UndersampledError):
        strichartz_norm([1, 2, 3], [f] * 3)
    with pytest.raises(ValueError):
        strichartz_norm([1, 3, 2, 4], [f] * 4)


def test_boundary_fraction():
    g = Grid(1, 10.0, 128)
    assert boundary_fraction(gauss(g)) < 1e-15
    edge = Field(g, np.where(np.abs(g.axis) > 9.5, 1.0, 0.0) + 0j)
    assert boundary_fraction(edge) == pytest.approx(1.0)


def test_dealias_mask_two_thirds():
    m = dealias_mask(Grid(1, 1.0, 64))
    assert m.sum() == 2 * 21 + 1


@given(seed=st.integers(0, 50))
def test_inner_conjugate_symmetry(seed):
    f, g = random_field(G1, seed), random_field(G1, seed + 100)
    assert inner(f, g) == pytest.approx(np.conj(inner(g, f)), rel=1e-13)
