import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from aapn.assembly import (
    assemble_load,
    assemble_pressure_coupling,
    assemble_viscous,
)
from aapn.fem import build_taylor_hood
from aapn.linalg import (
    SOLVE_RTOL,
    LinearSolveFailed,
    SaddleSystem,
    ZeroResidual,
    constrained_least_squares,
    solve_saddle,
)
from aapn.mesh import build_unit_square_mesh
from aapn.problems import velocity_h1_error

from oracles import brute_force_theta, gnorm, random_spd, symbolic_forcing


def stokes_system(n, nu, forcing, lid=(0.0, 0.0)):
    space = build_taylor_hood(build_unit_square_mesh(n), lid_velocity=lid)
    return SaddleSystem(
        space,
        assemble_viscous(space, nu),
        assemble_pressure_coupling(space),
        assemble_load(space, forcing),
    )


def test_stokes_zero_solution():
    sol = solve_saddle(stokes_system(4, 1.0, None))
    assert not sol.velocity.any()
    assert np.abs(sol.pressure).max() == 0.0


def test_nu_scaling():
    def f(x, y):
        return np.sin(3 * x) * y, x * x - y

    a = solve_saddle(stokes_system(6, 0.05, f))
    b = solve_saddle(stokes_system(6, 1.0, lambda x, y: tuple(c / 0.05 for c in f(x, y))))
    assert np.allclose(a.velocity, b.velocity, rtol=1e-9, atol=1e-12)
    assert np.allclose(a.pressure, b.pressure * 0.05, rtol=1e-9, atol=1e-12)


def test_pressure_is_zero_mean_and_residual_contract():
    sys_ = stokes_system(5, 1.0, None, lid=(1.0, 0.0))
    sol = solve_saddle(sys_)
    w = sys_.space.pressure_mass_weights
    assert abs(w @ sol.pressure) <= 1e-13 * (1 + np.abs(sol.pressure).max())
    assert sol.residual <= SOLVE_RTOL
    assert np.array_equal(sol.velocity[sys_.space.dirichlet_dofs], sys_.space.dirichlet_values)
    # discrete divergence vanishes
    div = sys_.coupling @ sol.velocity
    assert np.abs(div).max() <= 1e-10


def test_manufactured_stokes_error_drops_by_order_two():
    f = symbolic_forcing(1.0, convection=False)
    errors = []
    for n in (4, 8):
        sys_ = stokes_system(n, 1.0, f)
        errors.append(velocity_h1_error(sys_.space, solve_saddle(sys_).velocity))
    assert errors[0] / errors[1] >= 3.5


def test_singular_system_raises():
    sys_ = stokes_system(2, 1.0, None)
    sys_.velocity_operator = sp.csr_matrix(sys_.velocity_operator.shape)
    with pytest.raises(LinearSolveFailed):
        solve_saddle(sys_)


def test_nonfinite_system_raises():
    sys_ = stokes_system(2, 1.0, None)
    sys_.rhs_momentum = np.full(sys_.space.num_velocity_dofs, np.nan)
    with pytest.raises(LinearSolveFailed):
        solve_saddle(sys_)


# ---------------------------------------------------------------- Anderson

def test_cls_opposite_residual():
    G = sp.identity(3, format="csr")
    w0 = np.array([1.0, 2.0, -1.0])
    res = constrained_least_squares(G, w0, [-w0])
    assert res.alpha[0] == pytest.approx(0.5, abs=1e-15)
    assert res.theta == pytest.approx(0.0, abs=1e-15)


def test_cls_orthogonal_equal_norms():
    G = random_spd(np.random.default_rng(0), 4)
    w0 = np.array([1.0, 0.0, 0.0, 0.0])
    w1 = np.array([0.0, 1.0, 0.0, 0.0])
    # G-orthogonalize w1 against w0 and match norms
    w1 = w1 - (w1 @ G @ w0) / (w0 @ G @ w0) * w0
    w1 *= gnorm(G, w0) / gnorm(G, w1)
    res = constrained_least_squares(G, w0, [w1])
    assert res.alpha[0] == pytest.approx(0.5, abs=1e-12)
    assert res.theta == pytest.approx(np.sqrt(2) / 2, abs=1e-12)


def test_cls_empty_history_is_identity():
    G = random_spd(np.random.default_rng(1), 3)
    w0 = np.array([1.0, -2.0, 0.5])
    res = constrained_least_squares(G, w0, [])
    assert res.theta == 1.0 and res.alpha.size == 0
    assert np.array_equal(res.combined, w0)


def test_cls_duplicate_filtered():
    G = random_spd(np.random.default_rng(2), 3)
    w0 = np.array([1.0, -2.0, 0.5])
    res = constrained_least_squares(G, w0, [w0.copy()])
    assert res.theta == 1.0
    assert not res.kept[0] and res.alpha[0] == 0.0


def test_cls_zero_residual():
    with pytest.raises(ZeroResidual):
        constrained_least_squares(sp.identity(2, format="csr"), np.zeros(2), [np.ones(2)])


def test_cls_drops_oldest_collinear_column():
    G = sp.identity(3, format="csr")
    w0 = np.array([1.0, 0.0, 0.0])
    w1 = np.array([0.0, 1.0, 0.0])
    w2 = 2 * w1 - w0  # d2 = 2 d1: rank deficient
    res = constrained_least_squares(G, w0, [w1, w2])
    assert res.kept.tolist() == [True, False]
    assert res.theta == pytest.approx(np.sqrt(2) / 2, abs=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_cls_matches_brute_force_m2(seed):
    rng = np.random.default_rng(100 + seed)
    G = random_spd(rng, 5)
    while True:
        w0, w1, w2 = rng.normal(size=(3, 5))
        res = constrained_least_squares(G, w0, [w1, w2])
        if np.all(np.abs(res.alpha) < 1.9):
            break
    theta_bf, _ = brute_force_theta(G, w0, [w1, w2])
    assert abs(res.theta - theta_bf) <= 1e-6


vec5 = st.lists(st.floats(-10, 10, allow_nan=False), min_size=5, max_size=5).map(np.array)


@settings(max_examples=60, deadline=None)
@given(w0=vec5, hist=st.lists(vec5, min_size=0, max_size=4), seed=st.integers(0, 2**16))
def test_cls_properties(w0, hist, seed):
    G = random_spd(np.random.default_rng(seed), 5, cond=100.0)
    if gnorm(G, w0) < 1e-6:
        return
    res = constrained_least_squares(G, w0, hist)
    assert 0.0 <= res.theta <= 1.0 + 1e-12
    # first-order optimality against every retained difference column
    d = np.column_stack([h - w0 for h in hist]) if hist else np.zeros((5, 0))
    grad = d[:, res.kept].T @ (G @ res.combined)
    scale = np.abs(G.toarray()).max() * (1 + np.abs(d).max(initial=0.0)) * np.abs(w0).max()
    assert np.all(np.abs(grad) <= 1e-10 * scale)
    assert np.allclose(res.combined, w0 + d @ res.alpha)
