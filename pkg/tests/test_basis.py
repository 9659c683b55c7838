import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad_vec

from delayest.basis import (
    BasisFn,
    BasisSpec,
    DerivativeNotInSpan,
    build_eda,
    derive_M,
    eval_basis,
    quad_gram,
)

# frozen brute-force oracles (1e6-panel trapezoid, computed independently)
INT_EXP_SIN17 = 1.1771951025095295  # integral of e^{sin 17 tau} over [-1, 0]
INT_EXP_COS17 = 1.206877714038658   # integral of e^{cos 17 tau} over [-1, 0]


def one_interval(phi, varphi, f, interval=(-1.0, 0.0)):
    return BasisSpec(
        intervals=(tuple(interval),),
        phi_lists=(tuple(phi),),
        varphi_lists=(tuple(varphi),),
        f_lists=(tuple(f),),
    )


# ---------------------------------------------------------------- evaluation

def test_eval_basis_simple():
    spec = one_interval([], [], [BasisFn.constant(), BasisFn.monomial(1)], (0.0, 1.0))
    assert np.allclose(eval_basis(spec, 0, 0.5), [1.0, 0.5])


def test_eval_basis_example_interval(exA):
    _, spec = exA
    t = -0.5
    got = eval_basis(spec, 0, t)
    want = np.array(
        [
            np.exp(np.sin(17 * t)),
            np.exp(np.cos(17 * t)),
            np.sin(1 / (t - 0.1)) + 0.5,
            1.0,
            t,
            np.sin(17 * t),
            np.cos(17 * t),
        ]
    )
    assert np.allclose(got, want, atol=1e-14)


def test_eval_basis_errors():
    spec = one_interval([], [BasisFn.recip_sine(0.5)], [BasisFn.constant()], (0.0, 0.4))
    with pytest.raises(ValueError):
        eval_basis(spec, 0, 2.0)  # outside the interval
    # an unvalidated spec whose interval contains the pole: the proximity
    # guard fires on direct evaluation
    spec2 = one_interval([], [BasisFn.recip_sine(0.1)], [BasisFn.constant()], (-1.0, 0.2))
    with pytest.raises(ValueError, match="pole"):
        eval_basis(spec2, 0, 0.1)


def test_pole_inside_interval_rejected():
    spec = one_interval([], [BasisFn.recip_sine(-0.5)], [BasisFn.constant()], (-1.0, 0.0))
    with pytest.raises(ValueError, match="pole"):
        spec.validate()


# ---------------------------------------------------------------- derive_M

def test_derive_M_poly():
    spec = one_interval([], [], [BasisFn.constant(), BasisFn.monomial(1)], (0.0, 1.0))
    M = derive_M(spec, 0)
    assert np.array_equal(M, [[0.0, 0.0], [1.0, 0.0]])


def test_derive_M_example_interval1(exA):
    _, spec = exA
    M = derive_M(spec, 0)
    # h-order: [recip, 1, tau, sin 17 tau, cos 17 tau]; phi columns prepended as zeros
    want_h = np.array(
        [
            [0.0, 0.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, 17.0],
            [0.0, 0.0, 0.0, -17.0, 0.0],
        ]
    )
    assert M.shape == (4, 7)
    assert np.array_equal(M[:, :2], np.zeros((4, 2)))
    assert np.array_equal(M[:, 2:], want_h)


def test_derive_M_missing_partner():
    spec = one_interval([], [], [BasisFn.sine(17.0)])
    with pytest.raises(DerivativeNotInSpan):
        derive_M(spec, 0)


def test_derive_M_nonsmooth_member_rejected():
    spec = one_interval([], [], [BasisFn.exp_sine(3.0), BasisFn.constant()])
    with pytest.raises(DerivativeNotInSpan):
        derive_M(spec, 0)


def test_derive_M_partner_in_varphi():
    spec = one_interval([], [BasisFn.cosine(5.0)], [BasisFn.sine(5.0), BasisFn.constant()])
    M = derive_M(spec, 0)
    # d sin(5t)/dt = 5 cos(5t), which lives in varphi
    assert np.array_equal(M, [[5.0, 0.0, 0.0], [0.0, 0.0, 0.0]])


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(1, 3), st.floats(2.0, 40.0))
def test_derive_M_finite_difference(sigma, lam, omega):
    f = [BasisFn.constant()]
    f += [BasisFn.monomial(k) for k in range(1, sigma + 1)]
    f += [BasisFn.sine(omega * j) for j in range(1, lam + 1)]
    f += [BasisFn.cosine(omega * j) for j in range(1, lam + 1)]
    spec = one_interval([], [], f)
    M = derive_M(spec, 0)
    h = 1e-6
    for t in np.linspace(-0.98, -0.02, 100):
        fp = (eval_basis(spec, 0, t + h) - eval_basis(spec, 0, t - h)) / (2 * h)
        assert np.max(np.abs(fp - M @ eval_basis(spec, 0, t))) <= 1e-6 * (
            1 + np.max(np.abs(fp))
        )


# ---------------------------------------------------------------- quad_gram

def test_quad_gram_hilbert():
    fns = [BasisFn.constant(), BasisFn.monomial(1)]
    G = quad_gram(fns, fns, (0.0, 1.0))
    assert np.max(np.abs(G - [[1.0, 0.5], [0.5, 1.0 / 3.0]])) <= 1e-12


def test_quad_gram_constant():
    G = quad_gram([BasisFn.constant()], [BasisFn.constant()], (-1.0, 0.0))
    assert abs(G[0, 0] - 1.0) <= 1e-12


def test_quad_gram_oscillatory_vs_bruteforce():
    G = quad_gram([BasisFn.exp_sine(17.0)], [BasisFn.constant()], (-1.0, 0.0))
    assert abs(G[0, 0] - INT_EXP_SIN17) <= 1e-8
    G2 = quad_gram([BasisFn.exp_cosine(17.0)], [BasisFn.constant()], (-1.0, 0.0))
    assert abs(G2[0, 0] - INT_EXP_COS17) <= 1e-8


def test_quad_gram_sampled_table_trapezoid():
    grid = np.linspace(-1.0, 0.0, 401)
    tab = BasisFn.sampled_table(grid, grid**2)
    G = quad_gram([tab], [BasisFn.constant()], (-1.0, 0.0))
    # composite trapezoid of tau^2 on the table's own grid
    want = np.trapezoid(grid**2, grid)
    assert abs(G[0, 0] - want) <= 1e-14


def test_quad_gram_empty():
    assert quad_gram([], [BasisFn.constant()], (0.0, 1.0)).shape == (0, 1)


# ---------------------------------------------------------------- build_eda

def test_eda_closed_form_projection():
    # least-squares fit of tau^2 onto span{1, tau} over [0, 1]
    spec = one_interval(
        [BasisFn.monomial(2)], [], [BasisFn.constant(), BasisFn.monomial(1)], (0.0, 1.0)
    )
    eda = build_eda(spec)
    p = eda.per_interval[0]
    assert np.max(np.abs(p.Gamma - [[1.0 / 3.0, 0.25]])) <= 1e-10
    coeffs = p.Gamma @ np.linalg.inv(p.Y)
    assert np.max(np.abs(coeffs - [[-1.0 / 6.0, 1.0]])) <= 1e-10
    assert abs(p.E[0, 0] - 1.0 / 180.0) <= 1e-10


def test_eda_empty_phi():
    spec = one_interval([], [], [BasisFn.constant(), BasisFn.monomial(1)])
    eda = build_eda(spec)
    p = eda.per_interval[0]
    assert p.E.shape == (0, 0)
    assert p.Gamma.shape == (0, 2)
    assert p.Ttil.shape == (2, 0)
    assert np.allclose(p.T, p.sqrtY)


def test_eda_example_dims(edaA):
    d = edaA.dims
    assert d.d_i == (4, 4)
    assert d.delta_i == (1, 1)
    assert d.mu_i == (2, 2)
    assert d.kappa == 14
    assert d.varkappa == 10
    assert d.beta == 17


def test_eda_gramians_pd_and_symmetric(edaA):
    for p in edaA.per_interval:
        for M in (p.G, p.Y, p.E, p.F):
            assert np.array_equal(M, M.T)
            if M.size:
                assert np.linalg.eigvalsh(M).min() > 0


def test_congruence_identity(edaA):
    # G = T T^T + Ttil Ttil^T on every interval
    for p in edaA.per_interval:
        recon = p.T @ p.T.T + p.Ttil @ p.Ttil.T
        assert np.max(np.abs(recon - p.G)) <= 1e-8 * max(1.0, np.abs(p.G).max())


def test_least_squares_optimality(edaA, rng):
    # any other coefficient row does worse than Gamma Y^-1
    for p in edaA.per_interval:
        best = np.trace(p.E)
        coeffs = p.Gamma @ np.linalg.inv(p.Y)
        Phi2 = p.G[: p.mu, : p.mu]
        for _ in range(25):
            c = coeffs + rng.standard_normal(coeffs.shape) * 0.1
            # integral of |phi - c h|^2 expanded through the Gramians
            val = np.trace(Phi2 - c @ p.Gamma.T - p.Gamma @ c.T + c @ p.Y @ c.T)
            assert val >= best - 1e-9


def test_transport_rows_derivative(edaA, exA):
    """The transport rows reproduce d/dt of the projected f-history exactly
    for histories that are linear combinations of basis members."""
    sys, spec = exA
    eda = edaA
    # history e(t+tau) = w(tau) * v with w a polynomial, v a fixed vector; n=1 here
    rng = np.random.default_rng(7)
    poly = np.polynomial.Polynomial(rng.standard_normal(4))
    dpoly = poly.deriv()

    def xi1_blocks(shift=0.0):
        out = []
        for i, p in enumerate(eda.per_interval):
            phi, varphi, f = spec.members(i)
            h = (*varphi, *f)

            def integ(t, _h=h, _lo=None):
                hv = np.array([fn(t) for fn in _h])
                return hv * poly(t + shift)

            val, _ = quad_vec(integ, p.lo, p.hi, epsabs=1e-12)
            out.append(np.linalg.solve(p.sqrtY, val))
        return np.concatenate(out)

    def xi0(shift=0.0):
        out = []
        for i, p in enumerate(eda.per_interval):
            _, _, f = spec.members(i)

            def integ(t, _f=f):
                return np.array([fn(t) for fn in _f]) * poly(t + shift)

            val, _ = quad_vec(integ, p.lo, p.hi, epsabs=1e-12)
            out.append(p.sqrtFinv @ val)
        return np.concatenate(out)

    # omega = [e(0); e(-r_1); e(-r_2); xi1] for n = 1
    rfull = [0.0, *sys.delays]
    omega = np.concatenate([[poly(-r) for r in rfull], xi1_blocks()])
    lhs = eda.Mbig(1) @ omega
    # independent derivative: d/dt xi0 at shift 0 by central differences
    hstep = 1e-5
    dxi0 = (xi0(hstep) - xi0(-hstep)) / (2 * hstep)
    assert np.max(np.abs(lhs - dxi0)) <= 1e-6 * (1 + np.max(np.abs(dxi0)))


def test_ihat_selector(edaA, exA):
    """xi0 = Ihat xi1 for any history, checked with a polynomial history."""
    sys, spec = exA
    eda = edaA
    rng = np.random.default_rng(11)
    poly = np.polynomial.Polynomial(rng.standard_normal(5))
    xi1, xi0 = [], []
    for i, p in enumerate(eda.per_interval):
        phi, varphi, f = spec.members(i)
        h = (*varphi, *f)

        def ih(t, _h=h):
            return np.array([fn(t) for fn in _h]) * poly(t)

        def iff(t, _f=f):
            return np.array([fn(t) for fn in _f]) * poly(t)

        vh, _ = quad_vec(ih, p.lo, p.hi, epsabs=1e-12)
        vf, _ = quad_vec(iff, p.lo, p.hi, epsabs=1e-12)
        xi1.append(np.linalg.solve(p.sqrtY, vh))
        xi0.append(p.sqrtFinv @ vf)
    xi1, xi0 = np.concatenate(xi1), np.concatenate(xi0)
    assert np.max(np.abs(eda.Ihat(1) @ xi1 - xi0)) <= 1e-8 * (1 + np.abs(xi0).max())


def test_build_eda_rejects_dependent_basis():
    spec = one_interval(
        [], [], [BasisFn.constant(), BasisFn.monomial(0)], (0.0, 1.0)
    )
    with pytest.raises(Exception):
        build_eda(spec)


def test_delay_consistency_check(exA):
    _, spec = exA
    with pytest.raises(ValueError):
        build_eda(spec, delays=(1.0, 2.0))
