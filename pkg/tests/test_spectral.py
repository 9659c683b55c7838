import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from delayest.model import EstimatorGains
from delayest.simulate import SimConfig, simulate
from delayest.spectral import (
    LinearDelayModel,
    SpectralConfig,
    closed_loop_sa,
    error_dynamics_model,
    spectral_abscissa,
)

# rightmost roots frozen from high-precision characteristic-equation solves
SCALAR_ROOT = complex(-0.31813150520476414, 1.3372357014306894)
DD_ROOT = complex(-1.2559758937464333, 1.3696362721495322)


def scalar_pointwise():
    return LinearDelayModel(A=(np.zeros((1, 1)), -np.eye(1)), delays=(1.0,))


def test_config_rejects_small_mesh():
    with pytest.raises(ValueError):
        SpectralConfig(N=4)
    with pytest.raises(ValueError):
        SpectralConfig(eig_count=0)


def test_model_validation():
    with pytest.raises(ValueError):
        LinearDelayModel(A=(np.eye(1),), delays=(1.0,))
    with pytest.raises(ValueError):
        LinearDelayModel(A=(np.eye(1),), delays=(), kernel=lambda t: np.eye(1))


def test_ode_without_delay():
    res = spectral_abscissa(LinearDelayModel(A=(np.array([[-1.0]]),), delays=()))
    assert res.abscissa == pytest.approx(-1.0, abs=1e-12)
    assert res.eigenvalues == (-1.0 + 0.0j,)


def test_pointwise_benchmark_roots():
    res = spectral_abscissa(scalar_pointwise())
    assert res.abscissa == pytest.approx(SCALAR_ROOT.real, abs=1e-9)
    top = res.eigenvalues[0]
    assert abs(top.imag) == pytest.approx(SCALAR_ROOT.imag, abs=1e-9)
    # conjugate pair reported as two entries
    pair = [z for z in res.eigenvalues if abs(z - top.conjugate()) < 1e-8]
    assert len(pair) == 1


def test_distributed_benchmark_roots():
    model = LinearDelayModel(
        A=(np.zeros((1, 1)), np.zeros((1, 1))),
        delays=(1.0,),
        kernel=lambda t: -np.eye(1),
    )
    res = spectral_abscissa(model)
    assert res.abscissa == pytest.approx(DD_ROOT.real, abs=1e-8)
    assert abs(res.eigenvalues[0].imag) == pytest.approx(DD_ROOT.imag, abs=1e-8)


def test_mesh_convergence():
    # raw collocation abscissa settles to 1e-6 by N = 30; the refined value
    # is mesh independent much earlier
    r30 = spectral_abscissa(scalar_pointwise(), SpectralConfig(N=30))
    r40 = spectral_abscissa(scalar_pointwise(), SpectralConfig(N=40))
    assert abs(r30.discrete_abscissa - r40.discrete_abscissa) <= 1e-6
    assert abs(r30.abscissa - r40.abscissa) <= 1e-10


def test_csv_report():
    res = spectral_abscissa(scalar_pointwise())
    lines = res.csv().strip().split("\n")
    assert lines[0] == "re,im"
    assert len(lines) == 1 + len(res.eigenvalues)
    re0, im0 = map(float, lines[1].split(","))
    assert re0 == pytest.approx(res.abscissa)


@settings(max_examples=25, deadline=None)
@given(st.one_of(st.floats(0.05, 1.45), st.floats(1.65, 3.0)))
def test_hayes_stability_boundary(a):
    # x' = -a x(t-1) is stable iff a < pi/2; signs must match on both sides
    model = LinearDelayModel(A=(np.zeros((1, 1)), np.array([[-a]])), delays=(1.0,))
    sa = spectral_abscissa(model, SpectralConfig(N=24, eig_count=4)).abscissa
    if a < np.pi / 2:
        assert sa < 0
    else:
        assert sa > 0


@settings(max_examples=25, deadline=None)
@given(st.tuples(*[st.integers(-20, 20) for _ in range(4)]))
def test_ode_embedded_in_delay_mesh(entries):
    # with a zero delay matrix the characteristic roots are exactly eig(A0)
    A0 = 0.1 * np.array(entries, dtype=float).reshape(2, 2)
    model = LinearDelayModel(A=(A0, np.zeros((2, 2))), delays=(1.0,))
    sa = spectral_abscissa(model, SpectralConfig(N=24, eig_count=4)).abscissa
    assert sa == pytest.approx(np.linalg.eigvals(A0).real.max(), abs=1e-6)


def test_zero_gains_reduce_to_open_loop(scalar):
    sys, basis, eda = scalar
    zero = EstimatorGains.zeros(sys, [1])
    model = error_dynamics_model(sys, basis, zero)
    direct = LinearDelayModel(
        A=sys.A, delays=sys.delays,
        kernel=lambda t: sys.Ahat[0] * 1.0,  # constant basis, g(t) = [1]
    )
    sa = spectral_abscissa(model).abscissa
    assert sa == pytest.approx(spectral_abscissa(direct).abscissa, abs=1e-9)
    assert sa == pytest.approx(closed_loop_sa(sys, basis, eda, zero), abs=1e-12)
    assert sa < 0

    # decay rate agrees with an actual disturbance-free run
    cfg = SimConfig(h=0.01, T=10.0, N_dd=50, plant_ic=np.array([1.0]))
    traj = simulate(sys, basis, zero, cfg=cfg)
    tail = np.linalg.norm(traj.x[-1])
    assert tail < 1.0
    assert np.log(tail) / 10.0 == pytest.approx(sa, abs=0.05)


def test_open_loop_benchmark_unstable(exA, edaA):
    sys, basis = exA
    zero = EstimatorGains.zeros(sys, list(edaA.dims.kappa_i))
    sa = closed_loop_sa(sys, basis, edaA, zero, SpectralConfig(eig_count=4))
    assert sa > 0.2

    cfg = SimConfig(h=0.005, T=10.0, N_dd=100,
                    plant_ic=np.array([0.1, 0.1]))
    traj = simulate(sys, basis, zero, cfg=cfg)
    k2 = int(round(2.0 / cfg.h))
    assert np.linalg.norm(traj.e[-1]) > 10.0 * np.linalg.norm(traj.e[k2])


def test_synthesized_gains_stabilize(exA, edaA, th2A):
    sys, basis = exA
    sa = closed_loop_sa(sys, basis, edaA, th2A.gains, SpectralConfig(eig_count=4))
    assert sa < -0.1


def test_gain_shape_validation(exA, edaA):
    sys, basis = exA
    bad = EstimatorGains.zeros(sys, [k - 1 for k in edaA.dims.kappa_i])
    with pytest.raises(ValueError):
        closed_loop_sa(sys, basis, edaA, bad)
