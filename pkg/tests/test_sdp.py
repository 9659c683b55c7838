"""Conic compilation and the cvxopt-backed solve path."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from delayest.lmi import AffineLmi, SynthesisProblem, VarSpace, build_theorem1
from delayest.linalg import sy
from delayest.model import EstimatorGains, preset_supply
from delayest.sdp import (
    compile_problem,
    dump_sdpa,
    smat,
    solve,
    svec,
    svec_size,
)


def _scalar_problem(const, coeff, sense, cvec, eps=1e-9, name="c0"):
    vs = VarSpace()
    vs.add("x", 1, 1)
    lmi = AffineLmi(name=name, size=np.atleast_2d(const).shape[0],
                    const=np.atleast_2d(np.asarray(const, dtype=float)),
                    coeffs={0: np.atleast_2d(np.asarray(coeff, dtype=float))},
                    sense=sense, eps=eps)
    return SynthesisProblem(vs, [lmi], np.asarray(cvec, dtype=float), {})


def _sym_var_problem(lmis_spec, cvec, n=2):
    """One symmetric n x n variable X; lmis_spec = [(const, sense)] with
    coefficient X itself."""
    vs = VarSpace()
    vs.add("X", n, symmetric=True)
    lmis = []
    for idx, (const, sense) in enumerate(lmis_spec):
        coeffs = {}
        e = np.zeros(vs.total)
        for j in range(vs.total):
            e[j] = 1.0
            coeffs[j] = vs.unpack(e)["X"]
            e[j] = 0.0
        lmis.append(AffineLmi(name=f"c{idx}", size=n,
                              const=np.asarray(const, dtype=float),
                              coeffs=coeffs, sense=sense, eps=1e-9))
    return SynthesisProblem(vs, lmis, np.asarray(cvec, dtype=float), {})


def test_svec_roundtrip(rng):
    for n in (1, 2, 5):
        M = sy(rng.normal(size=(n, n)))
        v = svec(M)
        assert v.shape == (svec_size(n),)
        assert_allclose(smat(v, n), M, atol=1e-13)
    X, Y = sy(rng.normal(size=(4, 4))), sy(rng.normal(size=(4, 4)))
    assert_allclose(svec(X) @ svec(Y), np.trace(X @ Y), atol=1e-12)


def test_min_scalar_lower_bound():
    # -X <= -I  forces X >= 1; minimizing X lands on the bound
    p = _scalar_problem(const=[[1.0]], coeff=[[-1.0]], sense="neg", cvec=[1.0])
    res = solve(compile_problem(p))
    assert res.status == "optimal"
    assert res.values["x"][0, 0] == pytest.approx(1.0, abs=1e-6)


def test_min_gamma_off_diagonal():
    vs = VarSpace()
    vs.add("gamma", 1, 1)
    lmi = AffineLmi(
        name="c", size=2, const=np.array([[0.0, 1.0], [1.0, 0.0]]),
        coeffs={0: -np.eye(2)}, sense="neg", eps=1e-9,
    )
    p = SynthesisProblem(vs, [lmi], np.array([1.0]), {})
    res = solve(compile_problem(p))
    assert res.status == "optimal"
    assert res.values["gamma"][0, 0] == pytest.approx(1.0, abs=1e-6)


def test_lambda_max(rng):
    A = sy(rng.normal(size=(5, 5)))
    p = _scalar_problem(const=A, coeff=-np.eye(5), sense="neg", cvec=[1.0])
    res = solve(compile_problem(p))
    assert res.status == "optimal"
    lam = np.linalg.eigvalsh(A).max()
    assert res.objective == pytest.approx(lam, abs=1e-7)
    assert res.stats["gap"] <= 1e-6


def test_constant_feasibility_no_variables():
    vs = VarSpace()
    lmi = AffineLmi(name="c", size=2, const=np.eye(2), coeffs={},
                    sense="pos", eps=1e-9)
    res = solve(compile_problem(SynthesisProblem(vs, [lmi], np.zeros(0), {})))
    assert res.status == "optimal"

    bad = AffineLmi(name="c", size=2, const=-np.eye(2), coeffs={},
                    sense="pos", eps=1e-9)
    res = solve(compile_problem(SynthesisProblem(vs, [bad], np.zeros(0), {})))
    assert res.status == "infeasible"


def test_infeasible_pair():
    p = _sym_var_problem(
        [(-np.eye(2), "pos"), (np.eye(2), "neg")], np.zeros(3)
    )
    res = solve(compile_problem(p))
    assert res.status == "infeasible"


def test_unbounded_objective():
    p = _scalar_problem(const=[[0.0]], coeff=[[1.0]], sense="neg", cvec=[1.0])
    res = solve(compile_problem(p))
    assert res.status == "unbounded"


def test_compile_requires_constraints():
    vs = VarSpace()
    vs.add("x", 1, 1)
    with pytest.raises(ValueError):
        compile_problem(SynthesisProblem(vs, [], np.zeros(1), {}))


def test_compile_slack_roundtrip():
    # a feasible point extended with its slack vectors satisfies the
    # equality system exactly
    p = _sym_var_problem([(-np.eye(2), "pos")], np.zeros(3))
    cp = compile_problem(p)
    x = p.varspace.pack({"X": 3.0 * np.eye(2)})
    slacks = []
    for con in p.constraints:
        M = con.evaluate(x)
        S = (M - con.eps * np.eye(con.size)) if con.sense == "pos" \
            else (-M - con.eps * np.eye(con.size))
        assert np.linalg.eigvalsh(S).min() > 0
        slacks.append(svec(S))
    v = np.concatenate([x] + slacks)
    assert_allclose(cp.A_eq @ v, cp.b_eq, atol=1e-12)


def test_compile_deterministic(exA, edaA):
    sys, _ = exA
    supply = preset_supply("l2gain", m=1, q=1)
    g = EstimatorGains.zeros(sys, edaA.dims.kappa_i)
    p1 = build_theorem1(sys, edaA, supply, fix_gains=g)
    p2 = build_theorem1(sys, edaA, supply, fix_gains=g)
    c1, c2 = compile_problem(p1), compile_problem(p2)
    assert c1.A_eq.data.tobytes() == c2.A_eq.data.tobytes()
    assert c1.A_eq.indices.tobytes() == c2.A_eq.indices.tobytes()
    assert c1.b_eq.tobytes() == c2.b_eq.tobytes()
    assert c1.c.tobytes() == c2.c.tobytes()
    assert c1.cones == c2.cones


def test_sdpa_dump(tmp_path):
    vs = VarSpace()
    vs.add("gamma", 1, 1)
    lmi = AffineLmi(
        name="c", size=2, const=np.array([[0.0, 1.0], [1.0, 0.0]]),
        coeffs={0: -np.eye(2)}, sense="neg", eps=1e-9,
    )
    cp = compile_problem(SynthesisProblem(vs, [lmi], np.array([1.0]), {}))
    out = tmp_path / "prob.dat-s"
    dump_sdpa(cp, out)
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "1" and lines[1] == "1" and lines[2] == "2"
    ents = [ln.split() for ln in lines[4:]]
    # constant block carries the off-diagonal 1, variable block the identity
    f0 = {(r[2], r[3]): float(r[4]) for r in ents if r[0] == "0"}
    f1 = {(r[2], r[3]): float(r[4]) for r in ents if r[0] == "1"}
    assert f0[("1", "2")] == pytest.approx(1.0)
    assert f1[("1", "1")] == pytest.approx(1.0)
    assert f1[("2", "2")] == pytest.approx(1.0)


def test_open_loop_dissipation_not_certifiable(exA, edaA):
    # without injection the benchmark plant is unstable, so the storage
    # conditions with zero gains cannot be satisfied
    sys, _ = exA
    supply = preset_supply("l2gain", m=1, q=1)
    g = EstimatorGains.zeros(sys, edaA.dims.kappa_i)
    prob = build_theorem1(sys, edaA, supply, fix_gains=g)
    res = solve(compile_problem(prob))
    assert res.status != "optimal"


def test_multiplier_synthesis_solves(exA, edaA):
    from delayest.lmi import build_theorem2

    sys, _ = exA
    supply = preset_supply("l2gain", m=1, q=1)
    prob = build_theorem2(sys, edaA, supply)
    res = solve(compile_problem(prob))
    assert res.status == "optimal"
    gam = res.values["gamma"][0, 0]
    # value cross-checked against a frequency-sweep H-inf oracle (true closed
    # loop norm 0.5623 under the recovered gains, so the bound is ~3% tight)
    assert 0.55 < gam < 0.61
    assert max(res.stats["margins"].values()) <= 1e-6
