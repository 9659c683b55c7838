"""Conic compilation and interior-point solution of synthesis problems.

``compile_problem`` lowers a SynthesisProblem to one standard primal conic
form: minimize c'v subject to A_eq v = b_eq with v partitioned into a leading
free block (the packed decision coordinates) followed by one scaled-vectorized
PSD slack block per matrix inequality. ``solve`` hands the problem to the
cone LP solver from cvxopt after eliminating the slack blocks by substitution,
which keeps the interior-point iteration working on the decision coordinates
only. Every "optimal" result is re-verified by dense eigendecomposition of the
original inequalities before being reported.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .lmi import SynthesisProblem

__all__ = [
    "svec",
    "smat",
    "ConicProblem",
    "SolverResult",
    "compile_problem",
    "solve",
    "dump_sdpa",
]

_SQRT2 = np.sqrt(2.0)


def svec_size(n: int) -> int:
    return n * (n + 1) // 2


def svec(M: np.ndarray) -> np.ndarray:
    """Upper triangle (row-major) with off-diagonal entries scaled by sqrt 2."""
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    iu, ju = np.triu_indices(n)
    v = M[iu, ju].copy()
    v[iu != ju] *= _SQRT2
    return v


def smat(v: np.ndarray, n: int) -> np.ndarray:
    iu, ju = np.triu_indices(n)
    w = np.asarray(v, dtype=float).copy()
    w[iu != ju] /= _SQRT2
    M = np.zeros((n, n))
    M[iu, ju] = w
    M[ju, iu] = w
    return M


def _inflation(n: int) -> sp.csr_matrix:
    """Sparse map from svec packing to the column-major full vectorization."""
    iu, ju = np.triu_indices(n)
    rows, cols, vals = [], [], []
    for t, (i, j) in enumerate(zip(iu, ju)):
        if i == j:
            rows.append(j * n + i)
            cols.append(t)
            vals.append(1.0)
        else:
            rows.extend([j * n + i, i * n + j])
            cols.extend([t, t])
            vals.extend([1.0 / _SQRT2, 1.0 / _SQRT2])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n * n, svec_size(n)))


@dataclass
class ConicProblem:
    c: np.ndarray                # over free coords + all slack coords
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    cones: list                  # [("free", N), ("psd", n1), ("psd", n2), ...]
    meta: dict = field(default_factory=dict)

    @property
    def n_decision(self) -> int:
        kind, N = self.cones[0]
        assert kind == "free"
        return N


@dataclass
class SolverResult:
    status: str                  # optimal | infeasible | unbounded |
    #                              numerical_trouble | iteration_limit
    values: dict | None
    objective: float | None
    stats: dict = field(default_factory=dict)


def compile_problem(p: SynthesisProblem) -> ConicProblem:
    """Lower to equality-constrained conic form with one PSD slack per LMI.

    For a constraint of sense "neg" (M(x) <= -eps I) the slack is
    S = -M(x) - eps I >= 0; for "pos" it is S = M(x) - eps I. Each slack's
    scaled vectorization is tied to the decision coordinates by identity
    rows, so the compiled data is a faithful standard-form image of the
    problem (and deterministic for a given input).
    """
    if not p.constraints:
        raise ValueError("synthesis problem has no constraints")
    N = p.varspace.total
    cones = [("free", N)]
    rhs = []
    rows, cols, vals = [], [], []
    row_base = 0
    col_base = N
    total_slack = sum(svec_size(c.size) for c in p.constraints)
    for con in p.constraints:
        sgn = 1.0 if con.sense == "neg" else -1.0
        ssz = svec_size(con.size)
        for j, Cj in con.coeffs.items():
            v = sgn * svec(Cj)
            nz = np.nonzero(v)[0]
            rows.extend(row_base + nz)
            cols.extend([j] * len(nz))
            vals.extend(v[nz])
        rows.extend(range(row_base, row_base + ssz))
        cols.extend(range(col_base, col_base + ssz))
        vals.extend([1.0] * ssz)
        rhs.append(svec(-sgn * con.const - con.eps * np.eye(con.size)))
        cones.append(("psd", con.size))
        row_base += ssz
        col_base += ssz
    A = sp.csr_matrix(
        (vals, (rows, cols)), shape=(total_slack, N + total_slack)
    )
    c = np.concatenate([p.objective, np.zeros(total_slack)])
    return ConicProblem(
        c=c,
        A_eq=A,
        b_eq=np.concatenate(rhs),
        cones=cones,
        meta={"source": p},
    )


def _evaluate_margins(p: SynthesisProblem, x: np.ndarray) -> dict:
    """Signed violation of each unshifted inequality (positive = violated)."""
    out = {}
    for con in p.constraints:
        w = np.linalg.eigvalsh(con.evaluate(x))
        out[con.name] = float(w.max() if con.sense == "neg" else -w.min())
    return out


def solve(cp: ConicProblem, tol: float = 1e-8, max_iter: int = 200,
          verbosity: int = 0) -> SolverResult:
    """Run the cone LP interior-point method on a compiled problem.

    The PSD slack blocks are eliminated by substitution so the solver's
    variables are exactly the decision coordinates; this keeps the KKT
    systems small. Never raises: solver failures come back as a
    numerical_trouble result with diagnostics in stats.
    """
    from cvxopt import matrix, solvers

    source: SynthesisProblem = cp.meta["source"]
    N = cp.n_decision
    psd_sizes = [n for kind, n in cp.cones[1:]]

    if N == 0:
        # constant constraints: check them directly
        margins = _evaluate_margins(source, np.zeros(0))
        ok = max(margins.values()) <= 0.0
        return SolverResult(
            "optimal" if ok else "infeasible",
            {} if ok else None, 0.0 if ok else None,
            {"iterations": 0, "margins": margins},
        )

    G_parts, h_parts = [], []
    row = 0
    for n_k in psd_sizes:
        ssz = svec_size(n_k)
        infl = _inflation(n_k)
        Ax = cp.A_eq[row : row + ssz, :N]
        G_parts.append(infl @ Ax)
        h_parts.append(infl @ cp.b_eq[row : row + ssz])
        row += ssz
    G = np.asarray(sp.vstack(G_parts).todense(), dtype=float)
    h = np.concatenate(h_parts)
    dims = {"l": 0, "q": [], "s": psd_sizes}
    options = {
        "show_progress": verbosity > 0,
        "maxiters": max_iter,
        "abstol": tol,
        "reltol": max(tol * 10, 1e-9),
        "feastol": max(tol * 10, 1e-9),
    }
    try:
        sol = solvers.conelp(
            matrix(cp.c[:N]), matrix(G), matrix(h), dims, options=options
        )
    except Exception as exc:  # ill-posed data, rank defects
        return SolverResult("numerical_trouble", None, None,
                            {"error": repr(exc)})

    stats = {
        "iterations": sol.get("iterations"),
        "gap": sol.get("gap"),
        "relative_gap": sol.get("relative gap"),
        "primal_infeasibility": sol.get("primal infeasibility"),
        "dual_infeasibility": sol.get("dual infeasibility"),
        "solver_status": sol.get("status"),
    }
    st = sol.get("status")
    if st == "primal infeasible":
        return SolverResult("infeasible", None, None, stats)
    if st == "dual infeasible":
        return SolverResult("unbounded", None, None, stats)
    if st != "optimal":
        kind = ("iteration_limit"
                if sol.get("iterations", 0) >= max_iter else "numerical_trouble")
        res = SolverResult(kind, None, None, stats)
        if sol.get("x") is not None:
            x = np.array(sol["x"]).ravel()
            res.values = source.varspace.unpack(x)
            res.objective = float(cp.c[:N] @ x)
            stats["margins"] = _evaluate_margins(source, x)
        return res

    x = np.array(sol["x"]).ravel()
    margins = _evaluate_margins(source, x)
    stats["margins"] = margins
    worst = max(margins.values())
    status = "optimal"
    if worst > 1e-6:
        # solver claims success but an inequality is violated beyond the
        # certification threshold
        status = "numerical_trouble"
    return SolverResult(
        status=status,
        values=source.varspace.unpack(x),
        objective=float(cp.c[:N] @ x),
        stats=stats,
    )


def dump_sdpa(cp: ConicProblem, path) -> None:
    """Write the compiled problem in sparse SDPA text form (dat-s) for
    cross-checking with external solvers. The decision coordinates map to the
    SDPA primal variables and each PSD slack block to one SDPA block."""
    source: SynthesisProblem = cp.meta["source"]
    N = cp.n_decision
    psd_sizes = [n for kind, n in cp.cones[1:]]
    lines = [f"{N}", f"{len(psd_sizes)}", " ".join(str(n) for n in psd_sizes),
             " ".join(f"{v:.17g}" for v in cp.c[:N])]
    row = 0
    for blk, n_k in enumerate(psd_sizes, start=1):
        ssz = svec_size(n_k)
        iu, ju = np.triu_indices(n_k)
        b_k = cp.b_eq[row : row + ssz]
        F0 = -smat(b_k, n_k)
        for i, j in zip(iu, ju):
            if F0[i, j] != 0.0:
                lines.append(f"0 {blk} {i + 1} {j + 1} {F0[i, j]:.17g}")
        Ax = cp.A_eq[row : row + ssz, :N].tocsc()
        for jvar in range(N):
            colv = Ax[:, jvar]
            if colv.nnz == 0:
                continue
            Fj = -smat(np.asarray(colv.todense()).ravel(), n_k)
            for i, j in zip(iu, ju):
                if Fj[i, j] != 0.0:
                    lines.append(f"{jvar + 1} {blk} {i + 1} {j + 1} {Fj[i, j]:.17g}")
        row += ssz
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
