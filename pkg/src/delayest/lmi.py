"""Decision-variable space and affine matrix-inequality assembly.

The synthesis conditions are built in two layers:

* numeric assembly (``assemble_core`` and friends): given concrete values for
  every block, produce the dense matrices of each inequality;
* affine extraction: probe the numeric assembly at unit coordinates of the
  packed variable vector to obtain constant + per-coordinate coefficient form
  (the assemblies are affine in the declared variables by construction; a
  property test checks this).

Three problem builders are exposed: the bilinear synthesis condition with one
side frozen (``build_theorem1`` with either the gains or the storage couple
P1/P2 fixed), the convex multiplier relaxation (``build_theorem2``), and the
anchored inner convex approximation used by the iterative refinement
(``build_inner_approx``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .basis import EDAData
from .linalg import blkdiag, kron, sy
from .model import DelaySystem, EstimatorGains, SupplyRate

__all__ = [
    "VarSpace",
    "AffineLmi",
    "SynthesisProblem",
    "assemble_core",
    "build_theorem1",
    "build_theorem2",
    "build_inner_approx",
    "gains_from_values",
    "dump_matrix",
]


# --------------------------------------------------------------------------
# variable space with scaled symmetric packing
# --------------------------------------------------------------------------

_SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class VarBlock:
    name: str
    rows: int
    cols: int
    symmetric: bool
    offset: int

    @property
    def size(self) -> int:
        if self.symmetric:
            return self.rows * (self.rows + 1) // 2
        return self.rows * self.cols


class VarSpace:
    """Ordered named blocks over one packed coordinate vector.

    Symmetric blocks are stored as the upper triangle with off-diagonal
    entries scaled by sqrt(2), so that packed inner products equal Frobenius
    inner products of the matrices.
    """

    def __init__(self):
        self.blocks: dict[str, VarBlock] = {}
        self.total = 0

    def add(self, name: str, rows: int, cols: int | None = None, symmetric: bool = False):
        if name in self.blocks:
            raise ValueError(f"duplicate variable block {name!r}")
        if symmetric and cols not in (None, rows):
            raise ValueError("symmetric blocks must be square")
        blk = VarBlock(name, rows, rows if symmetric else (cols if cols is not None else rows),
                       symmetric, self.total)
        self.blocks[name] = blk
        self.total += blk.size
        return blk

    def names(self):
        return list(self.blocks)

    def pack(self, values: dict) -> np.ndarray:
        x = np.zeros(self.total)
        for name, blk in self.blocks.items():
            M = np.asarray(values[name], dtype=float).reshape(blk.rows, blk.cols)
            if blk.symmetric:
                iu, ju = np.triu_indices(blk.rows)
                v = M[iu, ju].copy()
                v[iu != ju] *= _SQRT2
                x[blk.offset : blk.offset + blk.size] = v
            else:
                x[blk.offset : blk.offset + blk.size] = M.reshape(-1)
        return x

    def unpack(self, x: np.ndarray) -> dict:
        out = {}
        for name, blk in self.blocks.items():
            v = x[blk.offset : blk.offset + blk.size]
            if blk.symmetric:
                M = np.zeros((blk.rows, blk.rows))
                iu, ju = np.triu_indices(blk.rows)
                w = v.copy()
                w[iu != ju] /= _SQRT2
                M[iu, ju] = w
                M[ju, iu] = w
            else:
                M = v.reshape(blk.rows, blk.cols).copy()
            out[name] = M
        return out

    def zeros(self) -> dict:
        return self.unpack(np.zeros(self.total))


# --------------------------------------------------------------------------
# affine LMI container
# --------------------------------------------------------------------------


@dataclass
class AffineLmi:
    """M(x) = const + sum_j x_j coeffs[j], constrained by sense:
    "neg": M(x) <= -eps I ; "pos": M(x) >= eps I (semidefinite order)."""

    name: str
    size: int
    const: np.ndarray
    coeffs: dict              # packed coordinate index -> symmetric matrix
    sense: str                # "neg" | "pos"
    eps: float

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        M = self.const.copy()
        for j, Cj in self.coeffs.items():
            if x[j] != 0.0:
                M += x[j] * Cj
        return M

    def margin(self, x: np.ndarray) -> float:
        """Worst signed slack: >= 0 means satisfied (with its eps)."""
        w = np.linalg.eigvalsh(self.evaluate(x))
        if self.sense == "neg":
            return -self.eps - w.max()
        return w.min() - self.eps


@dataclass
class SynthesisProblem:
    varspace: VarSpace
    constraints: list
    objective: np.ndarray
    meta: dict = field(default_factory=dict)


def _feas_eps(const: np.ndarray) -> float:
    scale = np.linalg.norm(const, 2) if const.size else 0.0
    return 1e-7 * (1.0 + scale)


def _probe_affine(vs: VarSpace, eval_all: Callable, senses: dict) -> list:
    """Extract AffineLmi list from a numeric assembly callable.

    eval_all(values dict) must return {name: dense symmetric matrix} and be
    affine in the packed coordinates.
    """
    base_vals = vs.zeros()
    base = eval_all(base_vals)
    lmis = {}
    for name, M0 in base.items():
        M0 = np.asarray(M0, dtype=float)
        if np.abs(M0 - M0.T).max() > 1e-9 * (1 + np.abs(M0).max()):
            raise ValueError(f"constraint {name} constant term is not symmetric")
        M0 = 0.5 * (M0 + M0.T)
        lmis[name] = AffineLmi(
            name=name, size=M0.shape[0], const=M0, coeffs={},
            sense=senses[name], eps=_feas_eps(M0),
        )
    e = np.zeros(vs.total)
    for j in range(vs.total):
        e[j] = 1.0
        vals = vs.unpack(e)
        probed = eval_all(vals)
        e[j] = 0.0
        for name, Mj in probed.items():
            Cj = np.asarray(Mj, dtype=float) - base[name]
            if np.abs(Cj).max() <= 1e-14:
                continue
            Cj = 0.5 * (Cj + Cj.T)
            lmis[name].coeffs[j] = Cj
    return list(lmis.values())


# --------------------------------------------------------------------------
# numeric assembly
# --------------------------------------------------------------------------


def _sizes(sys: DelaySystem, eda: EDAData):
    dm = eda.dims
    return {
        "n": sys.n, "m": sys.m, "l": sys.l, "q": sys.q, "nu": sys.nu,
        "d": dm.d, "kappa": dm.kappa, "vk": dm.varkappa, "mu": dm.mu,
        "beta": dm.beta,
    }


def _build_injection_row(blocks_point, blocks_dd, eda, width: int, q: int) -> np.ndarray:
    """Row of pointwise blocks, congruence-transformed distributed blocks, and
    a zero disturbance block: the common layout of the gain and system rows."""
    parts = list(blocks_point)
    for i, p in enumerate(eda.per_interval):
        parts.append(blocks_dd[i] @ kron(p.T, np.eye(width)))
    for i, p in enumerate(eda.per_interval):
        parts.append(blocks_dd[i] @ kron(p.Ttil, np.eye(width)))
    rows = parts[0].shape[0]
    parts.append(np.zeros((rows, q)))
    return np.hstack(parts)


def assemble_core(
    sys: DelaySystem,
    eda: EDAData,
    gains: EstimatorGains,
    P1: np.ndarray | None = None,
    P2: np.ndarray | None = None,
    P3: np.ndarray | None = None,
    Q: Sequence[np.ndarray] | None = None,
    R: Sequence[np.ndarray] | None = None,
    supply: SupplyRate | None = None,
    gamma: float | None = None,
) -> dict:
    """Dense evaluation of every assembly block at a numeric point.

    Always returns the gain/system rows (A, C, L1, L2, Omega, Sigma, S,
    Lambda, Ihat, M, Ccal); the storage- and supply-dependent blocks (Xi, P,
    Pi, Phi, Psi, diss, storage_pd) are included when P1/P2/P3, Q, R and a
    supply rate are provided. With a parametric supply rate, gamma must be
    given and J1 = -gamma I, J3 = gamma I are used.
    """
    s = _sizes(sys, eda)
    n, m, l, q, nu = s["n"], s["m"], s["l"], s["q"], s["nu"]
    d, vk, mu, beta = s["d"], s["vk"], s["mu"], s["beta"]
    width_state_cols = beta * n + q

    Ihat = eda.Ihat(n)
    MbigI = eda.Mbig(n)
    Lam = eda.Lambda(n)

    A_blk = _build_injection_row(
        [sys.A[i] for i in range(nu + 1)], list(sys.Ahat), eda, n, q
    )
    A_blk = np.hstack([A_blk[:, : width_state_cols - q], (sys.D1 - sys.D3)])
    C_blk = _build_injection_row(
        [sys.C[i] for i in range(nu + 1)], list(sys.Chat), eda, n, q
    )
    C_blk = np.hstack([C_blk[:, : width_state_cols - q], (sys.D2 - sys.D4)])
    L1 = _build_injection_row(list(gains.L), list(gains.Lhat), eda, l, q)
    L2 = _build_injection_row(list(gains.Lz), list(gains.Lzhat), eda, l, q)

    Ccal = blkdiag(kron(np.eye(beta), sys.Cmeas), np.zeros((q, q)))
    Omega = A_blk + L1 @ Ccal
    Sigma = C_blk + L2 @ Ccal

    S = np.zeros((n + d * n, width_state_cols))
    S[:n, :n] = np.eye(n)
    xi1_start = (1 + nu) * n
    S[n:, xi1_start : xi1_start + vk * n] = Ihat

    out = {
        "A": A_blk, "C": C_blk, "L1": L1, "L2": L2,
        "Omega": Omega, "Sigma": Sigma, "S": S,
        "Lambda": Lam, "Ihat": Ihat, "M": MbigI, "Ccal": Ccal,
    }
    if P1 is None:
        return out

    if supply.gamma_parametric:
        if gamma is None:
            raise ValueError("parametric supply rate needs a gamma value")
        J1 = -gamma * np.eye(m)
        J3 = gamma * np.eye(q)
    else:
        J1, J3 = supply.J1, supply.J3
    Jtil, J2 = supply.Jtil, supply.J2

    Qbig = blkdiag(*Q)
    Rbig = blkdiag(*R)
    first = blkdiag(Qbig + Rbig @ Lam, np.zeros((n, n)),
                    np.zeros((s["kappa"] * n, s["kappa"] * n)), np.zeros((q, q)))
    second = blkdiag(
        np.zeros((n, n)), Qbig,
        *[kron(np.eye(p.varkappa), R[i]) for i, p in enumerate(eda.per_interval)],
        *[kron(np.eye(p.mu), R[i]) for i, p in enumerate(eda.per_interval)],
        J3,
    )
    Xi = first - second

    ell = width_state_cols + m
    P_row = np.hstack(
        [P1, np.zeros((n, nu * n)), P2 @ Ihat, np.zeros((n, mu * n + q + m))]
    )
    Pi = np.hstack([Omega, np.zeros((n, m))])

    Pstack = np.vstack(
        [P2, np.zeros((nu * n, d * n)), Ihat.T @ P3, np.zeros((mu * n + q + m, d * n))]
    )
    Mext = np.hstack([MbigI, np.zeros((d * n, mu * n + q + m))])
    Jstack = np.vstack([np.zeros((beta * n, m)), -J2.T, Jtil])
    Sigext = np.hstack([Sigma, np.zeros((m, m))])
    Phi = sy(Pstack @ Mext + Jstack @ Sigext) + blkdiag(Xi, J1)

    Pfull = np.block([[P1, P2], [P2.T, P3]])
    Mrow_state = np.hstack([MbigI, np.zeros((d * n, mu * n + q))])
    Psi = sy(
        S.T @ Pfull @ np.vstack([Omega, Mrow_state])
        - np.vstack([np.zeros((beta * n, m)), J2.T]) @ Sigma
    ) + Xi

    diss = np.block([[Psi, Sigma.T @ Jtil.T], [Jtil @ Sigma, J1]])
    storage_pd = np.block(
        [
            [P1, P2],
            [P2.T, P3 + blkdiag(*[kron(np.eye(p.d), Q[i])
                                  for i, p in enumerate(eda.per_interval)])],
        ]
    )

    out.update(
        Xi=Xi, P=P_row, Pi=Pi, Phi=Phi, Psi=Psi,
        diss=diss, storage_pd=storage_pd, ell=ell,
        Qbig=Qbig, Rbig=Rbig, J1=J1, J3=J3,
    )
    return out


def _gains_layout(sys: DelaySystem, eda: EDAData, prefix: str = "L"):
    """(name, rows, cols) for the state-gain family under a given prefix."""
    n, l = sys.n, sys.l
    rows = n
    out = [(f"{prefix}{i}", rows, l) for i in range(sys.nu + 1)]
    out += [
        (f"{prefix}hat{i + 1}", rows, p.kappa * l)
        for i, p in enumerate(eda.per_interval)
    ]
    return out


def _output_gains_layout(sys: DelaySystem, eda: EDAData):
    m, l = sys.m, sys.l
    out = [(f"Lz{i}", m, l) for i in range(sys.nu + 1)]
    out += [
        (f"Lzhat{i + 1}", m, p.kappa * l) for i, p in enumerate(eda.per_interval)
    ]
    return out


def gains_from_values(
    values: dict, sys: DelaySystem, eda: EDAData, state_prefix: str = "L",
    W: np.ndarray | None = None,
) -> EstimatorGains:
    """Collect an EstimatorGains from a (possibly partial) value dict; missing
    blocks read as zero. With W given, state gains are recovered as W^-1 U."""
    n, m, l = sys.n, sys.m, sys.l
    nu = sys.nu

    def get(name, r, c):
        v = values.get(name)
        return np.zeros((r, c)) if v is None else np.asarray(v, dtype=float)

    L = [get(f"{state_prefix}{i}", n, l) for i in range(nu + 1)]
    Lhat = [
        get(f"{state_prefix}hat{i + 1}", n, p.kappa * l)
        for i, p in enumerate(eda.per_interval)
    ]
    if W is not None:
        Winv = np.linalg.inv(W)
        L = [Winv @ x for x in L]
        Lhat = [Winv @ x for x in Lhat]
    return EstimatorGains(
        L=tuple(L),
        Lhat=tuple(Lhat),
        Lz=tuple(get(f"Lz{i}", m, l) for i in range(nu + 1)),
        Lzhat=tuple(
            get(f"Lzhat{i + 1}", m, p.kappa * l)
            for i, p in enumerate(eda.per_interval)
        ),
    )


def _declare_storage(vs: VarSpace, sys: DelaySystem, eda: EDAData, with_P12: bool):
    n, nu, d = sys.n, sys.nu, eda.dims.d
    if with_P12:
        vs.add("P1", n, symmetric=True)
        vs.add("P2", n, d * n)
    vs.add("P3", d * n, symmetric=True)
    for i in range(nu):
        vs.add(f"Q{i + 1}", n, symmetric=True)
    for i in range(nu):
        vs.add(f"R{i + 1}", n, symmetric=True)


def _declare_gains(vs: VarSpace, sys: DelaySystem, eda: EDAData,
                   prefix: str, delay_free: bool, with_output: bool):
    for name, r, c in _gains_layout(sys, eda, prefix):
        if delay_free and name not in (f"{prefix}0",):
            continue
        vs.add(name, r, c)
    if with_output:
        for name, r, c in _output_gains_layout(sys, eda):
            if delay_free and name != "Lz0":
                continue
            vs.add(name, r, c)


def _storage_from_values(v: dict, fixed: dict | None = None):
    g = dict(v)
    if fixed:
        g.update(fixed)
    return g


def build_theorem1(
    sys: DelaySystem,
    eda: EDAData,
    supply: SupplyRate,
    fix_gains: EstimatorGains | None = None,
    fix_P: tuple | None = None,
    delay_free: bool = False,
) -> SynthesisProblem:
    """Synthesis condition with one bilinear side frozen.

    Exactly one of fix_gains (all injection gains held at the given values) or
    fix_P = (P1, P2) must be supplied; the other family becomes the decision
    side, keeping every constraint affine.
    """
    if (fix_gains is None) == (fix_P is None):
        raise ValueError("exactly one of fix_gains / fix_P must be given")
    vs = VarSpace()
    _declare_storage(vs, sys, eda, with_P12=fix_P is None)
    if fix_gains is None:
        _declare_gains(vs, sys, eda, "L", delay_free, with_output=True)
    if supply.gamma_parametric:
        vs.add("gamma", 1, 1)

    P1f, P2f = (None, None) if fix_P is None else fix_P

    def eval_all(vals: dict) -> dict:
        gains = fix_gains if fix_gains is not None else gains_from_values(vals, sys, eda)
        P1 = vals["P1"] if fix_P is None else P1f
        P2 = vals["P2"] if fix_P is None else P2f
        core = assemble_core(
            sys, eda, gains,
            P1=P1, P2=P2, P3=vals["P3"],
            Q=[vals[f"Q{i + 1}"] for i in range(sys.nu)],
            R=[vals[f"R{i + 1}"] for i in range(sys.nu)],
            supply=supply,
            gamma=float(vals["gamma"][0, 0]) if supply.gamma_parametric else None,
        )
        return {
            "storage_pd": core["storage_pd"],
            "weights_Q_pd": core["Qbig"],
            "weights_R_pd": core["Rbig"],
            "dissipation": core["diss"],
        }

    senses = {
        "storage_pd": "pos", "weights_Q_pd": "pos",
        "weights_R_pd": "pos", "dissipation": "neg",
    }
    cons = _probe_affine(vs, eval_all, senses)
    obj = np.zeros(vs.total)
    if supply.gamma_parametric:
        obj[vs.blocks["gamma"].offset] = 1.0
    meta = {
        "kind": "theorem1",
        "mode": "fix_gains" if fix_gains is not None else "fix_P",
        "delay_free": delay_free,
        "fixed_gains": fix_gains,
        "fixed_P": fix_P,
        "dims": _sizes(sys, eda),
    }
    return SynthesisProblem(vs, cons, obj, meta)


def build_theorem2(
    sys: DelaySystem,
    eda: EDAData,
    supply: SupplyRate,
    alpha: Sequence[float] | None = None,
    delay_free: bool = False,
) -> SynthesisProblem:
    """Convex synthesis via a common-multiplier change of variables U = W L.

    alpha is the beta-vector of multiplier weights; alpha[0] must be nonzero
    (default: 30 on the first entry, zeros elsewhere). State gains are
    recovered afterwards as L = W^-1 U.
    """
    beta = eda.dims.beta
    n, m, q = sys.n, sys.m, sys.q
    if alpha is None:
        alpha = np.zeros(beta)
        alpha[0] = 30.0
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (beta,):
        raise ValueError(f"alpha must have length beta = {beta}")
    if alpha[0] == 0.0:
        raise ValueError("alpha[0] must be nonzero")

    vs = VarSpace()
    _declare_storage(vs, sys, eda, with_P12=True)
    vs.add("W", n, symmetric=True)
    _declare_gains(vs, sys, eda, "U", delay_free, with_output=False)
    # output-estimate gains stay direct decision variables
    for name, r, c in _output_gains_layout(sys, eda):
        if delay_free and name != "Lz0":
            continue
        vs.add(name, r, c)
    if supply.gamma_parametric:
        vs.add("gamma", 1, 1)

    col = np.vstack(
        [np.eye(n)] + [a * np.eye(n) for a in alpha] + [np.zeros((q + m, n))]
    )

    def eval_all(vals: dict) -> dict:
        # gains with U in the state slots (only their product with Ccal is
        # used below) and the true output gains
        ugains = gains_from_values(vals, sys, eda, state_prefix="U")
        core = assemble_core(
            sys, eda, ugains,
            P1=vals["P1"], P2=vals["P2"], P3=vals["P3"],
            Q=[vals[f"Q{i + 1}"] for i in range(sys.nu)],
            R=[vals[f"R{i + 1}"] for i in range(sys.nu)],
            supply=supply,
            gamma=float(vals["gamma"][0, 0]) if supply.gamma_parametric else None,
        )
        W = vals["W"]
        U1 = core["L1"]  # the U-family assembled in the injection layout
        PiHat = np.hstack([W @ core["A"] + U1 @ core["Ccal"], np.zeros((n, m))])
        row = np.hstack([-W, PiHat])
        embed = np.block([[np.zeros((n, n)), core["P"]], [core["P"].T, core["Phi"]]])
        cond = sy(col @ row) + embed
        return {
            "storage_pd": core["storage_pd"],
            "weights_Q_pd": core["Qbig"],
            "weights_R_pd": core["Rbig"],
            "dissipation_mult": cond,
        }

    senses = {
        "storage_pd": "pos", "weights_Q_pd": "pos",
        "weights_R_pd": "pos", "dissipation_mult": "neg",
    }
    cons = _probe_affine(vs, eval_all, senses)
    obj = np.zeros(vs.total)
    if supply.gamma_parametric:
        obj[vs.blocks["gamma"].offset] = 1.0
    meta = {
        "kind": "theorem2",
        "alpha": alpha,
        "delay_free": delay_free,
        "dims": _sizes(sys, eda),
    }
    return SynthesisProblem(vs, cons, obj, meta)


def build_inner_approx(
    sys: DelaySystem,
    eda: EDAData,
    supply: SupplyRate,
    anchor: tuple,
    rho1: float = 0.01,
    rho2: float = 0.01,
    gamma_weight: float = 1.0,
    delay_free: bool = False,
) -> SynthesisProblem:
    """Anchored inner convex approximation of the bilinear condition.

    anchor = (P1_t, P2_t, gains_t): the storage couple and state gains of the
    current iterate. The overestimate's slack variable Z lives in (0, I)
    through the diagonal blocks of the Schur form; proximity of (P-row, state
    gains) to the anchor enters the objective through trace epigraph blocks
    T1ep / T2ep with weights rho1 / rho2, plus gamma_weight * gamma.
    """
    if rho1 <= 0 or rho2 <= 0:
        raise ValueError("rho1, rho2 must be positive")
    P1t, P2t, gains_t = anchor
    n, m, l, q, nu = sys.n, sys.m, sys.l, sys.q, sys.nu
    beta, mu_tot = eda.dims.beta, eda.dims.mu
    ell = beta * n + q + m
    gcols = (1 + nu + eda.dims.kappa) * l  # columns of the raw state-gain row

    vs = VarSpace()
    _declare_storage(vs, sys, eda, with_P12=True)
    _declare_gains(vs, sys, eda, "L", delay_free, with_output=True)
    if supply.gamma_parametric:
        vs.add("gamma", 1, 1)
    vs.add("Z", n, symmetric=True)
    vs.add("T1ep", n, symmetric=True)
    vs.add("T2ep", n, symmetric=True)

    Ihat = eda.Ihat(n)
    Ptil_row = np.hstack(
        [P1t, np.zeros((n, nu * n)), P2t @ Ihat, np.zeros((n, mu_tot * n + q + m))]
    )
    Ccal_big = blkdiag(kron(np.eye(beta), sys.Cmeas), np.zeros((q + m, q + m)))
    anchor_L1 = assemble_core(sys, eda, gains_t)["L1"]
    Ntil = np.hstack([anchor_L1, np.zeros((n, m))]) @ Ccal_big

    def raw_gain_row(g: EstimatorGains) -> np.ndarray:
        return np.hstack(list(g.L) + list(g.Lhat))

    Ltil_raw = raw_gain_row(gains_t)

    def eval_all(vals: dict) -> dict:
        gains = gains_from_values(vals, sys, eda)
        core = assemble_core(
            sys, eda, gains,
            P1=vals["P1"], P2=vals["P2"], P3=vals["P3"],
            Q=[vals[f"Q{i + 1}"] for i in range(sys.nu)],
            R=[vals[f"R{i + 1}"] for i in range(sys.nu)],
            supply=supply,
            gamma=float(vals["gamma"][0, 0]) if supply.gamma_parametric else None,
        )
        P_row = core["P"]
        N = np.hstack([core["L1"], np.zeros((n, m))]) @ Ccal_big
        Phihat = sy(P_row.T @ np.hstack([core["A"], np.zeros((n, m))])) + core["Phi"]
        top = Phihat + sy(Ptil_row.T @ N + P_row.T @ Ntil - Ptil_row.T @ Ntil)
        Z = vals["Z"]
        inner = np.block(
            [
                [top, P_row.T - Ptil_row.T, N.T - Ntil.T],
                [P_row - Ptil_row, -Z, np.zeros((n, n))],
                [N - Ntil, np.zeros((n, n)), Z - np.eye(n)],
            ]
        )
        ep1 = np.block(
            [[vals["T1ep"], P_row - Ptil_row], [P_row.T - Ptil_row.T, np.eye(ell)]]
        )
        dL = raw_gain_row(gains) - Ltil_raw
        ep2 = np.block([[vals["T2ep"], dL], [dL.T, np.eye(gcols)]])
        return {
            "storage_pd": core["storage_pd"],
            "weights_Q_pd": core["Qbig"],
            "weights_R_pd": core["Rbig"],
            "dissipation_inner": inner,
            "prox_P": ep1,
            "prox_gains": ep2,
        }

    senses = {
        "storage_pd": "pos", "weights_Q_pd": "pos", "weights_R_pd": "pos",
        "dissipation_inner": "neg", "prox_P": "pos", "prox_gains": "pos",
    }
    cons = _probe_affine(vs, eval_all, senses)

    obj = np.zeros(vs.total)
    if supply.gamma_parametric and gamma_weight != 0.0:
        obj[vs.blocks["gamma"].offset] = gamma_weight
    for epname, rho in (("T1ep", rho1), ("T2ep", rho2)):
        blk = vs.blocks[epname]
        iu, ju = np.triu_indices(blk.rows)
        pos = blk.offset
        for a, b in zip(iu, ju):
            if a == b:
                obj[pos] += rho  # diagonal packed entries carry the trace
            pos += 1
    meta = {
        "kind": "inner_approx",
        "delay_free": delay_free,
        "anchor_P": (P1t, P2t),
        "anchor_gains": gains_t,
        "rho": (rho1, rho2),
        "gamma_weight": gamma_weight,
        "dims": _sizes(sys, eda),
    }
    return SynthesisProblem(vs, cons, obj, meta)


def dump_matrix(path, M) -> None:
    """Plain-text array dump (matrix-market array format) for inspection."""
    from scipy.io import mmwrite

    mmwrite(path, np.asarray(M, dtype=float))
