"""Data model: plant with pointwise and distributed delays, supply rates,
estimator gains, simulation-only injection hooks, and the built-in examples.

The plant is

    dx/dt = sum_i A_i x(t - r_i) + sum_i int_{I_i} Atil_i(tau) x(t+tau) dtau
            + D1 w(t) + f1(u_t, y_t)
    z(t)  = sum_i C_i x(t - r_i) + sum_i int_{I_i} Ctil_i(tau) x(t+tau) dtau
            + D2 w(t) + f2(u_t, y_t)
    y(t)  = Cmeas x(t)

with every distributed kernel decomposed as Atil_i(tau) = Ahat_i (g_i(tau) x I_n)
against the basis vector g_i of a BasisSpec. D3/D4 are the disturbance feeds of
the error dynamics (plant minus estimator disturbance channels).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .basis import BasisFn, BasisSpec
from .linalg import as2d

__all__ = [
    "DelaySystem",
    "SupplyRate",
    "EstimatorGains",
    "InjectionHooks",
    "validate",
    "preset_supply",
    "example_A",
    "example_B_hooks",
]


@dataclass(frozen=True)
class DelaySystem:
    n: int
    m: int
    l: int
    q: int
    delays: tuple            # (r_1, ..., r_nu), strictly increasing, positive
    A: tuple                 # nu+1 state matrices, n x n
    C: tuple                 # nu+1 output matrices, m x n
    Ahat: tuple              # nu decomposed state kernels, n x (kappa_i n)
    Chat: tuple              # nu decomposed output kernels, m x (kappa_i n)
    Cmeas: np.ndarray        # l x n measurement matrix
    D1: np.ndarray           # n x q
    D2: np.ndarray           # m x q
    D3: np.ndarray           # n x q
    D4: np.ndarray           # m x q

    @property
    def nu(self) -> int:
        return len(self.delays)

    @property
    def r_max(self) -> float:
        return float(self.delays[-1])


@dataclass(frozen=True)
class SupplyRate:
    """Quadratic supply rate s(zeta, w) = [zeta; w]^T [[Jtil^T J1^-1 Jtil, J2];
    [J2^T, J3]] [zeta; w] ... stored through its defining blocks.

    When gamma_parametric is set, J1 = -gamma I_m and J3 = gamma I_q with gamma
    a scalar decision variable of the synthesis problem; the stored J1/J3 then
    hold the gamma = 1 template.
    """

    Jtil: np.ndarray     # m x m
    J1: np.ndarray       # m x m symmetric, negative definite when concrete
    J2: np.ndarray       # m x q
    J3: np.ndarray       # q x q symmetric
    gamma_parametric: bool = False

    @property
    def m(self) -> int:
        return self.J1.shape[0]

    @property
    def q(self) -> int:
        return self.J3.shape[0]

    def concrete(self, gamma: float) -> "SupplyRate":
        """Freeze a parametric supply rate at a given gamma value."""
        if not self.gamma_parametric:
            return self
        if gamma <= 0:
            raise ValueError("gamma must be positive")
        return SupplyRate(
            Jtil=self.Jtil.copy(),
            J1=-gamma * np.eye(self.m),
            J2=self.J2.copy(),
            J3=gamma * np.eye(self.q),
            gamma_parametric=False,
        )


@dataclass(frozen=True)
class EstimatorGains:
    """Output-injection gains: L/Lhat drive the state estimate, Lz/Lzhat the
    output estimate. Pointwise lists have nu+1 entries (index 0 acts on the
    current measurement), distributed lists have nu entries."""

    L: tuple        # nu+1 of n x l
    Lhat: tuple     # nu of n x (kappa_i l)
    Lz: tuple       # nu+1 of m x l
    Lzhat: tuple    # nu of m x (kappa_i l)

    @classmethod
    def zeros(cls, sys: DelaySystem, kappa_i: Sequence[int]) -> "EstimatorGains":
        nu = sys.nu
        return cls(
            L=tuple(np.zeros((sys.n, sys.l)) for _ in range(nu + 1)),
            Lhat=tuple(np.zeros((sys.n, k * sys.l)) for k in kappa_i),
            Lz=tuple(np.zeros((sys.m, sys.l)) for _ in range(nu + 1)),
            Lzhat=tuple(np.zeros((sys.m, k * sys.l)) for k in kappa_i),
        )

    def to_doc(self) -> dict:
        """JSON-compatible gains document (versioned, with dimension header)."""
        n, l = self.L[0].shape
        m = self.Lz[0].shape[0]
        return {
            "version": 1,
            "dims": {
                "n": n, "l": l, "m": m,
                "nu": len(self.L) - 1,
                "kappa_i": [h.shape[1] // l for h in self.Lhat],
            },
            "L": [x.tolist() for x in self.L],
            "Lhat": [x.tolist() for x in self.Lhat],
            "Lz": [x.tolist() for x in self.Lz],
            "Lzhat": [x.tolist() for x in self.Lzhat],
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "EstimatorGains":
        if doc.get("version") != 1:
            raise ValueError(f"unsupported gains document version {doc.get('version')!r}")
        return cls(
            L=tuple(np.array(x, dtype=float) for x in doc["L"]),
            Lhat=tuple(np.array(x, dtype=float) for x in doc["Lhat"]),
            Lz=tuple(np.array(x, dtype=float) for x in doc["Lz"]),
            Lzhat=tuple(np.array(x, dtype=float) for x in doc["Lzhat"]),
        )


@dataclass(frozen=True)
class InjectionHooks:
    """Simulation-only feedback terms. Each receives history accessors
    u_t(s) / y_t(s) for s <= 0 (s = 0 is the current instant) and returns a
    vector; synthesis never sees these, since they cancel in the error
    dynamics. Continuity in t is expected but not enforced."""

    f1: Callable  # (u_t, y_t) -> R^n
    f2: Callable  # (u_t, y_t) -> R^m
    f3: Callable  # (u_t,) -> R^l

    @classmethod
    def none(cls, n: int, m: int, l: int) -> "InjectionHooks":
        return cls(
            f1=lambda u_t, y_t: np.zeros(n),
            f2=lambda u_t, y_t: np.zeros(m),
            f3=lambda u_t: np.zeros(l),
        )


def validate(sys: DelaySystem, spec: BasisSpec) -> list:
    """Collect every invariant violation as a message; empty list means ok."""
    errs = []
    r = list(sys.delays)
    if any(x <= 0 for x in r):
        errs.append(f"delays must be positive, got {r}")
    if any(b <= a for a, b in zip(r, r[1:])):
        errs.append(f"delays must be strictly increasing, got {r}")
    nu = sys.nu
    if spec.nu != nu:
        errs.append(f"basis has {spec.nu} intervals but the system has {nu} delays")
    rfull = [0.0] + r
    for i, (lo, hi) in enumerate(spec.intervals):
        if i < nu:
            want = (-rfull[i + 1], -rfull[i])
            if abs(lo - want[0]) > 1e-12 or abs(hi - want[1]) > 1e-12:
                errs.append(f"basis interval {i} is {(lo, hi)}, expected {want}")
    n, m, l, q = sys.n, sys.m, sys.l, sys.q
    if len(sys.A) != nu + 1:
        errs.append(f"need {nu + 1} pointwise A matrices, got {len(sys.A)}")
    if len(sys.C) != nu + 1:
        errs.append(f"need {nu + 1} pointwise C matrices, got {len(sys.C)}")
    for i, a in enumerate(sys.A):
        if a.shape != (n, n):
            errs.append(f"A[{i}] has shape {a.shape}, expected {(n, n)}")
    for i, c in enumerate(sys.C):
        if c.shape != (m, n):
            errs.append(f"C[{i}] has shape {c.shape}, expected {(m, n)}")
    if len(sys.Ahat) != nu or len(sys.Chat) != nu:
        errs.append(f"need {nu} decomposed kernel matrices, got "
                    f"{len(sys.Ahat)}/{len(sys.Chat)}")
    for i in range(min(nu, len(sys.Ahat), spec.nu)):
        kap = sum(spec.dims(i))
        if sys.Ahat[i].shape != (n, kap * n):
            errs.append(
                f"Ahat[{i}] has shape {sys.Ahat[i].shape}, expected "
                f"{(n, kap * n)} (kappa_{i + 1} n = {kap}*{n})"
            )
        if sys.Chat[i].shape != (m, kap * n):
            errs.append(
                f"Chat[{i}] has shape {sys.Chat[i].shape}, expected "
                f"{(m, kap * n)} (kappa_{i + 1} n = {kap}*{n})"
            )
    if sys.Cmeas.shape != (l, n):
        errs.append(f"Cmeas has shape {sys.Cmeas.shape}, expected {(l, n)}")
    for nm, d, shape in (
        ("D1", sys.D1, (n, q)), ("D2", sys.D2, (m, q)),
        ("D3", sys.D3, (n, q)), ("D4", sys.D4, (m, q)),
    ):
        if d.shape != shape:
            errs.append(f"{nm} has shape {d.shape}, expected {shape}")
    return errs


def preset_supply(
    kind: str,
    m: int,
    q: int,
    gamma: float | None = None,
    J1: np.ndarray | None = None,
) -> SupplyRate:
    """Standard supply-rate presets.

    l2gain: J1 = -gamma I_m, Jtil = I_m, J2 = 0, J3 = gamma I_q; omit gamma to
    make it a decision variable.  strict_passivity: caller supplies J1 (must be
    negative definite), Jtil = 0, J2 = I (m must equal q), J3 = 0.
    """
    if kind == "l2gain":
        if gamma is None:
            return SupplyRate(
                Jtil=np.eye(m), J1=-np.eye(m), J2=np.zeros((m, q)),
                J3=np.eye(q), gamma_parametric=True,
            )
        if gamma <= 0:
            raise ValueError("gamma must be positive")
        return SupplyRate(
            Jtil=np.eye(m), J1=-gamma * np.eye(m), J2=np.zeros((m, q)),
            J3=gamma * np.eye(q),
        )
    if kind == "strict_passivity":
        if J1 is None:
            raise ValueError("strict_passivity needs an explicit J1 (negative definite)")
        J1 = as2d(J1)
        w = np.linalg.eigvalsh(0.5 * (J1 + J1.T))
        if w.max() >= 0:
            raise ValueError("strict_passivity J1 must be negative definite")
        if m != q:
            raise ValueError("strict_passivity pairs output with disturbance: m must equal q")
        return SupplyRate(
            Jtil=np.zeros((m, m)), J1=0.5 * (J1 + J1.T), J2=np.eye(m), J3=np.zeros((q, q)),
        )
    raise ValueError(f"unknown supply-rate preset {kind!r}")


def _blocks_to_matrix(blocks: dict, count: int, rows: int, n: int) -> np.ndarray:
    """Assemble a rows x (count*n) kernel matrix from {member index: block}."""
    out = np.zeros((rows, count * n))
    for j, blk in blocks.items():
        out[:, j * n : (j + 1) * n] = blk
    return out


def example_A(
    sigma1: int = 1, sigma2: int = 1, lambda1: int = 1, lambda2: int = 1
) -> tuple:
    """Two-delay benchmark plant with oscillatory/reciprocal kernels.

    sigma_i >= 0 sets the polynomial degree and lambda_i >= 1 the number of
    harmonics in the differentiable basis part of interval i; kernel
    coefficient blocks are zero-padded onto added members.
    """
    if sigma1 < 0 or sigma2 < 0 or lambda1 < 1 or lambda2 < 1:
        raise ValueError("need sigma_i >= 0 and lambda_i >= 1")
    n = 2
    delays = (1.0, 1.7)

    def f_members(omega: float, sigma: int, lam: int):
        out = [BasisFn.constant()]
        out += [BasisFn.monomial(k) for k in range(1, sigma + 1)]
        out += [BasisFn.sine(omega * j) for j in range(1, lam + 1)]
        out += [BasisFn.cosine(omega * j) for j in range(1, lam + 1)]
        return out

    spec = BasisSpec.create(
        delays,
        phi_lists=[
            [BasisFn.exp_sine(17.0), BasisFn.exp_cosine(17.0)],
            [BasisFn.exp_sine(21.0), BasisFn.exp_cosine(21.0)],
        ],
        varphi_lists=[
            [BasisFn.recip_sine(0.1, 0.5)],
            [BasisFn.recip_cosine(-0.9, 0.5)],
        ],
        f_lists=[
            f_members(17.0, sigma1, lambda1),
            f_members(21.0, sigma2, lambda2),
        ],
    )

    kappa1 = 3 + 1 + sigma1 + 2 * lambda1
    kappa2 = 3 + 1 + sigma2 + 2 * lambda2
    sin1 = 4 + sigma1           # member index of sin(17 tau) in g_1
    cos2 = 4 + sigma2 + lambda2  # member index of cos(21 tau) in g_2

    Ahat1 = _blocks_to_matrix(
        {
            0: np.array([[0.0, 0.8], [0.0, 0.0]]),
            1: np.array([[0.0, -0.3], [0.0, 0.0]]),
            2: np.array([[0.0, 0.0], [1.0, 0.0]]),
            3: np.array([[0.1, 0.0], [0.3, 0.0]]),
            sin1: 3.0 * np.eye(2),
        },
        kappa1, n, n,
    )
    Ahat2 = _blocks_to_matrix(
        {
            0: np.array([[0.0, 0.0], [0.1, 0.0]]),
            1: np.array([[0.0, 0.3], [0.0, 0.0]]),
            2: np.array([[0.0, -1.0], [0.0, 0.0]]),
            3: np.array([[0.0, 0.0], [0.0, 0.2]]),
            cos2: -10.0 * np.eye(2),
        },
        kappa2, n, n,
    )
    Chat1 = _blocks_to_matrix(
        {
            0: np.array([[0.1, 0.0]]),
            1: np.array([[0.1, 0.0]]),
            2: np.array([[0.0, 0.4]]),
            3: np.array([[0.0, 1.0]]),
        },
        kappa1, 1, n,
    )
    Chat2 = _blocks_to_matrix(
        {
            0: np.array([[0.0, 0.2]]),
            1: np.array([[0.0, 1.0]]),
            3: np.array([[0.2, 0.3]]),
        },
        kappa2, 1, n,
    )

    sys = DelaySystem(
        n=n, m=1, l=1, q=1,
        delays=delays,
        A=(
            np.array([[-3.0, 0.4], [0.0, 0.2]]),
            np.array([[0.2, 0.8], [-0.4, -0.5]]),
            np.array([[-0.2, 0.1], [0.3, 0.2]]),
        ),
        C=(
            np.array([[0.0, 1.0]]),
            np.array([[-0.1, 0.0]]),
            np.array([[0.0, 0.1]]),
        ),
        Ahat=(Ahat1, Ahat2),
        Chat=(Chat1, Chat2),
        Cmeas=np.array([[0.0, 1.0]]),
        D1=np.array([[1.5], [0.5]]),
        D2=np.array([[0.7]]),
        D3=np.array([[0.2], [0.3]]),
        D4=np.array([[0.2]]),
    )
    return sys, spec


def example_B_hooks(alpha: float = 0.5) -> InjectionHooks:
    """Non-smooth static output feedback added to the benchmark plant.

    The state hook is -[0; 30 y + 30 |y|^alpha sign(y)] with y the current
    measurement; output and input hooks vanish. alpha in (0, 1] (default 0.5)
    controls the non-Lipschitz strength at y = 0.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")

    def f1(u_t, y_t):
        y = float(np.asarray(y_t(0.0)).reshape(()))
        return np.array([0.0, -(30.0 * y + 30.0 * abs(y) ** alpha * np.sign(y))])

    return InjectionHooks(
        f1=f1,
        f2=lambda u_t, y_t: np.zeros(1),
        f3=lambda u_t: np.zeros(1),
    )
