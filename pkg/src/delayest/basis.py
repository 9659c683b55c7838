"""Per-interval basis vectors for distributed-delay kernels and the
decomposition data built from them.

Each delay interval carries a stacked basis ``g = [phi; varphi; f]``:

* ``phi_list``    (length mu):    members approximated in least squares by the rest,
* ``varphi_list`` (length delta): members kept exactly but not differentiated,
* ``f_list``      (length d):     members whose derivative must again lie in the
                                  span of ``h = [varphi; f]``.

``build_eda`` computes every Gramian, the least-squares coefficients and error
Gramian, the congruence factors ``T`` / ``Ttil``, the derivative matrices, and
the aggregate selector/transport matrices needed by the synthesis layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad_vec

from .linalg import (
    NotPositiveDefinite,
    blkdiag,
    invsqrt_pd,
    kron,
    pd_tol,
    sqrt_pd,
)

__all__ = [
    "BasisFn",
    "BasisSpec",
    "EDAData",
    "IntervalEDA",
    "EDADims",
    "DerivativeNotInSpan",
    "QuadratureError",
    "eval_basis",
    "derive_M",
    "quad_gram",
    "build_eda",
]

_POLE_MARGIN = 1e-8


class DerivativeNotInSpan(ValueError):
    """An f_list member's derivative cannot be written in span(h)."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach the requested tolerance."""


@dataclass(frozen=True)
class BasisFn:
    """One scalar basis function from the closed catalog.

    Kinds: constant, monomial(k), sine(a), cosine(a), exp_sine(a),
    exp_cosine(a), recip_sine(c, b), recip_cosine(c, b),
    sampled_table(grid, values), custom(fn).
    """

    kind: str
    k: int = 0
    a: float = 0.0
    c: float = 0.0
    b: float = 0.0
    grid: tuple = ()
    values: tuple = ()
    fn: Callable[[np.ndarray], np.ndarray] | None = None

    # -- factories ---------------------------------------------------------
    @classmethod
    def constant(cls) -> "BasisFn":
        return cls("constant")

    @classmethod
    def monomial(cls, k: int) -> "BasisFn":
        if k < 0:
            raise ValueError("monomial degree must be >= 0")
        return cls("monomial", k=int(k))

    @classmethod
    def sine(cls, a: float) -> "BasisFn":
        return cls("sine", a=float(a))

    @classmethod
    def cosine(cls, a: float) -> "BasisFn":
        return cls("cosine", a=float(a))

    @classmethod
    def exp_sine(cls, a: float) -> "BasisFn":
        return cls("exp_sine", a=float(a))

    @classmethod
    def exp_cosine(cls, a: float) -> "BasisFn":
        return cls("exp_cosine", a=float(a))

    @classmethod
    def recip_sine(cls, c: float, b: float = 0.0) -> "BasisFn":
        return cls("recip_sine", c=float(c), b=float(b))

    @classmethod
    def recip_cosine(cls, c: float, b: float = 0.0) -> "BasisFn":
        return cls("recip_cosine", c=float(c), b=float(b))

    @classmethod
    def sampled_table(cls, grid, values) -> "BasisFn":
        g = np.asarray(grid, dtype=float)
        v = np.asarray(values, dtype=float)
        if g.ndim != 1 or g.shape != v.shape or g.size < 2:
            raise ValueError("sampled_table needs matching 1-D grid/values, >= 2 nodes")
        if np.any(np.diff(g) <= 0):
            raise ValueError("sampled_table grid must be strictly increasing")
        return cls("sampled_table", grid=tuple(g), values=tuple(v))

    @classmethod
    def custom(cls, fn: Callable) -> "BasisFn":
        return cls("custom", fn=fn)

    # -- evaluation --------------------------------------------------------
    def __call__(self, tau):
        t = np.asarray(tau, dtype=float)
        k = self.kind
        if k == "constant":
            return np.ones_like(t)
        if k == "monomial":
            return t**self.k
        if k == "sine":
            return np.sin(self.a * t)
        if k == "cosine":
            return np.cos(self.a * t)
        if k == "exp_sine":
            return np.exp(np.sin(self.a * t))
        if k == "exp_cosine":
            return np.exp(np.cos(self.a * t))
        if k == "recip_sine":
            return np.sin(1.0 / (t - self.c)) + self.b
        if k == "recip_cosine":
            return np.cos(1.0 / (t - self.c)) + self.b
        if k == "sampled_table":
            return np.interp(t, np.asarray(self.grid), np.asarray(self.values))
        if k == "custom":
            return np.asarray(self.fn(t), dtype=float)
        raise ValueError(f"unknown basis kind {k!r}")

    def pole(self) -> float | None:
        """Location of the singularity, if the kind has one."""
        return self.c if self.kind in ("recip_sine", "recip_cosine") else None

    def check_interval(self, lo: float, hi: float) -> None:
        p = self.pole()
        if p is not None and lo - _POLE_MARGIN <= p <= hi + _POLE_MARGIN:
            raise ValueError(
                f"{self.kind} pole at tau={p} lies inside the interval [{lo}, {hi}]"
            )
        if self.kind == "sampled_table":
            g = np.asarray(self.grid)
            if g[0] > lo + 1e-12 or g[-1] < hi - 1e-12:
                raise ValueError("sampled_table grid does not cover the interval")

    def canonical_key(self):
        """Identity used to match members when expressing derivatives.

        monomial(0) and cosine(0) are both the constant function.
        """
        k = self.kind
        if k == "constant" or (k == "monomial" and self.k == 0):
            return ("constant",)
        if k == "cosine" and self.a == 0.0:
            return ("constant",)
        if k == "monomial":
            return ("monomial", self.k)
        if k in ("sine", "cosine", "exp_sine", "exp_cosine"):
            return (k, self.a)
        if k in ("recip_sine", "recip_cosine"):
            return (k, self.c, self.b)
        if k == "sampled_table":
            return (k, self.grid, self.values)
        return (k, id(self.fn))


@dataclass(frozen=True)
class BasisSpec:
    """Per-interval basis layout. intervals[i] = (lo_i, hi_i) with lo < hi <= 0
    and contiguous coverage hi_i == lo_{i-1} going back in time."""

    intervals: tuple
    phi_lists: tuple
    varphi_lists: tuple
    f_lists: tuple

    @classmethod
    def create(
        cls,
        delays: Sequence[float],
        phi_lists: Sequence[Sequence[BasisFn]],
        varphi_lists: Sequence[Sequence[BasisFn]],
        f_lists: Sequence[Sequence[BasisFn]],
    ) -> "BasisSpec":
        r = [0.0] + [float(x) for x in delays]
        if any(b <= a for a, b in zip(r, r[1:])):
            raise ValueError("delays must be strictly increasing and positive")
        nu = len(delays)
        if not (len(phi_lists) == len(varphi_lists) == len(f_lists) == nu):
            raise ValueError("need one phi/varphi/f list per delay interval")
        ivals = tuple((-r[i + 1], -r[i]) for i in range(nu))
        return cls(
            intervals=ivals,
            phi_lists=tuple(tuple(p) for p in phi_lists),
            varphi_lists=tuple(tuple(p) for p in varphi_lists),
            f_lists=tuple(tuple(p) for p in f_lists),
        )

    @property
    def nu(self) -> int:
        return len(self.intervals)

    def members(self, i: int):
        """(phi, varphi, f) tuples for interval i (0-based)."""
        return self.phi_lists[i], self.varphi_lists[i], self.f_lists[i]

    def dims(self, i: int):
        """(mu_i, delta_i, d_i) member counts for interval i."""
        return (
            len(self.phi_lists[i]),
            len(self.varphi_lists[i]),
            len(self.f_lists[i]),
        )

    def validate(self) -> None:
        for i, (lo, hi) in enumerate(self.intervals):
            if not lo < hi:
                raise ValueError(f"interval {i} is empty: [{lo}, {hi}]")
            phi, varphi, f = self.members(i)
            if len(f) < 1:
                raise ValueError(f"interval {i}: f_list must have at least one member")
            for fn in (*phi, *varphi, *f):
                fn.check_interval(lo, hi)
            for fn in f:
                if fn.kind == "sampled_table":
                    raise ValueError(
                        f"interval {i}: sampled_table not allowed in f_list "
                        "(no reliable derivative)"
                    )


def eval_basis(spec: BasisSpec, i: int, tau: float) -> np.ndarray:
    """Stacked evaluation [phi; varphi; f] at a point of interval i."""
    lo, hi = spec.intervals[i]
    if not (lo - 1e-12 <= tau <= hi + 1e-12):
        raise ValueError(f"tau={tau} outside interval {i} = [{lo}, {hi}]")
    phi, varphi, f = spec.members(i)
    for fn in (*phi, *varphi, *f):
        p = fn.pole()
        if p is not None and abs(tau - p) < _POLE_MARGIN:
            raise ValueError(f"tau={tau} within {_POLE_MARGIN} of a pole at {p}")
    return np.array([fn(tau) for fn in (*phi, *varphi, *f)], dtype=float)


def _derivative_terms(fn: BasisFn):
    """Derivative of an f_list member as [(coefficient, canonical_key)] or None."""
    k = fn.kind
    if k == "constant" or (k == "monomial" and fn.k == 0):
        return []
    if k == "monomial":
        key = ("constant",) if fn.k == 1 else ("monomial", fn.k - 1)
        return [(float(fn.k), key)]
    if k == "sine":
        if fn.a == 0.0:
            return []  # sin(0) is identically zero; derivative too
        return [(fn.a, ("cosine", fn.a))]
    if k == "cosine":
        if fn.a == 0.0:
            return []
        return [(-fn.a, ("sine", fn.a))]
    return None


def derive_M(spec: BasisSpec, i: int) -> np.ndarray:
    """Coefficient matrix expressing d(f)/dtau in span(h), shape d_i x kappa_i.

    The leading mu_i columns (the phi block) are zero by construction; the
    trailing varkappa_i columns act on h = [varphi; f].
    """
    phi, varphi, f = spec.members(i)
    mu = len(phi)
    h = (*varphi, *f)
    keys = [g.canonical_key() for g in h]
    rows = []
    for fn in f:
        terms = _derivative_terms(fn)
        if terms is None:
            raise DerivativeNotInSpan(
                f"interval {i}: derivative of {fn.kind} member is not in the "
                "catalog span; move it to phi_list or varphi_list"
            )
        row = np.zeros(len(h))
        for coeff, key in terms:
            try:
                j = keys.index(key)
            except ValueError:
                raise DerivativeNotInSpan(
                    f"interval {i}: derivative of {fn.kind}"
                    f"{'' if fn.kind == 'constant' else f'({fn.a or fn.k})'} needs a "
                    f"member with key {key} in varphi_list or f_list"
                ) from None
            row[j] += coeff
        rows.append(row)
    mh = np.array(rows).reshape(len(f), len(h))
    full = np.hstack([np.zeros((len(f), mu)), mh])

    # cheap pointwise verification against central differences
    lo, hi = spec.intervals[i]
    step = 1e-6 * max(1.0, hi - lo)
    taus = np.linspace(lo + 2 * step, hi - 2 * step, 16)
    for t in taus:
        fp = (np.array([g(t + step) for g in f]) - np.array([g(t - step) for g in f])) / (
            2 * step
        )
        hv = np.array([g(t) for g in h])
        if np.max(np.abs(fp - mh @ hv)) > 1e-5 * (1.0 + np.max(np.abs(fp))):
            raise DerivativeNotInSpan(
                f"interval {i}: derivative matrix failed finite-difference check"
            )
    return full


def _table_nodes(fns, lo: float, hi: float) -> np.ndarray | None:
    """Union of sampled_table grids clipped to [lo, hi], or None if no tables."""
    grids = [np.asarray(fn.grid) for fn in fns if fn.kind == "sampled_table"]
    if not grids:
        return None
    nodes = np.unique(np.concatenate([g[(g >= lo) & (g <= hi)] for g in grids] + [np.array([lo, hi])]))
    return nodes


def quad_gram(
    fnsA: Sequence[BasisFn],
    fnsB: Sequence[BasisFn],
    interval,
    tol: float = 1e-10,
) -> np.ndarray:
    """Cross Gramian: integral of fnsA(tau) fnsB(tau)^T over the interval.

    Analytic kinds use adaptive quadrature with absolute tolerance tol per
    entry; if any sampled_table member is involved, the composite trapezoid
    rule on the union of table grids is used instead (the tables limit the
    attainable accuracy anyway).
    """
    lo, hi = float(interval[0]), float(interval[1])
    if not lo < hi:
        raise ValueError(f"empty integration interval [{lo}, {hi}]")
    for fn in (*fnsA, *fnsB):
        fn.check_interval(lo, hi)
    nA, nB = len(fnsA), len(fnsB)
    if nA == 0 or nB == 0:
        return np.zeros((nA, nB))

    nodes = _table_nodes((*fnsA, *fnsB), lo, hi)
    if nodes is not None:
        va = np.array([fn(nodes) for fn in fnsA])  # nA x len(nodes)
        vb = np.array([fn(nodes) for fn in fnsB])
        prod = va[:, None, :] * vb[None, :, :]
        return np.trapezoid(prod, nodes, axis=-1)

    def integrand(t):
        a = np.array([fn(t) for fn in fnsA])
        b = np.array([fn(t) for fn in fnsB])
        return np.outer(a, b)

    res, err = quad_vec(integrand, lo, hi, epsabs=tol, epsrel=1e-13, norm="max")
    if err > 10 * max(tol, 1e-14):
        raise QuadratureError(
            f"quadrature error estimate {err:.2e} exceeds tolerance {tol:.2e}"
        )
    return res


@dataclass(frozen=True)
class IntervalEDA:
    """All decomposition data for one delay interval."""

    lo: float
    hi: float
    mu: int
    delta: int
    d: int
    G: np.ndarray          # kappa x kappa Gramian of g
    Y: np.ndarray          # varkappa x varkappa Gramian of h
    Gamma: np.ndarray      # mu x varkappa cross Gramian of phi against h
    E: np.ndarray          # mu x mu least-squares error Gramian
    F: np.ndarray          # d x d Gramian of f
    M: np.ndarray          # d x kappa derivative matrix (phi columns zero)
    T: np.ndarray          # kappa x varkappa congruence factor
    Ttil: np.ndarray       # kappa x mu residual factor
    sqrtY: np.ndarray
    invsqrtY: np.ndarray
    sqrtE: np.ndarray
    sqrtFinv: np.ndarray
    f_at_lower: np.ndarray  # f evaluated at tau = lo (the older endpoint)
    f_at_upper: np.ndarray  # f evaluated at tau = hi (the newer endpoint)
    cond_G: float
    cond_Y: float
    cond_F: float

    @property
    def kappa(self) -> int:
        return self.mu + self.delta + self.d

    @property
    def varkappa(self) -> int:
        return self.delta + self.d

    @property
    def Mh(self) -> np.ndarray:
        """Derivative matrix restricted to the h block (d x varkappa)."""
        return self.M[:, self.mu :]


@dataclass(frozen=True)
class EDADims:
    nu: int
    mu_i: tuple
    delta_i: tuple
    d_i: tuple
    kappa_i: tuple
    varkappa_i: tuple

    @property
    def mu(self) -> int:
        return sum(self.mu_i)

    @property
    def d(self) -> int:
        return sum(self.d_i)

    @property
    def kappa(self) -> int:
        return sum(self.kappa_i)

    @property
    def varkappa(self) -> int:
        return sum(self.varkappa_i)

    @property
    def beta(self) -> int:
        return 1 + self.nu + self.kappa


@dataclass(frozen=True)
class EDAData:
    """Decomposition data for all intervals plus aggregate operators."""

    spec: BasisSpec
    delays: tuple
    per_interval: tuple          # of IntervalEDA
    dims: EDADims
    sel_base: np.ndarray         # d x varkappa block diagonal, selects xi0 from xi1
    transport_base: np.ndarray   # d x (1 + nu + varkappa) boundary/derivative rows
    rhat: tuple                  # interval lengths r_i - r_{i-1}

    def Ihat(self, n: int) -> np.ndarray:
        """Selector with the state dimension mixed in: xi0 = Ihat(n) xi1."""
        return kron(self.sel_base, np.eye(n))

    def Mbig(self, n: int) -> np.ndarray:
        """Transport operator: d/dt xi0 = Mbig(n) [e(t); delayed e's; xi1]."""
        return kron(self.transport_base, np.eye(n))

    def Lambda(self, n: int) -> np.ndarray:
        """Block diagonal of interval lengths, inflated by the state dimension."""
        return kron(np.diag(self.rhat), np.eye(n))


def _pd_or_raise(mat: np.ndarray, what: str) -> np.ndarray:
    m = 0.5 * (mat + mat.T)
    if m.size:
        w = np.linalg.eigvalsh(m)
        if w.min() <= pd_tol(w):
            raise NotPositiveDefinite(
                f"{what} is not positive definite (min eig {w.min():.3e}); "
                "the basis members are numerically linearly dependent"
            )
    return m


def build_eda(
    spec: BasisSpec, delays: Sequence[float] | None = None, tol: float = 1e-10
) -> EDAData:
    """Compute all decomposition data for the given basis layout.

    When delays are given they must reproduce the interval endpoints stored in
    the spec; without them the intervals are taken at face value (useful for
    standalone approximation studies on arbitrary intervals).
    """
    spec.validate()
    if delays is not None:
        r = [0.0] + [float(x) for x in delays]
        if len(delays) != spec.nu:
            raise ValueError("number of delays does not match the basis intervals")
        for i, (lo, hi) in enumerate(spec.intervals):
            if abs(lo + r[i + 1]) > 1e-12 or abs(hi + r[i]) > 1e-12:
                raise ValueError(
                    f"interval {i} endpoints {(lo, hi)} do not match delays {delays}"
                )
        stored_delays = tuple(float(x) for x in delays)
    else:
        stored_delays = tuple(-lo for lo, _ in spec.intervals)

    per = []
    for i, (lo, hi) in enumerate(spec.intervals):
        phi, varphi, f = spec.members(i)
        mu, delta, d = len(phi), len(varphi), len(f)
        g = (*phi, *varphi, *f)
        G = quad_gram(g, g, (lo, hi), tol)
        G = _pd_or_raise(G, f"interval {i} Gramian of g")
        Y = _pd_or_raise(G[mu:, mu:], f"interval {i} Gramian of h")
        Gamma = G[:mu, mu:].copy()
        Phi2 = G[:mu, :mu]
        F = _pd_or_raise(Y[delta:, delta:], f"interval {i} Gramian of f")

        Yinv = np.linalg.inv(Y)
        coeffs = Gamma @ Yinv
        E = _pd_or_raise(Phi2 - coeffs @ Gamma.T, f"interval {i} error Gramian") \
            if mu else np.zeros((0, 0))

        # quadrature self-consistency: the residual must be orthogonal to h
        if mu:
            h = (*varphi, *f)

            def resid_integrand(t, _c=coeffs, _phi=phi, _h=h):
                pv = np.array([fn(t) for fn in _phi])
                hv = np.array([fn(t) for fn in _h])
                return np.outer(pv - _c @ hv, hv)

            if _table_nodes(g, lo, hi) is None:
                resid, _ = quad_vec(resid_integrand, lo, hi, epsabs=tol, norm="max")
                scale = 1.0 + float(np.abs(Gamma).max())
                if np.abs(resid).max() > 1e-8 * scale:
                    raise QuadratureError(
                        f"interval {i}: least-squares residual is not orthogonal "
                        f"to h (|.|max = {np.abs(resid).max():.2e}); quadrature "
                        "tolerance too loose for this basis"
                    )

        sqrtY = sqrt_pd(Y)
        invsY = invsqrt_pd(Y)
        sqrtE = sqrt_pd(E) if mu else np.zeros((0, 0))
        sqrtFinv = invsqrt_pd(F)
        vk = delta + d
        T = np.vstack([coeffs @ sqrtY, sqrtY]) if mu else sqrtY.copy()
        Ttil = np.vstack([sqrtE, np.zeros((vk, mu))])

        M = derive_M(spec, i)
        fvals_lo = np.array([fn(lo) for fn in f], dtype=float)
        fvals_hi = np.array([fn(hi) for fn in f], dtype=float)

        per.append(
            IntervalEDA(
                lo=lo, hi=hi, mu=mu, delta=delta, d=d,
                G=G, Y=Y, Gamma=Gamma, E=E, F=F, M=M, T=T, Ttil=Ttil,
                sqrtY=sqrtY, invsqrtY=invsY, sqrtE=sqrtE, sqrtFinv=sqrtFinv,
                f_at_lower=fvals_lo, f_at_upper=fvals_hi,
                cond_G=float(np.linalg.cond(G)),
                cond_Y=float(np.linalg.cond(Y)),
                cond_F=float(np.linalg.cond(F)),
            )
        )

    dims = EDADims(
        nu=spec.nu,
        mu_i=tuple(p.mu for p in per),
        delta_i=tuple(p.delta for p in per),
        d_i=tuple(p.d for p in per),
        kappa_i=tuple(p.kappa for p in per),
        varkappa_i=tuple(p.varkappa for p in per),
    )

    # xi0 selector: per interval sqrt(F)^-1 [O I] sqrt(Y), block diagonal
    sel = blkdiag(*[p.sqrtFinv @ p.sqrtY[p.delta :, :] for p in per])

    # transport rows for d/dt xi0 against [e(t); e(t-r_1..nu); xi1]
    nu, d, vk = dims.nu, dims.d, dims.varkappa
    upper = blkdiag(*[(p.sqrtFinv @ p.f_at_upper).reshape(p.d, 1) for p in per])
    lower = blkdiag(*[(p.sqrtFinv @ p.f_at_lower).reshape(p.d, 1) for p in per])
    deriv = blkdiag(*[p.sqrtFinv @ p.Mh @ p.sqrtY for p in per])
    bracket1 = np.hstack([upper, np.zeros((d, 1)), np.zeros((d, vk))])
    bracket2 = np.hstack([np.zeros((d, 1)), lower, deriv])
    transport = bracket1 - bracket2

    rhat = tuple(hi - lo for lo, hi in spec.intervals)
    return EDAData(
        spec=spec,
        delays=stored_delays,
        per_interval=tuple(per),
        dims=dims,
        sel_base=sel,
        transport_base=transport,
        rhat=rhat,
    )
