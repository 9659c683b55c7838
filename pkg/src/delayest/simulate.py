"""Fixed-step simulation of the delay plant, its output-injection estimator,
and the estimation-error dynamics.

Two integration routes are provided. The default ("coupled") advances the
plant together with the error dynamics, so the error series is unaffected by
the injection hooks by construction (they cancel exactly in the error
equation); the estimate is recovered as xhat = x - e. The literal route
("direct") advances plant and estimator exactly as written and differences
the results; it exists as an independent cross-check of the coupled route.

Integrator: classical RK4 on the lattice t0 + k h, where h must divide every
delay. Pointwise delayed values at the half-step stage times come from a
cubic Hermite read of the stored node values and node derivatives of the
aligned past lattice cell (delay lookups at the nodes themselves are exact
array reads). Distributed terms are composite-trapezoid sums over N_dd + 1
nodes per interval, evaluated at each stage time with linear interpolation
of the lattice history; quadrature nodes newer than the last completed node
are blended toward the current stage state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .basis import BasisSpec, EDAData, eval_basis
from .model import DelaySystem, EstimatorGains, InjectionHooks

__all__ = [
    "DisturbanceSpec",
    "SimConfig",
    "Trajectory",
    "simulate",
    "augmented_signals",
    "energy_ratio",
    "quadrature_weights",
    "series_names",
    "write_csv",
    "write_gnuplot",
]


_U_EMPTY = lambda theta: np.zeros(0)  # noqa: E731  (no control channel is modeled)


def quadrature_weights(nsub: int, delta: float) -> np.ndarray:
    """Closed composite Newton-Cotes weights on nsub uniform subintervals.

    Simpson where the panel count allows, with a 3/8 tail patching odd
    counts (both fourth order); a single subinterval falls back to the
    trapezoid rule.
    """
    if nsub < 1:
        raise ValueError("need at least one subinterval")
    w = np.zeros(nsub + 1)
    if nsub == 1:
        w[:] = delta / 2.0
    elif nsub % 2 == 0:
        w[0] = w[-1] = 1.0
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        w *= delta / 3.0
    elif nsub == 3:
        w[:] = np.array([1.0, 3.0, 3.0, 1.0]) * 3.0 * delta / 8.0
    else:
        w[: nsub - 2] += quadrature_weights(nsub - 3, delta)
        w[nsub - 3:] += np.array([1.0, 3.0, 3.0, 1.0]) * 3.0 * delta / 8.0
    return w


@dataclass(frozen=True)
class DisturbanceSpec:
    """Exogenous disturbance: none, a finite sine burst, or a callback."""

    kind: str = "none"
    amplitude: float = 1.0
    omega: float = 20.0 * math.pi
    t_on: float = 0.0
    t_off: float = 3.0
    fn: Callable | None = None

    def __post_init__(self):
        if self.kind not in ("none", "windowed_sine", "custom"):
            raise ValueError(f"unknown disturbance kind {self.kind!r}")
        if self.kind == "windowed_sine":
            # finite energy needs a finite window
            if not (np.isfinite(self.t_on) and np.isfinite(self.t_off)):
                raise ValueError("windowed_sine needs finite t_on/t_off")
            if self.t_off <= self.t_on:
                raise ValueError("windowed_sine needs t_off > t_on")
        if self.kind == "custom" and self.fn is None:
            raise ValueError("custom disturbance needs a callback")

    @classmethod
    def none(cls) -> "DisturbanceSpec":
        return cls(kind="none")

    @classmethod
    def windowed_sine(
        cls,
        amplitude: float = 1.0,
        omega: float = 20.0 * math.pi,
        t_on: float = 0.0,
        t_off: float = 3.0,
    ) -> "DisturbanceSpec":
        return cls(kind="windowed_sine", amplitude=amplitude, omega=omega,
                   t_on=t_on, t_off=t_off)

    @classmethod
    def custom(cls, fn: Callable) -> "DisturbanceSpec":
        return cls(kind="custom", fn=fn)

    def sample(self, t: float, q: int) -> np.ndarray:
        if self.kind == "none":
            return np.zeros(q)
        if self.kind == "windowed_sine":
            # window is half open: on at t_on, off again at t_off
            if self.t_on <= t < self.t_off:
                return np.full(q, self.amplitude * math.sin(self.omega * t))
            return np.zeros(q)
        return np.asarray(self.fn(t), dtype=float).reshape(q)

    def sample_grid(self, tgrid: np.ndarray, q: int) -> np.ndarray:
        if self.kind == "none":
            return np.zeros((len(tgrid), q))
        if self.kind == "windowed_sine":
            on = (tgrid >= self.t_on) & (tgrid < self.t_off)
            vals = np.where(on, self.amplitude * np.sin(self.omega * tgrid), 0.0)
            return np.repeat(vals[:, None], q, axis=1)
        return np.array([self.sample(t, q) for t in tgrid])


@dataclass(frozen=True)
class SimConfig:
    h: float = 0.002
    T: float = 20.0
    N_dd: int = 200
    disturbance: DisturbanceSpec = field(default_factory=DisturbanceSpec.none)
    plant_ic: object = None       # vector or callable on [-r_nu, 0]; None = zeros
    estimator_ic: object = None   # same convention; None = zeros
    estimator_noise_mode: str = "injected"
    hooks_enabled: bool = True
    route: str = "coupled"
    t0: float = 0.0

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("step h must be positive")
        if self.T < self.h:
            raise ValueError("horizon T must cover at least one step")
        if self.N_dd < 2:
            raise ValueError("need N_dd >= 2 quadrature panels per interval")
        if self.estimator_noise_mode not in ("ideal", "injected"):
            raise ValueError(
                f"unknown estimator_noise_mode {self.estimator_noise_mode!r}")
        if self.route not in ("coupled", "direct"):
            raise ValueError(f"unknown route {self.route!r}")


@dataclass(frozen=True)
class Trajectory:
    """Lattice series of one run. Optional augmented series are filled in by
    augmented_signals and are NaN before aug_start (one full delay span of
    computed history is required)."""

    t: np.ndarray
    x: np.ndarray
    xhat: np.ndarray
    e: np.ndarray
    y: np.ndarray
    yhat: np.ndarray
    z: np.ndarray
    zhat: np.ndarray
    zeta: np.ndarray
    w: np.ndarray
    cfg: SimConfig
    route: str
    diverged_at: float | None = None
    xi0: np.ndarray | None = None
    xi1: np.ndarray | None = None
    xi2: np.ndarray | None = None
    chi: np.ndarray | None = None
    omega: np.ndarray | None = None
    eta: np.ndarray | None = None
    vartheta: np.ndarray | None = None
    aug_start: int | None = None

    @property
    def n(self) -> int:
        return self.x.shape[1]


def _ic_fun(ic, dim: int) -> Callable:
    if ic is None:
        z = np.zeros(dim)
        return lambda theta: z
    if callable(ic):
        return lambda theta: np.asarray(ic(theta), dtype=float).reshape(dim)
    vec = np.asarray(ic, dtype=float).reshape(dim)
    return lambda theta: vec


def _interp_rows(arr: np.ndarray, pos: np.ndarray) -> np.ndarray:
    """Linear interpolation of arr (N, n) along axis 0 at float indices."""
    idx = np.clip(np.floor(pos).astype(int), 0, arr.shape[0] - 2)
    frac = (pos - idx)[..., None]
    return (1.0 - frac) * arr[idx] + frac * arr[idx + 1]


def _kernel_stack(coef: np.ndarray, rows: int, gvals: np.ndarray,
                  colrep: int) -> np.ndarray:
    """Contract a decomposed kernel coef (rows x kappa*colrep) with basis
    samples gvals (Nq x kappa) into per-node matrices (Nq x rows x colrep)."""
    kap = gvals.shape[1]
    c3 = coef.reshape(rows, kap, colrep)
    return np.einsum("rpc,jp->jrc", c3, gvals)


class _Interval:
    """Per-interval quadrature data and kernel samples."""

    def __init__(self, sys: DelaySystem, spec: BasisSpec,
                 gains: EstimatorGains, i: int, N_dd: int, h: float):
        lo, hi = spec.intervals[i]
        nq = N_dd + 1
        taus = np.linspace(lo, hi, nq)
        delta = (hi - lo) / N_dd
        wq = np.full(nq, delta)
        wq[0] = wq[-1] = delta / 2.0
        self.off = taus / h                      # float lattice offsets, <= 0
        gv = np.array([eval_basis(spec, i, t) for t in taus])
        n, m, l = sys.n, sys.m, sys.l
        wcol = wq[:, None, None]
        self.Kx = wcol * _kernel_stack(sys.Ahat[i], n, gv, n)
        self.Kz = wcol * _kernel_stack(sys.Chat[i], m, gv, n)
        Linj = wcol * _kernel_stack(gains.Lhat[i], n, gv, l)
        Lzinj = wcol * _kernel_stack(gains.Lzhat[i], m, gv, l)
        # error-dynamics kernels absorb the injection through the measurement
        self.Ke = self.Kx + Linj @ sys.Cmeas
        self.Kzeta = self.Kz + Lzinj @ sys.Cmeas
        self.Linj = Linj          # acts on the y - yhat history (direct route)
        self.Lzinj = Lzinj


def _dd_sum(kern: np.ndarray, vals: np.ndarray) -> np.ndarray:
    return np.einsum("jrc,jc->r", kern, vals)


class _Engine:
    def __init__(self, sys: DelaySystem, spec: BasisSpec,
                 gains: EstimatorGains, hooks: InjectionHooks, cfg: SimConfig):
        h = cfg.h
        for r in sys.delays:
            if abs(r - round(r / h) * h) > 1e-12:
                raise ValueError(
                    f"step {h} does not divide delay {r} (lattice alignment)")
        self.sys, self.spec, self.gains, self.cfg = sys, spec, gains, cfg
        self.hooks = hooks
        self.h = h
        self.steps = [int(round(r / h)) for r in sys.delays]
        self.H = self.steps[-1]
        self.K = int(round(cfg.T / h))
        self.N = self.H + self.K + 1
        self.ivals = [_Interval(sys, spec, gains, i, cfg.N_dd, h)
                      for i in range(sys.nu)]
        # half-lattice disturbance samples cover all RK4 stage times
        tha = cfg.t0 + 0.5 * h * np.arange(2 * self.K + 1)
        self.Wh = cfg.disturbance.sample_grid(tha, sys.q)
        self.ic_x = _ic_fun(cfg.plant_ic, sys.n)
        self.ic_xh = _ic_fun(cfg.estimator_ic, sys.n)
        self.ic_e = lambda th: self.ic_x(th) - self.ic_xh(th)
        self.Ae = [sys.A[i] + gains.L[i] @ sys.Cmeas for i in range(sys.nu + 1)]
        self.Cze = [sys.C[i] + gains.Lz[i] @ sys.Cmeas for i in range(sys.nu + 1)]
        if cfg.estimator_noise_mode == "injected":
            self.Dw_state = sys.D1 - sys.D3
            self.Dw_out = sys.D2 - sys.D4
        else:
            self.Dw_state = sys.D1
            self.Dw_out = sys.D2
        self.f3v = (np.asarray(hooks.f3(_U_EMPTY), dtype=float).reshape(sys.l)
                    if cfg.hooks_enabled else np.zeros(sys.l))

    # -- history access -------------------------------------------------

    def _fill_history(self, arr: np.ndarray, ic: Callable) -> None:
        for k in range(self.H + 1):
            arr[k] = ic((k - self.H) * self.h)

    def _delayed(self, X: np.ndarray, F: np.ndarray, cur: int, s_i: int,
                 c: float, ic: Callable):
        """Signal value at lattice position cur + c - s_i (c in {0, 1/2, 1})."""
        if c == 0.0:
            return X[cur - s_i]
        if c == 1.0:
            return X[cur - s_i + 1]
        j = cur - s_i
        if j + 0.5 <= self.H:
            return ic((j + 0.5 - self.H) * self.h)
        return 0.5 * (X[j] + X[j + 1]) + 0.125 * self.h * (F[j] - F[j + 1])

    def _dd_vals(self, X: np.ndarray, cur: int, c: float, xs: np.ndarray,
                 off: np.ndarray) -> np.ndarray:
        """History samples at the quadrature nodes of one interval, taken at
        stage time cur + c; nodes beyond the last completed node blend the
        lattice value with the current stage state."""
        pos = cur + c + off
        vals = _interp_rows(X, np.minimum(pos, cur))
        if c > 0.0:
            tail = pos > cur + 1e-9
            if np.any(tail):
                lam = ((pos[tail] - cur) / c)[:, None]
                vals[tail] = (1.0 - lam) * X[cur] + lam * xs
        return vals

    def _y_accessor(self, Y: np.ndarray, cur: int) -> Callable:
        h = self.h

        def y_t(theta):
            pos = cur + theta / h
            return _interp_rows(Y, np.maximum(np.asarray(pos, dtype=float), 0.0))

        return y_t

    # -- integration ----------------------------------------------------

    def run(self):
        sys, cfg = self.sys, self.cfg
        n, q = sys.n, sys.q
        N, H, K, h = self.N, self.H, self.K, self.h
        X = np.zeros((N, n))
        FX = np.zeros((N, n))
        self._fill_history(X, self.ic_x)
        direct = cfg.route == "direct"
        if direct:
            B = np.zeros((N, n))            # estimator state
            FB = np.zeros((N, n))
            YD = np.zeros((N, sys.l))       # y - yhat lattice series
            FYD = np.zeros((N, sys.l))
            self._fill_history(B, self.ic_xh)
            ic_yd = lambda th: sys.Cmeas @ self.ic_e(th)  # noqa: E731
            for k in range(H + 1):
                YD[k] = sys.Cmeas @ (X[k] - B[k])
        else:
            B = np.zeros((N, n))            # error state
            FB = np.zeros((N, n))
            self._fill_history(B, self.ic_e)
        Y = np.zeros((N, sys.l))
        for k in range(H + 1):
            Y[k] = sys.Cmeas @ X[k] + self.f3v
        hooks_on = cfg.hooks_enabled
        hk = self.hooks
        injected = cfg.estimator_noise_mode == "injected"
        last_ok = K

        for k in range(K):
            cur = H + k
            wk, wmid, wnext = self.Wh[2 * k], self.Wh[2 * k + 1], self.Wh[2 * k + 2]
            v1 = (np.asarray(hk.f1(_U_EMPTY, self._y_accessor(Y, cur)),
                             dtype=float).reshape(n)
                  if hooks_on else np.zeros(n))

            def rhs_x(c, xs, wv):
                out = sys.A[0] @ xs + sys.D1 @ wv + v1
                for i, s in enumerate(self.steps, start=1):
                    out += sys.A[i] @ self._delayed(X, FX, cur, s, c, self.ic_x)
                for itv in self.ivals:
                    out += _dd_sum(itv.Kx, self._dd_vals(X, cur, c, xs, itv.off))
                return out

            if direct:
                def rhs_b(c, xs, bs, wv):
                    yd_now = sys.Cmeas @ (xs - bs)
                    out = sys.A[0] @ bs - self.gains.L[0] @ yd_now + v1
                    if injected:
                        out = out + sys.D3 @ wv
                    for i, s in enumerate(self.steps, start=1):
                        out += sys.A[i] @ self._delayed(B, FB, cur, s, c, self.ic_xh)
                        out -= self.gains.L[i] @ self._delayed(
                            YD, FYD, cur, s, c, ic_yd)
                    for itv in self.ivals:
                        out += _dd_sum(itv.Kx,
                                       self._dd_vals(B, cur, c, bs, itv.off))
                        out -= _dd_sum(itv.Linj,
                                       self._dd_vals(YD, cur, c, yd_now, itv.off))
                    return out
            else:
                def rhs_b(c, xs, bs, wv):
                    out = self.Ae[0] @ bs + self.Dw_state @ wv
                    for i, s in enumerate(self.steps, start=1):
                        out += self.Ae[i] @ self._delayed(B, FB, cur, s, c, self.ic_e)
                    for itv in self.ivals:
                        out += _dd_sum(itv.Ke,
                                       self._dd_vals(B, cur, c, bs, itv.off))
                    return out

            x0, b0 = X[cur], B[cur]
            k1x = rhs_x(0.0, x0, wk)
            k1b = rhs_b(0.0, x0, b0, wk)
            FX[cur], FB[cur] = k1x, k1b
            if direct:
                FYD[cur] = sys.Cmeas @ (k1x - k1b)
            x2, b2 = x0 + 0.5 * h * k1x, b0 + 0.5 * h * k1b
            k2x = rhs_x(0.5, x2, wmid)
            k2b = rhs_b(0.5, x2, b2, wmid)
            x3, b3 = x0 + 0.5 * h * k2x, b0 + 0.5 * h * k2b
            k3x = rhs_x(0.5, x3, wmid)
            k3b = rhs_b(0.5, x3, b3, wmid)
            x4, b4 = x0 + h * k3x, b0 + h * k3b
            k4x = rhs_x(1.0, x4, wnext)
            k4b = rhs_b(1.0, x4, b4, wnext)
            with np.errstate(over="ignore", invalid="ignore"):
                xn = x0 + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
                bn = b0 + (h / 6.0) * (k1b + 2.0 * k2b + 2.0 * k3b + k4b)
            if not (np.all(np.isfinite(xn)) and np.all(np.isfinite(bn))):
                last_ok = k
                break
            X[cur + 1], B[cur + 1] = xn, bn
            Y[cur + 1] = sys.Cmeas @ xn + self.f3v
            if direct:
                YD[cur + 1] = Y[cur + 1] - (sys.Cmeas @ bn + self.f3v)

        return self._collect(X, B, Y, YD if direct else None, last_ok)

    # -- output assembly ------------------------------------------------

    def _node_dd(self, kern_list, series, upto: int) -> np.ndarray:
        """Vectorized node-time DD contraction over all reported nodes."""
        H = self.H
        ks = np.arange(upto + 1)
        out = np.zeros((upto + 1, kern_list[0].shape[1]))
        for itv, kern in zip(self.ivals, kern_list):
            pos = (H + ks)[:, None] + itv.off[None, :]
            vals = _interp_rows(series, pos)
            out += np.einsum("jrc,kjc->kr", kern, vals)
        return out

    def _collect(self, X, B, Y, YD, last_ok: int):
        sys, cfg = self.sys, self.cfg
        H, h = self.H, self.h
        ks = np.arange(last_ok + 1)
        t = cfg.t0 + h * ks
        w = self.Wh[::2][: last_ok + 1]
        hooks_on = cfg.hooks_enabled
        upto = last_ok

        def shifted(series, s):
            return series[H + ks - s]

        z = w @ sys.D2.T
        for i in range(sys.nu + 1):
            s = 0 if i == 0 else self.steps[i - 1]
            z += shifted(X, s) @ sys.C[i].T
        z += self._node_dd([iv.Kz for iv in self.ivals], X, upto)
        if hooks_on:
            f2 = np.array([
                np.asarray(self.hooks.f2(_U_EMPTY, self._y_accessor(Y, H + k)),
                           dtype=float).reshape(sys.m)
                for k in ks])
            z += f2

        if cfg.route == "direct":
            xhat = B[H:H + last_ok + 1]
            zhat = np.zeros_like(z)
            if cfg.estimator_noise_mode == "injected":
                zhat += w @ sys.D4.T
            for i in range(sys.nu + 1):
                s = 0 if i == 0 else self.steps[i - 1]
                zhat += shifted(B, s) @ sys.C[i].T
                zhat -= shifted(YD, s) @ self.gains.Lz[i].T
            zhat += self._node_dd([iv.Kz for iv in self.ivals], B, upto)
            zhat -= self._node_dd([iv.Lzinj for iv in self.ivals], YD, upto)
            if hooks_on:
                zhat += f2
            x = X[H:H + last_ok + 1]
            e = x - xhat
            zeta = z - zhat
        else:
            e = B[H:H + last_ok + 1]
            zeta = w @ self.Dw_out.T
            for i in range(sys.nu + 1):
                s = 0 if i == 0 else self.steps[i - 1]
                zeta += shifted(B, s) @ self.Cze[i].T
            zeta += self._node_dd([iv.Kzeta for iv in self.ivals], B, upto)
            x = X[H:H + last_ok + 1]
            xhat = x - e
            zhat = z - zeta

        y = Y[H:H + last_ok + 1]
        yhat = xhat @ sys.Cmeas.T + self.f3v
        diverged = None if last_ok == self.K else float(t[-1])
        return Trajectory(
            t=t, x=x, xhat=xhat, e=e, y=y, yhat=yhat, z=z, zhat=zhat,
            zeta=zeta, w=w, cfg=cfg, route=cfg.route, diverged_at=diverged,
        )


def simulate(
    sys: DelaySystem,
    spec: BasisSpec,
    gains: EstimatorGains | None = None,
    hooks: InjectionHooks | None = None,
    cfg: SimConfig | None = None,
) -> Trajectory:
    """Integrate the plant/estimator pair and return the lattice series."""
    cfg = cfg if cfg is not None else SimConfig()
    if gains is None:
        kappa_i = [sum(spec.dims(i)) for i in range(spec.nu)]
        gains = EstimatorGains.zeros(sys, kappa_i)
    if hooks is None:
        hooks = InjectionHooks.none(sys.n, sys.m, sys.l)
    return _Engine(sys, spec, gains, hooks, cfg).run()


def augmented_signals(traj: Trajectory, spec: BasisSpec,
                      eda: EDAData) -> Trajectory:
    """Fill the weighted integral series xi0/xi1/xi2 and the stacked signals
    chi, omega, eta and vartheta, from one delay span after the start."""
    h = traj.cfg.h
    n = traj.n
    H = int(round(eda.delays[-1] / h))
    K = len(traj.t) - 1
    if K < H:
        raise ValueError(
            f"trajectory spans {K} steps but one delay span needs {H}")
    steps = [int(round(r / h)) for r in eda.delays]
    ks = np.arange(H, K + 1)
    nk = len(ks)
    N_dd = traj.cfg.N_dd
    xi0_p, xi1_p, xi2_p = [], [], []
    for i, ie in enumerate(eda.per_interval):
        nq = N_dd + 1
        taus = np.linspace(ie.lo, ie.hi, nq)
        delta = (ie.hi - ie.lo) / N_dd
        # shared fourth-order weights: the xi0 = Ihat xi1 identity is exact
        # under any common rule, so only the absolute accuracy changes here
        wq = quadrature_weights(N_dd, delta)
        gv = np.array([eval_basis(spec, i, t) for t in taus])   # (nq, kappa)
        hv = gv[:, ie.mu:]
        fv = gv[:, ie.mu + ie.delta:]
        ev = gv[:, :ie.mu] - hv @ (ie.Gamma @ np.linalg.inv(ie.Y)).T
        pos = ks[:, None] + (taus / h)[None, :]
        vals = _interp_rows(traj.e, pos)                        # (nk, nq, n)

        def weighted(bas, wmat):
            acc = np.einsum("jp,kjn->kpn", wq[:, None] * bas, vals)
            return np.einsum("pq,kqn->kpn", wmat, acc).reshape(nk, -1)

        xi1_p.append(weighted(hv, ie.invsqrtY))
        if ie.mu:
            xi2_p.append(weighted(ev, np.linalg.inv(ie.sqrtE)))
        xi0_p.append(weighted(fv, ie.sqrtFinv))

    def assemble(parts, width):
        out = np.full((K + 1, width), np.nan)
        if parts:
            out[H:] = np.concatenate(parts, axis=1)
        else:
            out[H:] = 0.0
        return out

    dims = eda.dims
    xi0 = assemble(xi0_p, dims.d * n)
    xi1 = assemble(xi1_p, dims.varkappa * n)
    xi2 = assemble(xi2_p, dims.mu * n)
    chi = np.full((K + 1, dims.nu * n), np.nan)
    chi[H:] = np.concatenate([traj.e[ks - s] for s in steps], axis=1)
    omega = np.concatenate([traj.e, chi, xi1], axis=1)
    eta = np.concatenate([traj.e, xi0], axis=1)
    vartheta = np.concatenate([omega, xi2, traj.w], axis=1)
    return replace(traj, xi0=xi0, xi1=xi1, xi2=xi2, chi=chi, omega=omega,
                   eta=eta, vartheta=vartheta, aug_start=H)


def energy_ratio(traj: Trajectory, settle: float = 0.0) -> float | None:
    """Empirical sqrt(int |zeta|^2 / int |w|^2) from settle onward; None when
    the disturbance window carries no energy."""
    mask = traj.t >= traj.cfg.t0 + settle
    t = traj.t[mask]
    num = np.trapezoid(np.sum(traj.zeta[mask] ** 2, axis=1), t)
    den = np.trapezoid(np.sum(traj.w[mask] ** 2, axis=1), t)
    if den <= 0.0:
        return None
    return float(math.sqrt(num / den))


def _series_names(tag: str, dim: int) -> list:
    return [tag] if dim == 1 else [f"{tag}{i + 1}" for i in range(dim)]


def series_names(n: int, m: int, q: int) -> list:
    """Canonical CSV header for a trajectory with the given dimensions."""
    return (["t"]
            + [f"x{i + 1}" for i in range(n)]
            + [f"xhat{i + 1}" for i in range(n)]
            + [f"e{i + 1}" for i in range(n)]
            + _series_names("z", m) + _series_names("zhat", m)
            + _series_names("zeta", m) + _series_names("w", q))


def write_csv(traj: Trajectory, path) -> list:
    """Dump the reported series; returns the header names."""
    names = series_names(traj.n, traj.z.shape[1], traj.w.shape[1])
    data = np.column_stack([traj.t, traj.x, traj.xhat, traj.e,
                            traj.z, traj.zhat, traj.zeta, traj.w])
    np.savetxt(path, data, delimiter=",", header=",".join(names), comments="")
    return names


def write_gnuplot(traj: Trajectory, script_path, csv_path) -> None:
    """Emit a plain gnuplot script with the four standard panels."""
    n = traj.n
    m = traj.z.shape[1]
    cx = 2
    cxh = cx + n
    ce = cxh + n
    cz = ce + n
    czh = cz + m
    czeta = czh + m
    cw = czeta + m
    lines = [
        "set datafile separator ','",
        "set key top right",
        "set grid",
        "set multiplot layout 2,2 title 'estimator run'",
        "set title 'state and estimate'",
        "plot " + ", ".join(
            [f"'{csv_path}' using 1:{cx + i} with lines title 'x{i + 1}'"
             for i in range(n)]
            + [f"'{csv_path}' using 1:{cxh + i} with lines dashtype 2 "
               f"title 'xhat{i + 1}'" for i in range(n)]),
        "set title 'estimation error'",
        "plot " + ", ".join(
            f"'{csv_path}' using 1:{ce + i} with lines title 'e{i + 1}'"
            for i in range(n)),
        "set title 'output estimation'",
        "plot " + ", ".join(
            [f"'{csv_path}' using 1:{cz + i} with lines title 'z{i + 1}'"
             for i in range(m)]
            + [f"'{csv_path}' using 1:{czh + i} with lines dashtype 2 "
               f"title 'zhat{i + 1}'" for i in range(m)]
            + [f"'{csv_path}' using 1:{czeta + i} with lines title 'zeta{i + 1}'"
               for i in range(m)]),
        "set title 'disturbance'",
        f"plot '{csv_path}' using 1:{cw} with lines title 'w'",
        "unset multiplot",
    ]
    with open(script_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
