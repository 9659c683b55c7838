"""Synthesis pipeline: convex initialization, alternating refinement, and an
independent trajectory certificate.

Three layers, each usable on its own:

* synth_theorem2: one-shot convex synthesis through the common-multiplier
  change of variables (state gains recovered as L = W^-1 U).
* refine_algorithm1: warm start by alternating analysis/re-synthesis solves,
  then the anchored inner-approximation loop with a relative step-size stop
  rule. History carries one record per solve; the gamma sequence over loop
  records is non-increasing up to solver tolerance.
* certify_numeric: simulates trajectories of the error dynamics and checks
  dv/dt <= s(zeta, w) sample by sample, with v evaluated by quadrature from
  the stored history. This closes the loop against the matrix algebra: a bug
  anywhere upstream (Gramians, assembly, solver bridge) surfaces here as a
  positive residual.

A caution on gain magnitudes: when the measured output makes the estimation
error fully correctable (e.g. full state measurement), the optimal gain set
is a flat face and the interior-point center can park the state gains at
very large values. The certificate and spectral checks are unaffected, but
fixed-step simulation of such a closed loop may need a smaller step.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .basis import BasisSpec, EDAData
from .lmi import (
    assemble_core,
    build_inner_approx,
    build_theorem1,
    build_theorem2,
    gains_from_values,
)
from .model import DelaySystem, EstimatorGains, SupplyRate
from .sdp import SolverResult, compile_problem, solve
from .simulate import (
    DisturbanceSpec,
    SimConfig,
    augmented_signals,
    quadrature_weights,
    simulate,
)

__all__ = [
    "KFCertificate",
    "SynthesisResult",
    "SynthesisError",
    "CertificateReport",
    "certificate_margins",
    "analyze_gains",
    "synth_theorem2",
    "refine_algorithm1",
    "certify_numeric",
]


class SynthesisError(RuntimeError):
    """A subproblem came back unusable; diagnostics carry the solver stats
    and, when an iterate exists, the per-block constraint margins."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class KFCertificate:
    """Storage-function data: the quadratic couple on (e, xi0) plus the
    per-delay history weights."""

    P1: np.ndarray
    P2: np.ndarray
    P3: np.ndarray
    Q: tuple
    R: tuple


def _certificate_from_values(values: dict, nu: int,
                             P1=None, P2=None) -> KFCertificate:
    return KFCertificate(
        P1=np.asarray(values["P1"] if P1 is None else P1, dtype=float),
        P2=np.asarray(values["P2"] if P2 is None else P2, dtype=float),
        P3=np.asarray(values["P3"], dtype=float),
        Q=tuple(np.asarray(values[f"Q{i + 1}"], dtype=float) for i in range(nu)),
        R=tuple(np.asarray(values[f"R{i + 1}"], dtype=float) for i in range(nu)),
    )


def certificate_margins(
    sys: DelaySystem,
    eda: EDAData,
    supply: SupplyRate,
    gains: EstimatorGains,
    cert: KFCertificate,
    gamma: float | None,
) -> dict:
    """Eigenvalue margins of the re-assembled feasibility blocks.

    Positive numbers mean satisfied with that much room: smallest eigenvalue
    for the positive-definiteness blocks, minus the largest eigenvalue for
    the dissipation block.
    """
    core = assemble_core(
        sys, eda, gains,
        P1=cert.P1, P2=cert.P2, P3=cert.P3,
        Q=list(cert.Q), R=list(cert.R),
        supply=supply, gamma=gamma,
    )
    return {
        "storage_pd": float(np.linalg.eigvalsh(core["storage_pd"])[0]),
        "weights_Q_pd": float(np.linalg.eigvalsh(core["Qbig"])[0]),
        "weights_R_pd": float(np.linalg.eigvalsh(core["Rbig"])[0]),
        "dissipation": float(-np.linalg.eigvalsh(core["diss"])[-1]),
    }


@dataclass
class SynthesisResult:
    gains: EstimatorGains
    certificate: KFCertificate
    gamma: float | None
    history: list
    mode: str
    margins: dict | None = None
    warning: str | None = None

    def report(self) -> dict:
        """JSON-compatible run summary: per-solve records, margins, gains."""
        return {
            "mode": self.mode,
            "gamma": self.gamma,
            "warning": self.warning,
            "margins": self.margins,
            "history": [dict(rec) for rec in self.history],
            "gains": self.gains.to_doc(),
        }


def _gamma_of(res: SolverResult, supply: SupplyRate) -> float | None:
    if not supply.gamma_parametric:
        return None
    return float(np.asarray(res.values["gamma"]).ravel()[0])


def _record(phase: str, res: SolverResult, gamma, step=None, k=None) -> dict:
    rec = {
        "phase": phase,
        "gamma": gamma,
        "objective": res.objective,
        "status": res.status,
        "solver_iterations": res.stats.get("iterations"),
        "step_norm": step,
    }
    if "margins" in res.stats:
        rec["max_violation"] = float(max(res.stats["margins"].values()))
    if k is not None:
        rec["loop"] = k
    return rec


def _solve_with_retry(prob, tol: float):
    """One retry at 10x solver tolerance on a shaky status; interior-point
    jitter near an optimum often clears up with the looser target."""
    res = solve(compile_problem(prob), tol=tol)
    if res.status in ("numerical_trouble", "iteration_limit"):
        res = solve(compile_problem(prob), tol=10.0 * tol)
    return res


def synth_theorem2(
    sys: DelaySystem,
    eda: EDAData,
    supply: SupplyRate,
    alpha=None,
    delay_free: bool = False,
    solver_tol: float = 1e-8,
) -> SynthesisResult:
    """One-shot synthesis through the common-multiplier relaxation."""
    prob = build_theorem2(sys, eda, supply, alpha=alpha, delay_free=delay_free)
    res = _solve_with_retry(prob, solver_tol)
    if res.status != "optimal" or res.values is None:
        raise SynthesisError(
            f"multiplier synthesis failed: {res.status}",
            diagnostics={"status": res.status, **res.stats},
        )
    gains = gains_from_values(res.values, sys, eda, state_prefix="U",
                              W=res.values["W"])
    cert = _certificate_from_values(res.values, sys.nu)
    gamma = _gamma_of(res, supply)
    margins = certificate_margins(sys, eda, supply, gains, cert, gamma)
    return SynthesisResult(
        gains=gains, certificate=cert, gamma=gamma,
        history=[_record("multiplier", res, gamma)],
        mode="theorem2", margins=margins,
    )


def analyze_gains(
    sys: DelaySystem,
    eda: EDAData,
    supply: SupplyRate,
    gains: EstimatorGains,
    delay_free: bool = False,
    solver_tol: float = 1e-8,
) -> SynthesisResult:
    """Dissipativity analysis with every gain frozen: best certificate (and
    gamma, when parametric) for the given estimator."""
    res = _solve_with_retry(
        build_theorem1(sys, eda, supply, fix_gains=gains,
                       delay_free=delay_free),
        solver_tol,
    )
    if res.status != "optimal" or res.values is None:
        raise SynthesisError(
            f"analysis failed: {res.status}",
            diagnostics={"status": res.status, **res.stats},
        )
    cert = _certificate_from_values(res.values, sys.nu)
    gamma = _gamma_of(res, supply)
    margins = certificate_margins(sys, eda, supply, gains, cert, gamma)
    return SynthesisResult(
        gains=gains, certificate=cert, gamma=gamma,
        history=[_record("analysis", res, gamma)],
        mode="analysis", margins=margins,
    )


def _anchor_vec(P1, P2, gains: EstimatorGains) -> np.ndarray:
    return np.concatenate(
        [np.ravel(P1), np.ravel(P2)]
        + [np.ravel(g) for g in gains.L] + [np.ravel(g) for g in gains.Lhat]
        + [np.ravel(g) for g in gains.Lz] + [np.ravel(g) for g in gains.Lzhat]
    )


def refine_algorithm1(
    sys: DelaySystem,
    eda: EDAData,
    supply: SupplyRate,
    init: SynthesisResult,
    rho1: float = 0.01,
    rho2: float = 0.01,
    eps: float = 1e-3,
    max_loops: int = 50,
    gamma_weight: float = 1.0,
    delay_free: bool = False,
    solver_tol: float = 1e-8,
) -> SynthesisResult:
    """Alternating warm start plus the anchored inner-approximation loop.

    Phases: (i) analysis with the init gains frozen recovers a storage
    couple; (ii) re-synthesis with (P1, P2) frozen re-opens every gain;
    (iii) couple and gains become the anchor; (iv) anchored convex solves
    until the relative step norm of the stacked (P1, P2, gains) iterate
    drops below eps or max_loops is hit. A result whose mode is already
    "algorithm1" resumes at (iv) with its stored anchor, so a converged
    result passed back in runs zero further loop iterations.

    Any non-optimal subproblem aborts the pipeline: the last feasible
    iterate comes back with the warning field set (and a RuntimeWarning).
    """
    history: list = []
    warning = None

    if init.mode == "algorithm1":
        # resume: the stored iterate is already an anchor
        cert, gains, gamma = init.certificate, init.gains, init.gamma
        P1, P2 = cert.P1, cert.P2
        history = list(init.history)
        last_step = next(
            (rec["step_norm"] for rec in reversed(history)
             if rec.get("step_norm") is not None),
            np.inf,
        )
    else:
        gains = init.gains
        res = _solve_with_retry(
            build_theorem1(sys, eda, supply, fix_gains=gains,
                           delay_free=delay_free),
            solver_tol,
        )
        if res.status != "optimal" or res.values is None:
            warning = f"analysis phase failed ({res.status}); init returned"
            warnings.warn(warning, RuntimeWarning)
            return SynthesisResult(
                gains=init.gains, certificate=init.certificate,
                gamma=init.gamma, history=list(init.history),
                mode=init.mode, margins=init.margins, warning=warning,
            )
        cert = _certificate_from_values(res.values, sys.nu)
        P1, P2 = cert.P1, cert.P2
        gamma = _gamma_of(res, supply)
        history.append(_record("analysis", res, gamma))

        res = _solve_with_retry(
            build_theorem1(sys, eda, supply, fix_P=(P1, P2),
                           delay_free=delay_free),
            solver_tol,
        )
        if res.status != "optimal" or res.values is None:
            warning = f"re-synthesis phase failed ({res.status}); analysis iterate returned"
            warnings.warn(warning, RuntimeWarning)
            margins = certificate_margins(sys, eda, supply, gains, cert, gamma)
            return SynthesisResult(
                gains=gains, certificate=cert, gamma=gamma, history=history,
                mode="algorithm1", margins=margins, warning=warning,
            )
        gains = gains_from_values(res.values, sys, eda)
        cert = _certificate_from_values(res.values, sys.nu, P1=P1, P2=P2)
        gamma = _gamma_of(res, supply)
        history.append(_record("resynthesis", res, gamma))
        last_step = np.inf

    for k in range(1, max_loops + 1):
        if last_step < eps:
            break
        prob = build_inner_approx(
            sys, eda, supply, anchor=(P1, P2, gains),
            rho1=rho1, rho2=rho2, gamma_weight=gamma_weight,
            delay_free=delay_free,
        )
        res = _solve_with_retry(prob, solver_tol)
        if res.status != "optimal" or res.values is None:
            warning = (f"loop iteration {k} failed ({res.status}); "
                       "last feasible iterate returned")
            warnings.warn(warning, RuntimeWarning)
            break
        new_gains = gains_from_values(res.values, sys, eda)
        prev = _anchor_vec(P1, P2, gains)
        cur = _anchor_vec(res.values["P1"], res.values["P2"], new_gains)
        last_step = float(
            np.max(np.abs(cur - prev)) / (np.max(np.abs(prev)) + 1.0))
        gains = new_gains
        cert = _certificate_from_values(res.values, sys.nu)
        P1, P2 = cert.P1, cert.P2
        gamma = _gamma_of(res, supply)
        history.append(_record("loop", res, gamma, step=last_step, k=k))

    margins = certificate_margins(sys, eda, supply, gains, cert, gamma)
    return SynthesisResult(
        gains=gains, certificate=cert, gamma=gamma, history=history,
        mode="algorithm1", margins=margins, warning=warning,
    )


@dataclass
class CertificateReport:
    """Outcome of the trajectory cross-check of one synthesis result."""

    ok: bool
    max_residual: float          # worst v-dot - s over all samples
    tol: float                   # the tolerance that worst sample was held to
    worst: dict                  # {"trajectory", "t", "residual"}
    identity_xi0: float          # max |xi0 - Ihat xi1|, scale-relative
    identity_eta: float          # max |eta - S vartheta|, scale-relative
    trajectories: int
    details: list

    def to_doc(self) -> dict:
        return {
            "ok": bool(self.ok),
            "max_residual": float(self.max_residual),
            "tol": float(self.tol),
            "worst": dict(self.worst),
            "identity_xi0": float(self.identity_xi0),
            "identity_eta": float(self.identity_eta),
            "trajectories": int(self.trajectories),
            "details": [dict(d) for d in self.details],
        }


def _random_history(rng, n, scale):
    a = scale * rng.uniform(-0.5, 0.5, size=(3, n))

    def psi(theta, a=a):
        return a[0] + a[1] * theta + a[2] * np.sin(theta)

    return psi


def _random_disturbance(rng, q, scale):
    amp = scale * rng.uniform(0.2, 1.0, size=(q, 3))
    om = rng.uniform(0.3, 3.0, size=(q, 3))
    ph = rng.uniform(0.0, 2.0 * np.pi, size=(q, 3))
    if scale == 0.0:
        return DisturbanceSpec.none()

    def fn(t, amp=amp, om=om, ph=ph):
        return np.sum(amp * np.sin(om * t + ph), axis=1)

    return DisturbanceSpec.custom(fn)


def certify_numeric(
    sys: DelaySystem,
    basis: BasisSpec,
    eda: EDAData,
    supply: SupplyRate,
    result: SynthesisResult,
    trajectories: int = 10,
    seed: int = 0,
    h: float = 0.002,
    T: float = 4.0,
    N_dd: int = 600,
    tol_factor: float = 1e-4,
    ic_scale: float = 1.0,
    disturbance_scale: float = 1.0,
) -> CertificateReport:
    """Check the storage inequality dv/dt <= s along simulated trajectories.

    Even-numbered trajectories get a random three-harmonic disturbance,
    odd-numbered ones decay freely from a random history (these exercise the
    s <= 0 side). v is evaluated per sample by fourth-order quadrature over
    the stored history window plus the quadratic form in (e, xi0); dv/dt is
    a five-point central difference at the simulation step. The tolerance is
    tol_factor * (1 + max |sample|) per trajectory, with samples the dv/dt
    and s series. Also checks the linear identities xi0 = Ihat xi1 and
    eta = S vartheta on every sample.

    Returns a report; no exception on violation (ok goes False and worst
    carries the offending sample).
    """
    cert = result.certificate
    gamma = result.gamma
    if supply.gamma_parametric:
        if gamma is None:
            raise ValueError("parametric supply rate needs an achieved gamma")
        J1 = -gamma * np.eye(sys.m)
        J3 = gamma * np.eye(sys.q)
    else:
        J1, J3 = supply.J1, supply.J3
    Jcross = supply.Jtil.T @ np.linalg.solve(J1, supply.Jtil)

    rng = np.random.default_rng(seed)
    core = assemble_core(sys, eda, result.gains)
    S = core["S"]
    Ihat = eda.Ihat(sys.n)

    steps = [int(round(r / h)) for r in sys.delays]
    window = []
    for i, (r, s_i) in enumerate(zip(sys.delays, steps)):
        wq = quadrature_weights(s_i, h)
        taus = np.linspace(-r, 0.0, s_i + 1)
        window.append((s_i, wq, wq * (r + taus)))

    max_resid = -np.inf
    tol_at_worst = np.nan
    worst_excess = -np.inf
    worst = {}
    id_xi0 = 0.0
    id_eta = 0.0
    details = []
    ok = True

    for j in range(trajectories):
        cfg = SimConfig(
            h=h, T=T, N_dd=N_dd,
            disturbance=(_random_disturbance(rng, sys.q, disturbance_scale)
                         if j % 2 == 0 else DisturbanceSpec.none()),
            plant_ic=_random_history(rng, sys.n, ic_scale),
            estimator_ic=None,
            route="coupled", estimator_noise_mode="injected",
            hooks_enabled=False,
        )
        traj = simulate(sys, basis, result.gains, cfg=cfg)
        if traj.diverged_at is not None:
            ok = False
            details.append({"trajectory": j, "diverged_at": traj.diverged_at})
            continue
        traj = augmented_signals(traj, basis, eda)
        k0 = traj.aug_start
        e, xi0, xi1 = traj.e, traj.xi0, traj.xi1

        # quadratic part of v on the valid range
        ev, x0v = e[k0:], xi0[k0:]
        v = (np.einsum("kn,nm,km->k", ev, cert.P1, ev)
             + 2.0 * np.einsum("kn,nm,km->k", ev, cert.P2, x0v)
             + np.einsum("kn,nm,km->k", x0v, cert.P3, x0v))
        # history integrals, one sliding window per delay
        for i, (s_i, wq, wr) in enumerate(window):
            qv = np.einsum("kn,nm,km->k", e, cert.Q[i], e)
            rv = np.einsum("kn,nm,km->k", e, cert.R[i], e)
            qw = np.lib.stride_tricks.sliding_window_view(qv, s_i + 1)
            rw = np.lib.stride_tricks.sliding_window_view(rv, s_i + 1)
            # window ending at node k starts at k - s_i; valid from k0 on
            v += qw[k0 - s_i:] @ wq + rw[k0 - s_i:] @ wr

        vdot = (v[:-4] - 8.0 * v[1:-3] + 8.0 * v[3:-1] - v[4:]) / (12.0 * h)
        zv, wv = traj.zeta[k0 + 2:-2], traj.w[k0 + 2:-2]
        s_val = (np.einsum("km,mn,kn->k", zv, Jcross, zv)
                 + 2.0 * np.einsum("km,mn,kn->k", zv, supply.J2, wv)
                 + np.einsum("km,mn,kn->k", wv, J3, wv))
        resid = vdot - s_val
        scale = float(max(np.max(np.abs(vdot)), np.max(np.abs(s_val))))
        tol = tol_factor * (1.0 + scale)
        jmax = int(np.argmax(resid))
        details.append({
            "trajectory": j,
            "max_residual": float(resid[jmax]),
            "tol": tol,
            "scale": scale,
        })
        if resid[jmax] > tol:
            ok = False
        max_resid = max(max_resid, float(resid[jmax]))
        if float(resid[jmax]) - tol > worst_excess:
            worst_excess = float(resid[jmax]) - tol
            tol_at_worst = tol
            worst = {
                "trajectory": j,
                "t": float(traj.t[k0 + 2 + jmax]),
                "residual": float(resid[jmax]),
            }

        dxi = np.max(np.abs(xi0[k0:] - xi1[k0:] @ Ihat.T))
        sc = 1.0 + float(np.max(np.linalg.norm(xi0[k0:], axis=1)))
        id_xi0 = max(id_xi0, float(dxi) / sc)
        deta = np.max(np.abs(traj.eta[k0:] - traj.vartheta[k0:] @ S.T))
        sce = 1.0 + float(np.max(np.linalg.norm(traj.eta[k0:], axis=1)))
        id_eta = max(id_eta, float(deta) / sce)

    if id_xi0 > 1e-6 or id_eta > 1e-6:
        ok = False
    return CertificateReport(
        ok=ok,
        max_residual=max_resid,
        tol=tol_at_worst,
        worst=worst,
        identity_xi0=id_xi0,
        identity_eta=id_eta,
        trajectories=trajectories,
        details=details,
    )
